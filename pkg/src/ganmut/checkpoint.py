"""Versioned checkpoint container.

Layout (little endian)::

    magic   4 bytes   b"GMUT"
    version u16
    config  32 bytes  sha256 of the model config JSON
    step    u64
    length  u64       payload size
    digest  32 bytes  sha256 of the payload
    payload           torch-serialized state dicts
"""

from __future__ import annotations

import hashlib
import io
import os
import struct
from pathlib import Path

import torch

from .emotion_space import DirectionTable, EmotionLabel
from .networks import ConfigError, ModelConfig, build_models
from .trainer import TrainConfig, TrainState

MAGIC = b"GMUT"
VERSION = 1
_HEADER = struct.Struct("<4sH32sQQ32s")


class CheckpointError(ValueError):
    pass


def save_checkpoint(state: TrainState, path: str | os.PathLike) -> None:
    payload = {
        "model_config": state.model_config.to_dict(),
        "train_config": state.train_config.to_dict(),
        "G": state.G.state_dict(),
        "D": state.D.state_dict(),
        "table": {
            "labels": [int(l) for l in state.table.labels],
            "angles": state.table.angles.detach().clone(),
            "threshold": state.table.threshold,
        },
        "opt_G": state.opt_G.state_dict(),
        "opt_D": state.opt_D.state_dict(),
        "opt_table": state.opt_table.state_dict(),
        "rng": state.rng.get_state(),
        "train_labels": list(state.train_labels),
        "step": state.step,
    }
    buf = io.BytesIO()
    torch.save(payload, buf)
    body = buf.getvalue()
    header = _HEADER.pack(MAGIC, VERSION, state.model_config.digest(), state.step, len(body),
                          hashlib.sha256(body).digest())
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(body)
    os.replace(tmp, path)


def read_header(path: str | os.PathLike) -> dict:
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise CheckpointError(f"{path}: truncated header")
    magic, version, config_digest, step, length, digest = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version} (expected {VERSION})")
    return {"version": version, "config_digest": config_digest, "step": step,
            "length": length, "digest": digest}


def load_checkpoint(path: str | os.PathLike, image_size: int | None = None,
                    expected_config: ModelConfig | None = None) -> TrainState:
    """Rebuild a :class:`TrainState`.

    Raises:
        CheckpointError: bad magic, version, digest, or truncation.
        ConfigError: the stored model does not match ``image_size`` or
            ``expected_config``.
    """
    header = read_header(path)
    with open(path, "rb") as fh:
        fh.seek(_HEADER.size)
        body = fh.read()
    if len(body) != header["length"]:
        raise CheckpointError(f"{path}: truncated payload ({len(body)} of {header['length']} bytes)")
    if hashlib.sha256(body).digest() != header["digest"]:
        raise CheckpointError(f"{path}: payload digest mismatch")

    payload = torch.load(io.BytesIO(body), map_location="cpu", weights_only=True)
    model_config = ModelConfig(**payload["model_config"])
    if model_config.digest() != header["config_digest"]:
        raise CheckpointError(f"{path}: config digest mismatch")
    if image_size is not None and model_config.image_size != image_size:
        raise ConfigError(f"checkpoint holds a {model_config.image_size}px model, requested {image_size}px")
    if expected_config is not None and expected_config != model_config:
        raise ConfigError(f"checkpoint config {model_config} differs from {expected_config}")

    train_config = TrainConfig(**payload["train_config"])
    G, D = build_models(model_config)
    G.load_state_dict(payload["G"])
    D.load_state_dict(payload["D"])
    t = payload["table"]
    table = DirectionTable([EmotionLabel(l) for l in t["labels"]], t["angles"].tolist(), t["threshold"])

    tc = train_config
    opt_G = torch.optim.Adam(G.parameters(), lr=tc.learning_rate_G, betas=tc.betas)
    opt_D = torch.optim.Adam(D.parameters(), lr=tc.learning_rate_D, betas=tc.betas)
    opt_table = torch.optim.Adam(table.parameters(), lr=tc.learning_rate_table, betas=tc.betas)
    opt_G.load_state_dict(payload["opt_G"])
    opt_D.load_state_dict(payload["opt_D"])
    opt_table.load_state_dict(payload["opt_table"])
    rng = torch.Generator()
    rng.set_state(payload["rng"])
    return TrainState(model_config, train_config, G, D, table, opt_G, opt_D, opt_table, rng,
                      tuple(payload["train_labels"]), payload["step"])
