"""Joint adversarial optimization of generator, critic and direction table."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import torch

from .emotion_space import DirectionTable, EmotionLabel, codes_to_xy, init_directions, sample_conditions
from .losses import (
    LossBreakdown,
    LossWeights,
    adversarial_loss,
    classification_loss_fake,
    classification_loss_real,
    gradient_penalty,
    info_loss,
    interpolation_loss,
    reconstruction_loss,
    total_discriminator_loss,
    total_generator_loss,
)
from .networks import Discriminator, Generator, ModelConfig, build_models

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


class NonFiniteLossError(TrainingError):
    def __init__(self, term: str, value: float, step: int):
        super().__init__(f"non-finite loss term {term}={value} at step {step}")
        self.term, self.value, self.step = term, value, step


@dataclass(frozen=True)
class TrainConfig:
    total_steps: int = 10000
    n_critic: int = 5
    learning_rate_G: float = 1e-4
    learning_rate_D: float = 1e-4
    learning_rate_table: float = 1e-4
    betas: tuple[float, float] = (0.5, 0.999)
    weights: LossWeights = field(default_factory=LossWeights)
    batch_size: int = 16
    seed: int = 0
    checkpoint_every: int = 1000
    labeled_fraction: float = 0.5

    def __post_init__(self):
        if self.total_steps < 0:
            raise ValueError("total_steps must be >= 0")
        if self.n_critic < 1:
            raise ValueError("n_critic must be >= 1")
        for name in ("learning_rate_G", "learning_rate_D", "learning_rate_table"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be > 0, got {value}")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.checkpoint_every < 1:
            raise ValueError("checkpoint_every must be >= 1")
        if not 0.0 <= self.labeled_fraction <= 1.0:
            raise ValueError("labeled_fraction must lie in [0, 1]")
        if isinstance(self.weights, dict):
            object.__setattr__(self, "weights", LossWeights(**self.weights))
        object.__setattr__(self, "betas", tuple(self.betas))

    def to_dict(self) -> dict:
        return asdict(self)


def derive_seeds(seed: int) -> dict[str, int]:
    """Independent sub-seeds for model init, data order and condition sampling."""
    children = np.random.SeedSequence(seed).spawn(3)
    names = ("model", "data", "sampling")
    return {n: int(c.generate_state(1, dtype=np.uint32)[0]) for n, c in zip(names, children)}


@dataclass
class TrainState:
    model_config: ModelConfig
    train_config: TrainConfig
    G: Generator
    D: Discriminator
    table: DirectionTable
    opt_G: torch.optim.Optimizer
    opt_D: torch.optim.Optimizer
    opt_table: torch.optim.Optimizer
    rng: torch.Generator
    train_labels: tuple[int, ...]
    step: int = 0


def init_state(model_config: ModelConfig, train_config: TrainConfig,
               train_labels: Sequence[int] = tuple(EmotionLabel)) -> TrainState:
    """Fresh models, equally spaced directions, Adam optimizers.

    ``train_labels`` are the label ids present in the training data; labeled
    condition draws pick uniformly among them.
    """
    if model_config.num_labels != len(EmotionLabel):
        raise ValueError("the direction table covers the 7 canonical labels; num_labels must be 7")
    train_labels = tuple(sorted({int(l) for l in train_labels}))
    if not train_labels:
        raise ValueError("no training labels")
    G, D = build_models(model_config)
    table = init_directions()
    tc = train_config
    rng = torch.Generator().manual_seed(derive_seeds(tc.seed)["sampling"])
    return TrainState(
        model_config=model_config,
        train_config=tc,
        G=G,
        D=D,
        table=table,
        opt_G=torch.optim.Adam(G.parameters(), lr=tc.learning_rate_G, betas=tc.betas),
        opt_D=torch.optim.Adam(D.parameters(), lr=tc.learning_rate_D, betas=tc.betas),
        opt_table=torch.optim.Adam(table.parameters(), lr=tc.learning_rate_table, betas=tc.betas),
        rng=rng,
        train_labels=train_labels,
    )


def draw_codes(state: TrainState, batch_size: int) -> tuple[torch.Tensor, torch.Tensor, int]:
    """Labeled draws first, whole-disk draws after.

    Returns:
        ``(theta, rho, n_labeled)``; theta of labeled rows is differentiable
        with respect to the direction table.
    """
    n_labeled = int(round(state.train_config.labeled_fraction * batch_size))
    pool = torch.tensor(state.train_labels, dtype=torch.long)
    picks = pool[torch.randint(len(pool), (n_labeled,), generator=state.rng)]
    labels = torch.cat([picks, torch.full((batch_size - n_labeled,), -1, dtype=torch.long)])
    theta, rho = sample_conditions(state.table, labels, state.rng)
    return theta, rho, n_labeled


def _check_finite(terms: dict[str, torch.Tensor], step: int) -> None:
    for name, value in terms.items():
        v = float(value.detach())
        if not math.isfinite(v):
            raise NonFiniteLossError(name, v, step)


def train_discriminator_step(state: TrainState, real: torch.Tensor, labels: torch.Tensor) -> LossBreakdown:
    """One critic update; the generator and direction table are left untouched."""
    G, D, w = state.G, state.D, state.train_config.weights
    with torch.no_grad():
        theta, rho, _ = draw_codes(state, real.shape[0])
        xy = codes_to_xy(theta, rho).to(real.dtype)
        fake = G(real, xy)

    out_real = D(real)
    out_fake = D(fake)
    terms = {
        "adv": adversarial_loss(out_real.src, out_fake.src),
        "cls_real": classification_loss_real(out_real.cls_logits, labels),
        "info": info_loss(out_fake.coor, xy),
        "gp": gradient_penalty(D.critic, real, fake, state.rng),
    }
    terms["L_D"] = total_discriminator_loss(terms, w)
    _check_finite(terms, state.step)

    state.opt_D.zero_grad(set_to_none=True)
    terms["L_D"].backward()
    state.opt_D.step()
    return LossBreakdown.from_tensors(terms)


def train_generator_step(state: TrainState, real: torch.Tensor, labels: torch.Tensor) -> LossBreakdown:
    """One update of the generator and the direction angles against a frozen critic."""
    G, D, table, w = state.G, state.D, state.table, state.train_config.weights
    D.requires_grad_(False)
    try:
        theta, rho, n_labeled = draw_codes(state, real.shape[0])
        xy = codes_to_xy(theta, rho).to(real.dtype)
        fake = G(real, xy)
        out_fake = D(fake)
        with torch.no_grad():
            out_real = D(real)

        if n_labeled:
            cls_fake = classification_loss_fake(out_fake.cls_logits[:n_labeled], theta[:n_labeled],
                                                rho[:n_labeled], table)
        else:
            cls_fake = out_fake.cls_logits.sum() * 0.0
        terms = {
            "adv": adversarial_loss(out_real.src, out_fake.src),
            "cls_fake": cls_fake,
            "info": info_loss(out_fake.coor, xy),
            "rho": interpolation_loss(out_fake.coor, rho, table.threshold),
            "rec": reconstruction_loss(G, real, fake, out_real.coor),
        }
        terms["L_G"] = total_generator_loss(terms, w)
        _check_finite(terms, state.step)

        state.opt_G.zero_grad(set_to_none=True)
        state.opt_table.zero_grad(set_to_none=True)
        terms["L_G"].backward()
        state.opt_G.step()
        state.opt_table.step()
        table.wrap_()
    finally:
        D.requires_grad_(True)
    return LossBreakdown.from_tensors(terms)


@dataclass
class TrainTrace:
    """Per-step loss and direction history."""

    steps: list[int] = field(default_factory=list)
    epochs: list[int] = field(default_factory=list)
    d_losses: list[LossBreakdown] = field(default_factory=list)
    g_losses: list[Optional[LossBreakdown]] = field(default_factory=list)
    angles: list[dict[str, float]] = field(default_factory=list)

    def __len__(self):
        return len(self.steps)

    def append(self, step, epoch, d, g, angles):
        self.steps.append(step)
        self.epochs.append(epoch)
        self.d_losses.append(d)
        self.g_losses.append(g)
        self.angles.append(angles)

    def rows(self) -> Iterable[tuple[int, str, float]]:
        for step, epoch, d, g, angles in zip(self.steps, self.epochs, self.d_losses,
                                             self.g_losses, self.angles):
            yield step, "epoch", float(epoch)
            for name, value in d.items():
                yield step, f"D.{name}", value
            if g is not None:
                for name, value in g.items():
                    yield step, f"G.{name}", value
            for name, value in angles.items():
                yield step, f"angle.{name}", value

    def series(self, term: str) -> tuple[np.ndarray, np.ndarray]:
        """``(steps, values)`` for one CSV term name such as ``"D.info"``."""
        xs, ys = [], []
        for step, name, value in self.rows():
            if name == term:
                xs.append(step)
                ys.append(value)
        return np.asarray(xs), np.asarray(ys)

    def to_csv(self, path: Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["step", "term", "value"])
            for step, name, value in self.rows():
                writer.writerow([step, name, repr(value)])


def _angle_snapshot(table: DirectionTable) -> dict[str, float]:
    return {label.label_name: angle for label, angle in table.directions().items()}


def checkpoint_name(step: int) -> str:
    return f"ckpt_{step:07d}.gmut"


def train(config: TrainConfig, data, model_config: ModelConfig, out_dir: Path | None = None,
          state: TrainState | None = None) -> tuple[TrainState, TrainTrace]:
    """Run ``config.total_steps`` critic steps with a generator step every ``n_critic``.

    Args:
        data: re-iterable source; each pass yields ``(images, labels)`` batches
            for one epoch. It may expose ``label_ids`` (labels present).
        out_dir: where checkpoints and ``trace.csv`` go; nothing is written
            when omitted.
        state: resume from this state instead of starting fresh.

    Returns:
        The final state and the trace of this run.
    """
    from .checkpoint import save_checkpoint

    if state is None:
        labels = getattr(data, "label_ids", None) or tuple(EmotionLabel)
        state = init_state(model_config, config, labels)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

    trace = TrainTrace()
    batches = iter(data)
    epoch = 0
    first = next(batches, None)
    if first is None:
        raise ValueError("data loader yielded no batches")

    if out_dir is not None:
        save_checkpoint(state, out_dir / checkpoint_name(state.step))

    pending = first
    try:
        while state.step < config.total_steps:
            if pending is None:
                pending = next(batches, None)
                if pending is None:
                    epoch += 1
                    batches = iter(data)
                    pending = next(batches, None)
                    if pending is None:
                        raise ValueError("data loader yielded no batches")
            real, labels = pending
            pending = None

            d_terms = train_discriminator_step(state, real, labels)
            g_terms = None
            if (state.step + 1) % config.n_critic == 0:
                g_terms = train_generator_step(state, real, labels)
            state.step += 1
            trace.append(state.step, epoch, d_terms, g_terms, _angle_snapshot(state.table))

            if state.step % 100 == 0:
                log.info("step %d epoch %d L_D=%.4f%s", state.step, epoch, d_terms.L_D,
                         f" L_G={g_terms.L_G:.4f}" if g_terms else "")
            if out_dir is not None and state.step % config.checkpoint_every == 0:
                save_checkpoint(state, out_dir / checkpoint_name(state.step))
    finally:
        if out_dir is not None:
            trace.to_csv(out_dir / "trace.csv")

    if out_dir is not None and state.step % config.checkpoint_every != 0:
        save_checkpoint(state, out_dir / checkpoint_name(state.step))
    return state, trace
