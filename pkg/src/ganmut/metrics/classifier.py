"""Emotion classifier interface and a small reference implementation.

Any object with ``classify(images) -> (B, M) probabilities`` and
``extract_features(images) -> (B, d)`` can back the FED and smoothness
metrics. Images are float tensors (B, 3, S, S) in [-1, 1].
"""

from __future__ import annotations

import importlib
import importlib.util
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

FEATURE_LAYERS = ("penultimate", "conv")


@runtime_checkable
class EmotionClassifier(Protocol):
    def classify(self, images: torch.Tensor) -> np.ndarray: ...

    def extract_features(self, images: torch.Tensor) -> np.ndarray: ...


def extract_in_batches(fn, images, batch_size: int = 64) -> np.ndarray:
    chunks = [np.asarray(fn(images[i:i + batch_size]), dtype=np.float64)
              for i in range(0, len(images), batch_size)]
    return np.concatenate(chunks, axis=0)


class TinyEmotionNet(nn.Module):
    def __init__(self, num_labels: int = 7, width: int = 16):
        super().__init__()
        self.conv = nn.Sequential(
            nn.Conv2d(3, width, 3, 2, 1), nn.LeakyReLU(0.1),
            nn.Conv2d(width, width * 2, 3, 2, 1), nn.LeakyReLU(0.1),
        )
        self.dense = nn.Sequential(nn.Linear(width * 2, width * 4), nn.ReLU())
        self.out = nn.Linear(width * 4, num_labels)

    def features(self, x):
        conv = self.conv(x).mean(dim=(2, 3))
        return conv, self.dense(conv)

    def forward(self, x):
        return self.out(self.features(x)[1])


class ReferenceClassifier:
    """Seeded :class:`TinyEmotionNet` behind the classifier interface."""

    def __init__(self, num_labels: int = 7, width: int = 16, feature_layer: str = "penultimate", seed: int = 0):
        if feature_layer not in FEATURE_LAYERS:
            raise ValueError(f"feature_layer must be one of {FEATURE_LAYERS}")
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            self.net = TinyEmotionNet(num_labels, width)
        self.feature_layer = feature_layer
        self.hparams = {"num_labels": num_labels, "width": width, "seed": seed}

    @torch.no_grad()
    def classify(self, images):
        self.net.eval()
        logits = self.net(torch.as_tensor(images, dtype=torch.float32))
        return F.softmax(logits.double(), dim=1).numpy()

    @torch.no_grad()
    def extract_features(self, images):
        self.net.eval()
        conv, dense = self.net.features(torch.as_tensor(images, dtype=torch.float32))
        return (dense if self.feature_layer == "penultimate" else conv).double().numpy()

    def fit(self, loader, epochs: int = 10, lr: float = 1e-3) -> list[float]:
        """Plain cross-entropy training; returns the mean loss of each epoch."""
        opt = torch.optim.Adam(self.net.parameters(), lr=lr)
        history = []
        self.net.train()
        for _ in range(epochs):
            total, count = 0.0, 0
            for images, labels in loader:
                loss = F.cross_entropy(self.net(images), labels)
                opt.zero_grad()
                loss.backward()
                opt.step()
                total += float(loss.detach()) * len(labels)
                count += len(labels)
            history.append(total / max(count, 1))
        return history

    def save(self, path) -> None:
        torch.save({"hparams": self.hparams, "feature_layer": self.feature_layer,
                    "state": self.net.state_dict()}, path)

    @classmethod
    def load(cls, path, feature_layer: str | None = None) -> "ReferenceClassifier":
        blob = torch.load(path, map_location="cpu", weights_only=True)
        clf = cls(**blob["hparams"], feature_layer=feature_layer or blob["feature_layer"])
        clf.net.load_state_dict(blob["state"])
        return clf


def load_classifier(source: str, feature_layer: str | None = None) -> EmotionClassifier:
    """Resolve a classifier plugin.

    ``source`` is either a ``.pt`` file written by :meth:`ReferenceClassifier.save`
    or ``module:factory`` / ``path/to/file.py:factory``; the factory is called
    with ``feature_layer`` when one is given.
    """
    if source.endswith(".pt"):
        return ReferenceClassifier.load(source, feature_layer)
    target, sep, attr = source.rpartition(":")
    if not sep or not target:
        raise ValueError(f"classifier source {source!r} is neither a .pt file nor module:factory")
    if target.endswith(".py"):
        mod_spec = importlib.util.spec_from_file_location(Path(target).stem, target)
        if mod_spec is None or mod_spec.loader is None:
            raise ValueError(f"cannot import {target}")
        module = importlib.util.module_from_spec(mod_spec)
        mod_spec.loader.exec_module(module)
    else:
        module = importlib.import_module(target)
    factory = getattr(module, attr)
    clf = factory(feature_layer=feature_layer) if feature_layer else factory()
    if not isinstance(clf, EmotionClassifier):
        raise TypeError(f"{source} did not produce an object with classify/extract_features")
    return clf
