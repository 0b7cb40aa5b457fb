"""Loss terms for joint training of the generator, critic and direction table.

Each term works on critic head outputs that the caller has already computed,
so one forward pass can feed several terms. ``L_D`` adds the gradient
penalty (WGAN-GP convention) and is minimized by the critic; ``L_G`` is
minimized by the generator and the direction table.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Callable, Optional

import torch
import torch.nn.functional as F

from .emotion_space import DEFAULT_THRESHOLD, DirectionTable, labels_for_codes

TERMS = ("adv", "cls_real", "cls_fake", "info", "rho", "rec", "gp")


@dataclass(frozen=True)
class LossWeights:
    lambda_cls: float = 1.0
    lambda_rec: float = 10.0
    lambda_gp: float = 10.0
    lambda_info_D: float = 1.0
    lambda_info_G: float = 1.0
    lambda_rho: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"{f.name} must be finite and >= 0, got {value}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LossBreakdown:
    """Scalar value of each computed term; terms a step does not use stay None."""

    adv: Optional[float] = None
    cls_real: Optional[float] = None
    cls_fake: Optional[float] = None
    info: Optional[float] = None
    rho: Optional[float] = None
    rec: Optional[float] = None
    gp: Optional[float] = None
    L_D: Optional[float] = None
    L_G: Optional[float] = None

    def items(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if value is not None:
                yield f.name, value

    @classmethod
    def from_tensors(cls, terms: dict[str, torch.Tensor]) -> "LossBreakdown":
        return cls(**{k: float(v.detach()) for k, v in terms.items()})


def adversarial_loss(src_real: torch.Tensor, src_fake: torch.Tensor) -> torch.Tensor:
    """Wasserstein estimate ``E[D_src(real)] - E[D_src(fake)]``."""
    return src_real.mean() - src_fake.mean()


def classification_loss_real(cls_logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    return F.cross_entropy(cls_logits, labels.long())


def classification_loss_fake(cls_logits: torch.Tensor, theta: torch.Tensor, rho: torch.Tensor,
                             table: DirectionTable) -> torch.Tensor:
    """Cross entropy against the label each generating code decodes to.

    Codes below the neutral threshold target neutral; others target the
    nearest learned direction.
    """
    targets = labels_for_codes(table, theta, rho).to(cls_logits.device)
    return F.cross_entropy(cls_logits, targets)


def info_loss(coor: torch.Tensor, target_xy: torch.Tensor) -> torch.Tensor:
    """Mean squared Euclidean distance between the coordinate head and the codes."""
    return ((coor - target_xy.to(coor.dtype)) ** 2).sum(dim=1).mean()


def interpolation_loss(coor: torch.Tensor, rho: torch.Tensor,
                       threshold: float = DEFAULT_THRESHOLD) -> torch.Tensor:
    """Squared radius error, averaged over samples with ``rho > threshold``.

    The estimated radius is the norm of the coordinate head output. An empty
    mask gives exactly zero.
    """
    mask = rho > threshold
    if not bool(mask.any()):
        return coor.sum() * 0.0
    rho_hat = coor[mask].norm(dim=1)
    return ((rho_hat - rho[mask].to(coor.dtype)) ** 2).mean()


def reconstruction_loss(G: Callable, real: torch.Tensor, fake: torch.Tensor,
                        coor_real: torch.Tensor) -> torch.Tensor:
    """L1 cycle error: translate ``fake`` back with the critic's estimate of the real code."""
    cycled = G(fake, coor_real)
    return (real - cycled).abs().mean()


def gradient_penalty(critic: Callable[[torch.Tensor], torch.Tensor], real: torch.Tensor,
                     fake: torch.Tensor, generator: torch.Generator | None = None) -> torch.Tensor:
    """``E[(||grad D_src(x_hat)||_2 - 1)^2]`` on random real/fake interpolates."""
    eps = torch.rand(real.shape[0], 1, 1, 1, generator=generator, dtype=real.dtype)
    x_hat = (eps * real.detach() + (1 - eps) * fake.detach()).requires_grad_(True)
    out = critic(x_hat)
    grad = None
    if out.requires_grad:
        (grad,) = torch.autograd.grad(out.sum(), x_hat, create_graph=True, allow_unused=True)
    if grad is None:
        # critic ignores its input
        grad = torch.zeros_like(x_hat)
    norm = grad.flatten(1).norm(dim=1)
    return ((norm - 1) ** 2).mean()


def total_discriminator_loss(terms: dict, w: LossWeights):
    return -terms["adv"] + w.lambda_cls * terms["cls_real"] + w.lambda_info_D * terms["info"] \
        + w.lambda_gp * terms["gp"]


def total_generator_loss(terms: dict, w: LossWeights):
    return terms["adv"] + w.lambda_cls * terms["cls_fake"] + w.lambda_rec * terms["rec"] \
        + w.lambda_info_G * terms["info"] + w.lambda_rho * terms["rho"]

