"""Generator and three-headed critic in the StarGAN layout.

The generator is a down-sample / residual / up-sample network that receives
the condition as two constant channels (the Cartesian view of the code)
stacked onto the RGB input. The critic is a strided convolution trunk without
normalization, branching at the last layer into a realness score, emotion
logits, and a 2-D coordinate estimate.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import torch
from torch import nn

SUPPORTED_SIZES = (16, 32, 64, 128)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    image_size: int = 128
    base_channels: int = 16
    num_residual_blocks: int = 2
    num_labels: int = 7
    seed: int = 0

    def __post_init__(self):
        if self.image_size not in SUPPORTED_SIZES:
            raise ConfigError(f"image_size must be one of {SUPPORTED_SIZES}, got {self.image_size}")
        if self.base_channels < 1:
            raise ConfigError("base_channels must be >= 1")
        if self.num_residual_blocks < 0:
            raise ConfigError("num_residual_blocks must be >= 0")
        if self.num_labels < 2:
            raise ConfigError("need at least two labels")

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> bytes:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).digest()


class DiscriminatorOutput(NamedTuple):
    src: torch.Tensor         # (B,)
    cls_logits: torch.Tensor  # (B, M)
    coor: torch.Tensor        # (B, 2)


class ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.main = nn.Sequential(
            nn.Conv2d(channels, channels, 3, 1, 1, bias=False),
            nn.InstanceNorm2d(channels, affine=True),
            nn.ReLU(inplace=True),
            nn.Conv2d(channels, channels, 3, 1, 1, bias=False),
            nn.InstanceNorm2d(channels, affine=True),
        )

    def forward(self, x):
        return x + self.main(x)


class Generator(nn.Module):
    # conv layers feeding InstanceNorm carry no bias: the norm would cancel it
    def __init__(self, config: ModelConfig):
        super().__init__()
        c = config.base_channels
        layers = [
            nn.Conv2d(3 + 2, c, 7, 1, 3, bias=False),
            nn.InstanceNorm2d(c, affine=True),
            nn.ReLU(inplace=True),
        ]
        for _ in range(2):
            layers += [
                nn.Conv2d(c, c * 2, 4, 2, 1, bias=False),
                nn.InstanceNorm2d(c * 2, affine=True),
                nn.ReLU(inplace=True),
            ]
            c *= 2
        layers += [ResidualBlock(c) for _ in range(config.num_residual_blocks)]
        for _ in range(2):
            layers += [
                nn.ConvTranspose2d(c, c // 2, 4, 2, 1, bias=False),
                nn.InstanceNorm2d(c // 2, affine=True),
                nn.ReLU(inplace=True),
            ]
            c //= 2
        layers += [nn.Conv2d(c, 3, 7, 1, 3, bias=False), nn.Tanh()]
        self.main = nn.Sequential(*layers)
        self.image_size = config.image_size

    def forward(self, images: torch.Tensor, coords: torch.Tensor) -> torch.Tensor:
        """Translate ``images`` (B, 3, S, S) towards the Cartesian ``coords`` (B, 2)."""
        _check_images(images, self.image_size)
        if coords.dim() != 2 or coords.shape != (images.shape[0], 2):
            raise ValueError(f"coords must have shape ({images.shape[0]}, 2), got {tuple(coords.shape)}")
        s = images.shape[-1]
        planes = coords.to(images.dtype)[:, :, None, None].expand(-1, -1, s, s)
        return self.main(torch.cat([images, planes], dim=1))


class Discriminator(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        c = config.base_channels
        # down-sample until the feature map is 4x4
        repeat = int(math.log2(config.image_size)) - 2
        layers = [nn.Conv2d(3, c, 4, 2, 1), nn.LeakyReLU(0.01)]
        for _ in range(repeat - 1):
            layers += [nn.Conv2d(c, c * 2, 4, 2, 1), nn.LeakyReLU(0.01)]
            c *= 2
        self.trunk = nn.Sequential(*layers)
        k = config.image_size // 2 ** repeat
        self.src_head = nn.Conv2d(c, 1, k, bias=False)
        self.cls_head = nn.Conv2d(c, config.num_labels, k, bias=False)
        self.coor_head = nn.Conv2d(c, 2, k, bias=False)
        self.image_size = config.image_size

    def forward(self, images: torch.Tensor) -> DiscriminatorOutput:
        _check_images(images, self.image_size)
        h = self.trunk(images)
        return DiscriminatorOutput(
            self.src_head(h).flatten(),
            self.cls_head(h).flatten(1),
            self.coor_head(h).flatten(1),
        )

    def critic(self, images: torch.Tensor) -> torch.Tensor:
        return self.forward(images).src


def _check_images(images: torch.Tensor, size: int) -> None:
    if images.dim() != 4 or images.shape[1:] != (3, size, size):
        raise ValueError(f"expected images of shape (B, 3, {size}, {size}), got {tuple(images.shape)}")


def build_models(config: ModelConfig) -> tuple[Generator, Discriminator]:
    """Seeded construction; leaves the global torch RNG untouched."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(config.seed)
        G = Generator(config)
        D = Discriminator(config)
    return G, D


def parameter_digest(*modules: nn.Module) -> str:
    h = hashlib.sha256()
    for module in modules:
        for name, p in module.state_dict().items():
            h.update(name.encode())
            h.update(p.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()
