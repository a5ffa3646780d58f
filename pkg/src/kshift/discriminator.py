"""PatchGAN discriminator: five 5x5 convolutions scoring local patches."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ContractError

# (stride, padding) per layer; 128 -> 64 -> 32 -> 28 -> 24 -> 24
DEFAULT_STRIDES = (2, 2, 1, 1, 1)
DEFAULT_PADDINGS = (2, 2, 0, 0, 2)
DEFAULT_CHANNELS = (64, 128, 256, 256, 1)
KERNEL = 5


def _trace(size: int, strides, paddings) -> int:
    for s, p in zip(strides, paddings):
        size = (size + 2 * p - KERNEL) // s + 1
    return size


@dataclass
class DiscriminatorConfig:
    input_size: int = 128
    output_size: int = 24
    channels: tuple[int, ...] = DEFAULT_CHANNELS
    strides: tuple[int, ...] = DEFAULT_STRIDES
    paddings: tuple[int, ...] = DEFAULT_PADDINGS

    def __post_init__(self):
        self.channels = tuple(self.channels)
        self.strides = tuple(self.strides)
        self.paddings = tuple(self.paddings)
        if not (len(self.channels) == len(self.strides) == len(self.paddings) == 5):
            raise ContractError("discriminator has exactly 5 convolution layers")
        if any(s not in (1, 2) for s in self.strides):
            raise ContractError("strides must be 1 or 2")
        if self.channels[-1] != 1:
            raise ContractError("last layer must emit a single score channel")
        traced = _trace(self.input_size, self.strides, self.paddings)
        if traced != self.output_size:
            raise ContractError(
                f"layer trace maps {self.input_size} to {traced}, "
                f"declared output_size is {self.output_size}"
            )
        if self.output_size < 1:
            raise ContractError("output size collapsed to nothing")

    @classmethod
    def for_patch(cls, patch_size: int, channels=DEFAULT_CHANNELS) -> "DiscriminatorConfig":
        out = _trace(patch_size, DEFAULT_STRIDES, DEFAULT_PADDINGS)
        return cls(input_size=patch_size, output_size=out, channels=channels)


class PatchDiscriminator(nn.Module):
    """Maps an input_size^2 patch to an output_size^2 real/fake score map."""

    def __init__(self, config: DiscriminatorConfig):
        super().__init__()
        self.config = config
        layers = []
        in_ch = 1
        for out_ch, stride, pad in zip(config.channels, config.strides, config.paddings):
            layers.append(nn.Conv2d(in_ch, out_ch, KERNEL, stride=stride, padding=pad))
            in_ch = out_ch
        self.convs = nn.ModuleList(layers)
        for m in self.convs:
            nn.init.normal_(m.weight, 0.0, 0.02)
            nn.init.zeros_(m.bias)

    def forward(self, patch: torch.Tensor) -> torch.Tensor:
        size = self.config.input_size
        if patch.ndim != 4 or patch.shape[1] != 1:
            raise ContractError(f"expected (B,1,H,W) patches, got {tuple(patch.shape)}")
        if patch.shape[2] != size or patch.shape[3] != size:
            raise ContractError(
                f"expected {size}x{size} patches, got {patch.shape[2]}x{patch.shape[3]}"
            )
        h = patch
        for conv in self.convs[:-1]:
            h = F.leaky_relu(conv(h), 0.2)
        return self.convs[-1](h)


def discriminator_forward(d: PatchDiscriminator, patch: torch.Tensor) -> torch.Tensor:
    out = d(patch)
    if not torch.isfinite(out).all():
        raise ContractError("discriminator produced non-finite scores")
    return out
