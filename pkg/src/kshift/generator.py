"""Polyphase U-Net generator with per-block feature-statistics conditioning.

The single autoencoder backbone learns residuals; conditioning codes select
the target (and, in split mode, source) kernel domain. Pooling is the
lossless 2x2 polyphase rearrangement; unpooling is a kernel-2 stride-2
transposed convolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .adain import (
    EPS_STD,
    AdaINCode,
    BlockCode,
    DomainCoordinate,
    FeatureMap,
)
from .errors import ContractError, UnsupportedModeError

SINGLE = "single"
SPLIT = "split"


# ---------------------------------------------------------------------------
# polyphase rearrangement (numpy reference; the network uses the torch twins)
# ---------------------------------------------------------------------------

def polyphase_decompose(x: FeatureMap) -> FeatureMap:
    """Rearrange 2x2 neighborhoods into 4 channels: (H,W,C) -> (H/2,W/2,4C).

    out[i, j, 4c + k] = x[2i + di, 2j + dj, c] with k = 2*di + dj.
    """
    h, w, c = x.values.shape
    if h % 2 or w % 2:
        raise ContractError(f"spatial dims must be even, got {h}x{w}")
    v = x.values.reshape(h // 2, 2, w // 2, 2, c)
    v = v.transpose(0, 2, 4, 1, 3).reshape(h // 2, w // 2, 4 * c)
    return FeatureMap(v)


def polyphase_recompose(x: FeatureMap) -> FeatureMap:
    """Exact inverse of polyphase_decompose: (H,W,4C) -> (2H,2W,C)."""
    h, w, c4 = x.values.shape
    if c4 % 4:
        raise ContractError(f"channel count must be divisible by 4, got {c4}")
    c = c4 // 4
    v = x.values.reshape(h, w, c, 2, 2)
    v = v.transpose(0, 3, 1, 4, 2).reshape(2 * h, 2 * w, c)
    return FeatureMap(v)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def default_adain_sites(scale_levels: int) -> tuple[str, ...]:
    """Bottleneck plus every decoder convolution: 2*(levels+1) sites."""
    sites = ["bottleneck_conv0", "bottleneck_conv1"]
    for level in range(scale_levels - 1, -1, -1):
        sites += [f"dec{level}_conv0", f"dec{level}_conv1"]
    return tuple(sites)


@dataclass
class GeneratorConfig:
    scale_levels: int = 4
    base_channels: int = 64
    adain_block_ids: tuple[str, ...] = ()
    residual_output: bool = True
    parameter_budget: int | None = None

    def __post_init__(self):
        if self.scale_levels < 2:
            raise ContractError("scale_levels must be >= 2")
        if self.base_channels < 1:
            raise ContractError("base_channels must be >= 1")
        if not self.residual_output:
            raise ContractError("residual output is fixed on")
        if not self.adain_block_ids:
            self.adain_block_ids = default_adain_sites(self.scale_levels)
        self.adain_block_ids = tuple(self.adain_block_ids)
        sites = self.conv_sites()
        expected = 2 * (self.scale_levels + 1)
        if len(self.adain_block_ids) != expected:
            raise ContractError(
                f"expected {expected} conditioned sites for {self.scale_levels} "
                f"levels, got {len(self.adain_block_ids)}"
            )
        if len(set(self.adain_block_ids)) != len(self.adain_block_ids):
            raise ContractError("adain_block_ids contains duplicates")
        unknown = [b for b in self.adain_block_ids if b not in sites]
        if unknown:
            raise ContractError(f"unknown generator blocks: {unknown}")

    def level_channels(self, level: int) -> int:
        return self.base_channels * (2 ** level)

    def conv_sites(self) -> dict[str, int]:
        """All convolution sites and their output channel counts, in order."""
        sites: dict[str, int] = {}
        for level in range(self.scale_levels):
            c = self.level_channels(level)
            sites[f"enc{level}_conv0"] = c
            sites[f"enc{level}_conv1"] = c
        cb = self.level_channels(self.scale_levels)
        sites["bottleneck_conv0"] = cb
        sites["bottleneck_conv1"] = cb
        for level in range(self.scale_levels - 1, -1, -1):
            c = self.level_channels(level)
            sites[f"dec{level}_conv0"] = c
            sites[f"dec{level}_conv1"] = c
        return sites

    def conditioned_channels(self) -> dict[str, int]:
        sites = self.conv_sites()
        return {b: sites[b] for b in self.adain_block_ids}

    def site_group(self, site: str) -> str:
        """Which code conditions a site in split mode: source feeds the encoder
        path (up to and including the bottleneck), target feeds the decoder."""
        return "decoder" if site.startswith("dec") else "encoder"

    def half_parameter_variant(self) -> "GeneratorConfig":
        return GeneratorConfig(
            scale_levels=self.scale_levels,
            base_channels=max(1, round(self.base_channels / math.sqrt(2))),
            adain_block_ids=(),
            residual_output=True,
        )


# ---------------------------------------------------------------------------
# torch building blocks
# ---------------------------------------------------------------------------

def feature_stats(x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Per-sample, per-channel mean and floored population std of (B,C,H,W)."""
    mean = x.mean(dim=(2, 3), keepdim=True)
    std = x.std(dim=(2, 3), unbiased=False, keepdim=True).clamp_min(EPS_STD)
    return mean, std


def modulate(x: torch.Tensor, scale=None, shift=None) -> torch.Tensor:
    """Instance-normalize, then apply the (scale, shift) code if given."""
    mean, std = feature_stats(x)
    z = (x - mean) / std
    if scale is not None:
        z = scale.reshape(1, -1, 1, 1) * z
    if shift is not None:
        z = z + shift.reshape(1, -1, 1, 1)
    return z


class _ConvPair(nn.Module):
    """Two 3x3 convolutions, each followed by (conditional) normalization + ReLU."""

    def __init__(self, name: str, in_ch: int, out_ch: int):
        super().__init__()
        self.name = name
        self.conv0 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.conv1 = nn.Conv2d(out_ch, out_ch, 3, padding=1)

    def forward(self, x, codes):
        for i, conv in enumerate((self.conv0, self.conv1)):
            x = conv(x)
            code = codes.get(f"{self.name}_conv{i}") if codes else None
            if code is None:
                x = modulate(x)
            else:
                x = modulate(x, code[0], code[1])
            x = F.relu(x)
        return x


class PolyphaseUNet(nn.Module):
    """Residual U-Net over single-channel slices with polyphase pooling."""

    def __init__(self, config: GeneratorConfig):
        super().__init__()
        self.config = config
        levels = config.scale_levels

        self.enc = nn.ModuleList()
        in_ch = 1
        for level in range(levels):
            out_ch = config.level_channels(level)
            self.enc.append(_ConvPair(f"enc{level}", in_ch, out_ch))
            in_ch = 4 * out_ch  # after polyphase pooling
        cb = config.level_channels(levels)
        self.bottleneck = _ConvPair("bottleneck", in_ch, cb)

        self.up = nn.ModuleList()
        self.dec = nn.ModuleList()
        prev = cb
        for level in range(levels - 1, -1, -1):
            c = config.level_channels(level)
            self.up.append(nn.ConvTranspose2d(prev, c, 2, stride=2))
            self.dec.append(_ConvPair(f"dec{level}", 2 * c, c))
            prev = c
        self.final = nn.Conv2d(config.base_channels, 1, 3, padding=1)
        self._init_weights()

    def _init_weights(self):
        for m in self.modules():
            if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
                nn.init.normal_(m.weight, 0.0, 0.02)
                nn.init.zeros_(m.bias)
        # zero residual branch: the generator starts as the identity map
        nn.init.zeros_(self.final.weight)
        nn.init.zeros_(self.final.bias)

    def forward(self, x: torch.Tensor, codes=None) -> torch.Tensor:
        """codes: site-id -> (scale, shift) tensors; None means instance norm."""
        levels = self.config.scale_levels
        divisor = 2 ** levels
        if x.ndim != 4 or x.shape[1] != 1:
            raise ContractError(f"expected (B,1,H,W) input, got {tuple(x.shape)}")
        if x.shape[2] % divisor or x.shape[3] % divisor:
            raise ContractError(
                f"spatial dims must be divisible by {divisor}, got "
                f"{x.shape[2]}x{x.shape[3]}"
            )
        skips = []
        h = x
        for block in self.enc:
            h = block(h, codes)
            skips.append(h)
            h = F.pixel_unshuffle(h, 2)
        h = self.bottleneck(h, codes)
        for up, block, skip in zip(self.up, self.dec, reversed(skips)):
            h = up(h)
            h = block(torch.cat([h, skip], dim=1), codes)
        return x + self.final(h)

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


class CodeGenerator(nn.Module):
    """Learned-constant MLP emitting one (scale, shift) pair per conditioned site.

    A 128-vector embedding runs through four width-64 fully connected layers;
    each site has a linear shift head and a linear+ReLU scale head (variances
    cannot be negative).
    """

    EMBEDDING_SIZE = 128
    TRUNK_WIDTH = 64
    TRUNK_DEPTH = 4

    def __init__(self, site_channels: dict[str, int]):
        super().__init__()
        if not site_channels:
            raise ContractError("code generator needs at least one site")
        self.site_channels = dict(site_channels)
        self.embedding = nn.Parameter(torch.randn(self.EMBEDDING_SIZE))
        layers = []
        width = self.EMBEDDING_SIZE
        for _ in range(self.TRUNK_DEPTH):
            layers += [nn.Linear(width, self.TRUNK_WIDTH), nn.ReLU()]
            width = self.TRUNK_WIDTH
        self.trunk = nn.Sequential(*layers)
        self.scale_heads = nn.ModuleDict()
        self.shift_heads = nn.ModuleDict()
        for site, channels in self.site_channels.items():
            self.scale_heads[site] = nn.Linear(self.TRUNK_WIDTH, channels)
            self.shift_heads[site] = nn.Linear(self.TRUNK_WIDTH, channels)
        self._init_weights()

    def _init_weights(self):
        for head in self.scale_heads.values():
            nn.init.normal_(head.weight, 0.0, 0.02)
            nn.init.ones_(head.bias)  # learned code starts near the identity
        for head in self.shift_heads.values():
            nn.init.normal_(head.weight, 0.0, 0.02)
            nn.init.zeros_(head.bias)

    def forward(self) -> dict[str, tuple[torch.Tensor, torch.Tensor]]:
        h = self.trunk(self.embedding)
        out = {}
        for site in self.site_channels:
            scale = F.relu(self.scale_heads[site](h))
            out[site] = (scale, self.shift_heads[site](h))
        return out


@dataclass
class SplitCodeGenerators:
    """Independent source-domain and target-domain code generators."""

    encoder_codegen: CodeGenerator
    decoder_codegen: CodeGenerator

    def __post_init__(self):
        enc_params = {id(p) for p in self.encoder_codegen.parameters()}
        if any(id(p) in enc_params for p in self.decoder_codegen.parameters()):
            raise ContractError("split code generators must not share parameters")


def code_network_forward(net: CodeGenerator, config: GeneratorConfig) -> AdaINCode:
    """Emit the learned code as a plain-array AdaINCode (no gradients)."""
    expected = config.conditioned_channels()
    if net.site_channels != expected:
        raise ContractError(
            "code generator sites do not match the generator configuration"
        )
    with torch.no_grad():
        raw = net()
    blocks = []
    for site in config.adain_block_ids:
        scale, shift = raw[site]
        blocks.append(
            BlockCode(site, scale.double().numpy().copy(), shift.double().numpy().copy())
        )
    return AdaINCode(tuple(blocks))


def _mix(learned: tuple[torch.Tensor, torch.Tensor], beta: float):
    scale = ((1.0 - beta) + beta * learned[0]).clamp_min(0.0)
    shift = beta * learned[1]
    return scale, shift


class SwitchableGenerator(nn.Module):
    """The conditional generator G: single-code (two-domain) or split mode.

    In single mode ``convert(x, beta)`` evaluates G_beta; in split mode
    ``convert(x, beta, alpha)`` evaluates G_{alpha,beta} with the source code
    conditioning the encoder path and the target code the decoder path.
    """

    def __init__(self, config: GeneratorConfig, net: PolyphaseUNet,
                 codegen: CodeGenerator | None = None,
                 split: SplitCodeGenerators | None = None):
        super().__init__()
        if (codegen is None) == (split is None):
            raise ContractError("provide exactly one of codegen or split codegens")
        self.config = config
        self.net = net
        self.mode = SINGLE if codegen is not None else SPLIT
        self.codegen = codegen
        if split is not None:
            self.encoder_codegen = split.encoder_codegen
            self.decoder_codegen = split.decoder_codegen
        else:
            self.encoder_codegen = None
            self.decoder_codegen = None

    def codes_for(self, beta: float, alpha: float | None = None):
        beta = DomainCoordinate.coerce(beta).value
        if self.mode == SINGLE:
            if alpha is not None:
                raise UnsupportedModeError(
                    "single-code generator does not take a source coordinate"
                )
            learned = self.codegen()
            return {site: _mix(learned, beta) for site, learned in learned.items()}
        if alpha is None:
            raise ContractError("split mode requires a source coordinate alpha")
        alpha = DomainCoordinate.coerce(alpha).value
        enc_codes = self.encoder_codegen()
        dec_codes = self.decoder_codegen()
        codes = {}
        for site in self.config.adain_block_ids:
            if self.config.site_group(site) == "encoder":
                codes[site] = _mix(enc_codes[site], alpha)
            else:
                codes[site] = _mix(dec_codes[site], beta)
        return codes

    def convert(self, x: torch.Tensor, beta, alpha=None) -> torch.Tensor:
        return self.net(x, self.codes_for(beta, alpha))

    forward = convert


def make_switchable_generator(
    config: GeneratorConfig,
    codegens: CodeGenerator | SplitCodeGenerators,
) -> SwitchableGenerator:
    net = PolyphaseUNet(config)
    if isinstance(codegens, SplitCodeGenerators):
        return SwitchableGenerator(config, net, split=codegens)
    return SwitchableGenerator(config, net, codegen=codegens)


def build_single_generator(config: GeneratorConfig) -> SwitchableGenerator:
    return make_switchable_generator(config, CodeGenerator(config.conditioned_channels()))


def build_split_generator(config: GeneratorConfig) -> SwitchableGenerator:
    split = SplitCodeGenerators(
        CodeGenerator(config.conditioned_channels()),
        CodeGenerator(config.conditioned_channels()),
    )
    return make_switchable_generator(config, split)


def _code_to_tensors(code: AdaINCode, dtype, device):
    return {
        b.block_id: (
            torch.as_tensor(b.scale, dtype=dtype, device=device),
            torch.as_tensor(b.shift, dtype=dtype, device=device),
        )
        for b in code.blocks
    }


def generator_forward(
    net: PolyphaseUNet,
    image: FeatureMap,
    encoder_code: AdaINCode | None,
    decoder_code: AdaINCode,
) -> FeatureMap:
    """Run the backbone on one image with explicit conditioning codes.

    With no encoder code (two-domain mode) the decoder code conditions every
    site; otherwise encoder-path sites read from the encoder code.
    """
    if image.channels != 1:
        raise ContractError("generator expects single-channel images")
    config = net.config
    dtype = next(net.parameters()).dtype
    dec = _code_to_tensors(decoder_code, dtype, "cpu")
    enc = _code_to_tensors(encoder_code, dtype, "cpu") if encoder_code else None
    codes = {}
    for site in config.adain_block_ids:
        source = dec
        if enc is not None and config.site_group(site) == "encoder":
            source = enc
        if site not in source:
            raise ContractError(f"code is missing conditioned site {site}")
        cs = config.conditioned_channels()[site]
        if source[site][0].numel() != cs:
            raise ContractError(f"code for {site} has wrong channel count")
        codes[site] = source[site]
    x = torch.as_tensor(image.values[:, :, 0], dtype=dtype)[None, None]
    with torch.no_grad():
        y = net(x, codes)
    return FeatureMap(y[0, 0].double().numpy()[:, :, None])
