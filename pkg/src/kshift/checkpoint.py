"""The "KSHIFT1" checkpoint container and model reconstruction.

Layout (little-endian):

    magic      7 bytes  b"KSHIFT1"
    header_len u32
    header     utf-8 JSON: mode, generator/discriminator configs, training
               digest, extra metadata, and a tensor manifest
               [{name, dtype, shape, offset, nbytes}] sorted by name
    payload    raw tensor bytes at the stated offsets

Alongside the byte format this module rebuilds runnable models from a
checkpoint: the switchable generator (single or split), the vanilla
generator pair, the supervised regressor, and any stored discriminators.
"""

from __future__ import annotations

import dataclasses
import hashlib
import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .discriminator import DiscriminatorConfig, PatchDiscriminator
from .errors import ContractError, FormatError, UnsupportedModeError
from .generator import (
    GeneratorConfig,
    PolyphaseUNet,
    SwitchableGenerator,
    build_single_generator,
    build_split_generator,
)
from .losses import SUPERVISED, THREE_DOMAIN, TWO_DOMAIN, VANILLA

MAGIC = b"KSHIFT1"
SHARP_TO_SOFT = "sharp_to_soft"
SOFT_TO_SHARP = "soft_to_sharp"


def config_digest(config_dict: dict) -> str:
    canonical = json.dumps(config_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


@dataclass
class CheckpointPayload:
    mode: str
    generator_config: dict
    discriminator_config: dict | None
    train_config_digest: str
    tensors: dict[str, np.ndarray]
    extra: dict = field(default_factory=dict)


def save_checkpoint(path, payload: CheckpointPayload) -> Path:
    names = sorted(payload.tensors)
    manifest = []
    offset = 0
    blobs = []
    for name in names:
        arr = np.ascontiguousarray(payload.tensors[name])
        blob = arr.astype(arr.dtype.newbyteorder("<")).tobytes()
        manifest.append(
            {
                "name": name,
                "dtype": arr.dtype.str.lstrip("<>=|"),
                "shape": list(arr.shape),
                "offset": offset,
                "nbytes": len(blob),
            }
        )
        blobs.append(blob)
        offset += len(blob)
    header = {
        "container": "KSHIFT1",
        "version": 1,
        "mode": payload.mode,
        "generator_config": payload.generator_config,
        "discriminator_config": payload.discriminator_config,
        "train_config_digest": payload.train_config_digest,
        "extra": payload.extra,
        "tensors": manifest,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for blob in blobs:
            fh.write(blob)
    tmp.replace(path)
    return path


def load_checkpoint(path) -> CheckpointPayload:
    buf = Path(path).read_bytes()
    if len(buf) < len(MAGIC) + 4 or buf[: len(MAGIC)] != MAGIC:
        raise FormatError("not a KSHIFT1 checkpoint (bad magic)")
    (header_len,) = struct.unpack_from("<I", buf, len(MAGIC))
    start = len(MAGIC) + 4
    if start + header_len > len(buf):
        raise FormatError("truncated checkpoint header")
    try:
        header = json.loads(buf[start : start + header_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unreadable checkpoint header: {exc}") from exc
    if header.get("container") != "KSHIFT1" or header.get("version") != 1:
        raise FormatError("unsupported checkpoint version")
    payload_start = start + header_len
    tensors = {}
    for entry in header["tensors"]:
        begin = payload_start + entry["offset"]
        end = begin + entry["nbytes"]
        if end > len(buf):
            raise FormatError(f"tensor {entry['name']} extends past end of file")
        dtype = np.dtype("<" + entry["dtype"])
        arr = np.frombuffer(buf[begin:end], dtype=dtype).reshape(entry["shape"])
        tensors[entry["name"]] = arr.copy()
    return CheckpointPayload(
        mode=header["mode"],
        generator_config=header["generator_config"],
        discriminator_config=header["discriminator_config"],
        train_config_digest=header["train_config_digest"],
        tensors=tensors,
        extra=header.get("extra", {}),
    )


# ---------------------------------------------------------------------------
# model bundles
# ---------------------------------------------------------------------------

def generator_config_from_dict(d: dict) -> GeneratorConfig:
    return GeneratorConfig(
        scale_levels=d["scale_levels"],
        base_channels=d["base_channels"],
        adain_block_ids=tuple(d["adain_block_ids"]),
        residual_output=d.get("residual_output", True),
        parameter_budget=d.get("parameter_budget"),
    )


def discriminator_config_from_dict(d: dict) -> DiscriminatorConfig:
    return DiscriminatorConfig(
        input_size=d["input_size"],
        output_size=d["output_size"],
        channels=tuple(d["channels"]),
        strides=tuple(d["strides"]),
        paddings=tuple(d["paddings"]),
    )


@dataclass
class ModelBundle:
    """Every trainable network for one training mode, with conversion routing."""

    mode: str
    generator_config: GeneratorConfig
    discriminator_config: DiscriminatorConfig | None = None
    switchable: SwitchableGenerator | None = None
    gen_to_sharp: PolyphaseUNet | None = None
    gen_to_soft: PolyphaseUNet | None = None
    supervised_net: PolyphaseUNet | None = None
    supervised_direction: str = SHARP_TO_SOFT
    discriminators: dict = field(default_factory=dict)

    def convert(self, x: torch.Tensor, beta, alpha=None) -> torch.Tensor:
        """Route a normalized (B,1,H,W) batch through the right generator."""
        if self.mode == TWO_DOMAIN:
            if alpha is not None:
                raise UnsupportedModeError(
                    "single-code model does not accept a source coordinate"
                )
            return self.switchable.convert(x, beta)
        if self.mode == THREE_DOMAIN:
            if alpha is None:
                raise UnsupportedModeError("split-code model requires alpha")
            return self.switchable.convert(x, beta, alpha)
        if self.mode == VANILLA:
            if alpha is not None:
                raise UnsupportedModeError("vanilla pair does not accept alpha")
            if beta == 0.0:
                return self.gen_to_sharp(x)
            if beta == 1.0:
                return self.gen_to_soft(x)
            raise UnsupportedModeError("vanilla pair only supports beta in {0, 1}")
        if self.mode == SUPERVISED:
            if alpha is not None:
                raise UnsupportedModeError("supervised model does not accept alpha")
            expected = 1.0 if self.supervised_direction == SHARP_TO_SOFT else 0.0
            if beta != expected:
                raise UnsupportedModeError(
                    f"supervised model only converts toward beta={expected}"
                )
            return self.supervised_net(x)
        raise UnsupportedModeError(f"unknown mode {self.mode}")

    def generator_modules(self) -> list[torch.nn.Module]:
        if self.mode in (TWO_DOMAIN, THREE_DOMAIN):
            return [self.switchable]
        if self.mode == VANILLA:
            return [self.gen_to_sharp, self.gen_to_soft]
        return [self.supervised_net]

    def generator_parameters(self):
        for module in self.generator_modules():
            yield from module.parameters()

    def discriminator_parameters(self):
        for d in self.discriminators.values():
            yield from d.parameters()

    def all_modules(self) -> dict[str, torch.nn.Module]:
        out = {}
        if self.switchable is not None:
            out["generator"] = self.switchable
        if self.gen_to_sharp is not None:
            out["gen_to_sharp"] = self.gen_to_sharp
            out["gen_to_soft"] = self.gen_to_soft
        if self.supervised_net is not None:
            out["supervised"] = self.supervised_net
        for key, d in self.discriminators.items():
            out[f"disc_{key}"] = d
        return out

    def state_tensors(self) -> dict[str, np.ndarray]:
        tensors = {}
        for prefix, module in self.all_modules().items():
            for name, value in module.state_dict().items():
                tensors[f"{prefix}.{name}"] = value.detach().cpu().numpy().copy()
        return tensors

    def load_tensors(self, tensors: dict[str, np.ndarray]):
        for prefix, module in self.all_modules().items():
            state = {}
            for name, current in module.state_dict().items():
                key = f"{prefix}.{name}"
                if key not in tensors:
                    raise FormatError(f"checkpoint is missing tensor {key}")
                state[name] = torch.as_tensor(tensors[key]).to(current.dtype)
            module.load_state_dict(state)

    def eval_mode(self):
        for module in self.all_modules().values():
            module.eval()
        return self


def build_models(
    mode: str,
    generator_config: GeneratorConfig,
    discriminator_config: DiscriminatorConfig | None = None,
    supervised_direction: str = SHARP_TO_SOFT,
) -> ModelBundle:
    if mode == TWO_DOMAIN:
        bundle = ModelBundle(
            mode,
            generator_config,
            discriminator_config,
            switchable=build_single_generator(generator_config),
        )
        bundle.discriminators = {
            "sharp": PatchDiscriminator(discriminator_config),
            "soft": PatchDiscriminator(discriminator_config),
        }
    elif mode == THREE_DOMAIN:
        bundle = ModelBundle(
            mode,
            generator_config,
            discriminator_config,
            switchable=build_split_generator(generator_config),
        )
        bundle.discriminators = {
            "sharp": PatchDiscriminator(discriminator_config),
            "soft": PatchDiscriminator(discriminator_config),
            "middle": PatchDiscriminator(discriminator_config),
        }
    elif mode == VANILLA:
        bundle = ModelBundle(
            mode,
            generator_config,
            discriminator_config,
            gen_to_sharp=PolyphaseUNet(generator_config),
            gen_to_soft=PolyphaseUNet(generator_config),
        )
        bundle.discriminators = {
            "sharp": PatchDiscriminator(discriminator_config),
            "soft": PatchDiscriminator(discriminator_config),
        }
    elif mode == SUPERVISED:
        if supervised_direction not in (SHARP_TO_SOFT, SOFT_TO_SHARP):
            raise ContractError(f"unknown direction {supervised_direction}")
        bundle = ModelBundle(
            mode,
            generator_config,
            None,
            supervised_net=PolyphaseUNet(generator_config),
            supervised_direction=supervised_direction,
        )
    else:
        raise ContractError(f"unknown mode {mode!r}")
    return bundle


def bundle_to_payload(
    bundle: ModelBundle, train_config_digest: str, extra: dict | None = None
) -> CheckpointPayload:
    merged_extra = {"supervised_direction": bundle.supervised_direction}
    if extra:
        merged_extra.update(extra)
    return CheckpointPayload(
        mode=bundle.mode,
        generator_config=dataclasses.asdict(bundle.generator_config),
        discriminator_config=(
            dataclasses.asdict(bundle.discriminator_config)
            if bundle.discriminator_config
            else None
        ),
        train_config_digest=train_config_digest,
        tensors=bundle.state_tensors(),
        extra=merged_extra,
    )


def bundle_from_payload(payload: CheckpointPayload) -> ModelBundle:
    gen_cfg = generator_config_from_dict(payload.generator_config)
    disc_cfg = (
        discriminator_config_from_dict(payload.discriminator_config)
        if payload.discriminator_config
        else None
    )
    bundle = build_models(
        payload.mode,
        gen_cfg,
        disc_cfg,
        supervised_direction=payload.extra.get("supervised_direction", SHARP_TO_SOFT),
    )
    bundle.load_tensors(payload.tensors)
    return bundle


def load_model(path) -> ModelBundle:
    return bundle_from_payload(load_checkpoint(path)).eval_mode()
