"""Full-slice inference: normalization, reflective padding and volume conversion."""

from __future__ import annotations

import numpy as np
import torch

from .checkpoint import ModelBundle
from .data import VolumeRecord, denormalize_hu, normalize_hu
from .errors import ContractError


def pad_to_multiple(image: np.ndarray, multiple: int) -> tuple[np.ndarray, tuple[int, int]]:
    """Reflect-pad a 2-D array so both dims divide `multiple`; returns original size."""
    h, w = image.shape
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph or pw:
        if ph >= h or pw >= w:
            raise ContractError("slice too small to pad reflectively")
        image = np.pad(image, ((0, ph), (0, pw)), mode="reflect")
    return image, (h, w)


def convert_slices(
    bundle: ModelBundle,
    slices_hu: np.ndarray,
    beta: float,
    alpha: float | None = None,
    batch_size: int = 4,
) -> np.ndarray:
    """Convert an (n,H,W) HU stack; output shape equals input shape."""
    stack = np.asarray(slices_hu)
    if stack.ndim == 2:
        stack = stack[None]
    multiple = 2 ** bundle.generator_config.scale_levels
    dtype = next(bundle.generator_parameters()).dtype
    out = np.empty(stack.shape, dtype=np.int16)
    with torch.no_grad():
        for start in range(0, stack.shape[0], batch_size):
            chunk = stack[start : start + batch_size]
            padded = []
            size = None
            for sl in chunk:
                p, size = pad_to_multiple(normalize_hu(sl), multiple)
                padded.append(p)
            x = torch.as_tensor(np.stack(padded), dtype=dtype)[:, None]
            y = bundle.convert(x, beta, alpha)
            arr = y[:, 0].cpu().double().numpy()[:, : size[0], : size[1]]
            out[start : start + batch_size] = denormalize_hu(arr)
    return out if np.ndim(slices_hu) == 3 else out[0]


def convert_volume(
    bundle: ModelBundle,
    record: VolumeRecord,
    beta: float,
    alpha: float | None = None,
) -> VolumeRecord:
    converted = convert_slices(bundle, record.slices, beta, alpha)
    label = f"converted_b{beta:g}" if alpha is None else f"converted_a{alpha:g}_b{beta:g}"
    return VolumeRecord(record.subject_id, label, converted, record.pixel_spacing)
