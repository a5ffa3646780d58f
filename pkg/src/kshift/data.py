"""Volume I/O, HU normalization, patch sampling and the synthetic phantom set.

Volumes are stacks of signed 16-bit HU slices stored in the little-endian
"KSVOL1" container:

    magic   6 bytes  b"KSVOL1"
    version u16      currently 1
    subject_id       u16 length + utf-8 bytes
    kernel_label     u16 length + utf-8 bytes
    n, H, W          u32 each
    spacing          2 x f64 (mm)
    payload          n*H*W int16 HU values, row-major

The phantom generator renders paired sharp / middle / soft stacks from one
base anatomy per slice so that quantitative evaluation has ground truth.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import ContractError, FormatError, InvalidInputError

MAGIC = b"KSVOL1"
VERSION = 1
HU_MIN = -1024
HU_MAX = 3071
HU_RANGE = HU_MAX - HU_MIN  # 4095

SHARP = "sharp"
MIDDLE = "middle"
SOFT = "soft"
KERNELS = (SHARP, MIDDLE, SOFT)


@dataclass
class VolumeRecord:
    subject_id: str
    kernel_label: str
    slices: np.ndarray  # (n, H, W) int16 HU
    pixel_spacing: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        self.slices = np.asarray(self.slices)
        if self.slices.ndim != 3:
            raise InvalidInputError("slices must be an n x H x W stack")
        if self.slices.dtype != np.int16:
            if not np.all((self.slices >= HU_MIN) & (self.slices <= HU_MAX)):
                raise InvalidInputError("HU values outside declared range")
            self.slices = self.slices.astype(np.int16)
        elif not np.all((self.slices >= HU_MIN) & (self.slices <= HU_MAX)):
            raise InvalidInputError("HU values outside declared range")
        self.pixel_spacing = (float(self.pixel_spacing[0]), float(self.pixel_spacing[1]))

    @property
    def n_slices(self) -> int:
        return self.slices.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.slices.shape[1], self.slices.shape[2]


def _write_string(out: bytearray, text: str):
    raw = text.encode("utf-8")
    out += struct.pack("<H", len(raw))
    out += raw


def _read_string(buf: bytes, offset: int) -> tuple[str, int]:
    if offset + 2 > len(buf):
        raise FormatError("truncated header string")
    (length,) = struct.unpack_from("<H", buf, offset)
    offset += 2
    if offset + length > len(buf):
        raise FormatError("truncated header string")
    return buf[offset : offset + length].decode("utf-8"), offset + length


def volume_to_bytes(record: VolumeRecord) -> bytes:
    out = bytearray()
    out += MAGIC
    out += struct.pack("<H", VERSION)
    _write_string(out, record.subject_id)
    _write_string(out, record.kernel_label)
    n, h, w = record.slices.shape
    out += struct.pack("<III", n, h, w)
    out += struct.pack("<dd", *record.pixel_spacing)
    out += record.slices.astype("<i2").tobytes()
    return bytes(out)


def volume_from_bytes(buf: bytes) -> VolumeRecord:
    if len(buf) < len(MAGIC) + 2 or buf[: len(MAGIC)] != MAGIC:
        raise FormatError("not a KSVOL1 volume (bad magic)")
    offset = len(MAGIC)
    (version,) = struct.unpack_from("<H", buf, offset)
    offset += 2
    if version != VERSION:
        raise FormatError(f"unsupported KSVOL1 version {version}")
    subject_id, offset = _read_string(buf, offset)
    kernel_label, offset = _read_string(buf, offset)
    if offset + 12 + 16 > len(buf):
        raise FormatError("truncated KSVOL1 header")
    n, h, w = struct.unpack_from("<III", buf, offset)
    offset += 12
    spacing = struct.unpack_from("<dd", buf, offset)
    offset += 16
    expected = n * h * w * 2
    payload = buf[offset:]
    if len(payload) != expected:
        raise FormatError(
            f"payload holds {len(payload)} bytes, header promises {expected}"
        )
    slices = np.frombuffer(payload, dtype="<i2").reshape(n, h, w).astype(np.int16)
    return VolumeRecord(subject_id, kernel_label, slices, spacing)


def save_volume(record: VolumeRecord, path) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(volume_to_bytes(record))
    tmp.replace(path)


def load_volume(path) -> VolumeRecord:
    return volume_from_bytes(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------

def normalize_hu(slices) -> np.ndarray:
    """Linear [-1024, 3071] -> [-1, 1]."""
    arr = np.asarray(slices, dtype=np.float64)
    return (arr - HU_MIN) / HU_RANGE * 2.0 - 1.0


def denormalize_hu(values) -> np.ndarray:
    """Inverse of normalize_hu, rounded to integer HU and clipped to range."""
    arr = np.asarray(values, dtype=np.float64)
    hu = (arr + 1.0) / 2.0 * HU_RANGE + HU_MIN
    return np.clip(np.rint(hu), HU_MIN, HU_MAX).astype(np.int16)


# ---------------------------------------------------------------------------
# patch sampling
# ---------------------------------------------------------------------------

@dataclass
class PatchProvenance:
    subject_id: str
    slice_index: int
    row: int
    col: int
    flip_h: bool
    flip_v: bool


@dataclass
class PatchBatch:
    patches: np.ndarray  # (B, p, p, 1) in [-1, 1]
    kernel_label: str
    provenance: list[PatchProvenance]


def sample_patches(
    records: list[VolumeRecord], patch_size: int, batch: int, rng: np.random.Generator
) -> PatchBatch:
    """Uniform random crops with independent 0.5-probability flips."""
    if not records:
        raise ContractError("no volumes to sample from")
    h, w = records[0].shape
    if h < patch_size or w < patch_size:
        raise ContractError(f"patch size {patch_size} exceeds slice size {h}x{w}")
    label = records[0].kernel_label
    slices = [(r, i) for r in records for i in range(r.n_slices)]
    patches = np.empty((batch, patch_size, patch_size, 1), dtype=np.float64)
    provenance = []
    for b in range(batch):
        record, idx = slices[rng.integers(len(slices))]
        row = int(rng.integers(record.shape[0] - patch_size + 1))
        col = int(rng.integers(record.shape[1] - patch_size + 1))
        flip_h = bool(rng.random() < 0.5)
        flip_v = bool(rng.random() < 0.5)
        crop = record.slices[idx, row : row + patch_size, col : col + patch_size]
        tile = normalize_hu(crop)
        if flip_h:
            tile = tile[:, ::-1]
        if flip_v:
            tile = tile[::-1, :]
        patches[b, :, :, 0] = tile
        provenance.append(
            PatchProvenance(record.subject_id, idx, row, col, flip_h, flip_v)
        )
    return PatchBatch(patches, label, provenance)


def sample_paired_patches(
    records_a: list[VolumeRecord],
    records_b: list[VolumeRecord],
    patch_size: int,
    batch: int,
    rng: np.random.Generator,
) -> tuple[PatchBatch, PatchBatch]:
    """Aligned crops from two pixel-registered stacks (same subjects/slices)."""
    if len(records_a) != len(records_b):
        raise ContractError("paired sampling needs matching volume lists")
    for a, b in zip(records_a, records_b):
        if a.subject_id != b.subject_id or a.slices.shape != b.slices.shape:
            raise ContractError("paired volumes must be aligned per subject")
    batch_a = sample_patches(records_a, patch_size, batch, rng)
    patches_b = np.empty_like(batch_a.patches)
    by_subject = {r.subject_id: r for r in records_b}
    for i, prov in enumerate(batch_a.provenance):
        record = by_subject[prov.subject_id]
        crop = record.slices[
            prov.slice_index, prov.row : prov.row + patch_size, prov.col : prov.col + patch_size
        ]
        tile = normalize_hu(crop)
        if prov.flip_h:
            tile = tile[:, ::-1]
        if prov.flip_v:
            tile = tile[::-1, :]
        patches_b[i, :, :, 0] = tile
    batch_b = PatchBatch(patches_b, records_b[0].kernel_label, list(batch_a.provenance))
    return batch_a, batch_b


# ---------------------------------------------------------------------------
# synthetic phantom dataset
# ---------------------------------------------------------------------------

@dataclass
class PhantomSpec:
    n_subjects: int = 4
    slices_per_subject: int = 50
    image_size: int = 96
    soft_blur_sigma: float = 2.0
    sharp_boost_gain: float = 1.5
    noise_sigma_soft: float = 4.0
    noise_sigma_sharp: float = 12.0
    # detector-aperture band limit applied to the noise; CT noise is never
    # white out to Nyquist
    noise_aa_sigma: float = 0.6
    seed: int = 0

    def __post_init__(self):
        if self.n_subjects < 1 or self.slices_per_subject < 1:
            raise ContractError("phantom needs at least one subject and slice")
        if self.image_size % 16:
            raise ContractError("image_size must be divisible by 16")
        if min(self.soft_blur_sigma, self.noise_sigma_soft, self.noise_sigma_sharp) <= 0:
            raise ContractError("blur and noise sigmas must be positive")
        if self.noise_aa_sigma < 0:
            raise ContractError("noise_aa_sigma must be non-negative")


def _render_base(rng: np.random.Generator, size: int) -> np.ndarray:
    """One anatomy slice in HU: body ellipse, soft-tissue blobs, bone ring."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cy, cx = size / 2 + rng.uniform(-3, 3), size / 2 + rng.uniform(-3, 3)
    img = np.full((size, size), -1000.0)  # air

    ry = size * rng.uniform(0.34, 0.42)
    rx = size * rng.uniform(0.30, 0.40)
    body = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
    img[body] = rng.uniform(20, 50)

    # skull-like high-attenuation ring with trabecular texture
    ring_width = rng.uniform(0.08, 0.14)
    rho = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2
    ring = (rho <= 1.0) & (rho >= (1.0 - ring_width) ** 2)
    bone_hu = rng.uniform(700, 1500)
    texture = ndimage.gaussian_filter(rng.normal(size=img.shape), 0.7)
    texture = texture / max(texture.std(), 1e-9)
    img[ring] = np.clip(bone_hu * (1.0 + 0.12 * texture[ring]), 600, 2200)

    # random soft-tissue ellipses inside the body
    for _ in range(int(rng.integers(4, 9))):
        ey = cy + rng.uniform(-0.5, 0.5) * ry
        ex = cx + rng.uniform(-0.5, 0.5) * rx
        ery = rng.uniform(0.05, 0.22) * ry
        erx = rng.uniform(0.05, 0.22) * rx
        blob = (((yy - ey) / ery) ** 2 + ((xx - ex) / erx) ** 2 <= 1.0) & body & ~ring
        img[blob] = rng.uniform(0, 80)
    return img


def _aa_noise_gain(aa_sigma: float) -> float:
    """Std of unit white noise after the anti-alias filter (kernel L2 norm)."""
    if aa_sigma == 0:
        return 1.0
    probe = np.zeros((33, 33))
    probe[16, 16] = 1.0
    kernel = ndimage.gaussian_filter(probe, aa_sigma)
    return float(np.sqrt((kernel ** 2).sum()))


def _kernel_image(
    base: np.ndarray,
    blur_sigma: float,
    boost_gain: float,
    noise_sigma: float,
    aa_sigma: float,
    rng: np.random.Generator,
) -> np.ndarray:
    smoothed = ndimage.gaussian_filter(base, blur_sigma)
    highpass = base - smoothed
    noise = ndimage.gaussian_filter(rng.normal(0.0, 1.0, base.shape), aa_sigma)
    noise *= noise_sigma / _aa_noise_gain(aa_sigma)
    img = smoothed + boost_gain * highpass + noise
    return np.clip(np.rint(img), HU_MIN, HU_MAX).astype(np.int16)


@dataclass
class PhantomDataset:
    volumes: dict[str, list[VolumeRecord]]  # kernel label -> per-subject stacks
    spec: PhantomSpec

    def subjects(self) -> list[str]:
        return [v.subject_id for v in self.volumes[SHARP]]

    def manifest(self) -> dict:
        return {
            "format": "kshift-phantom/1",
            "paired": True,
            "subjects": self.subjects(),
            "slices_per_subject": self.spec.slices_per_subject,
            "image_size": self.spec.image_size,
            "kernels": {
                SOFT: {"blur_sigma": self.spec.soft_blur_sigma, "boost_gain": 0.0,
                       "noise_sigma": self.spec.noise_sigma_soft},
                MIDDLE: {"blur_sigma": self.spec.soft_blur_sigma,
                         "boost_gain": self.spec.sharp_boost_gain / 2.0,
                         "noise_sigma": float(np.sqrt(self.spec.noise_sigma_soft
                                                      * self.spec.noise_sigma_sharp))},
                SHARP: {"blur_sigma": self.spec.soft_blur_sigma,
                        "boost_gain": self.spec.sharp_boost_gain,
                        "noise_sigma": self.spec.noise_sigma_sharp},
            },
            "seed": self.spec.seed,
        }


def generate_phantom_dataset(spec: PhantomSpec) -> PhantomDataset:
    """Paired sharp / middle / soft stacks, deterministic under the spec seed.

    All three kernels derive from the same base image per slice: soft blurs it,
    sharp adds back a boosted high-pass, middle sits at the parameter midpoint
    (boost gain halfway, noise at the geometric mean of the two noise levels).
    """
    rng = np.random.default_rng(spec.seed)
    params = {
        SOFT: (0.0, spec.noise_sigma_soft),
        MIDDLE: (spec.sharp_boost_gain / 2.0,
                 float(np.sqrt(spec.noise_sigma_soft * spec.noise_sigma_sharp))),
        SHARP: (spec.sharp_boost_gain, spec.noise_sigma_sharp),
    }
    volumes: dict[str, list[VolumeRecord]] = {k: [] for k in KERNELS}
    for s in range(spec.n_subjects):
        subject = f"phantom{s:03d}"
        stacks = {k: [] for k in KERNELS}
        for _ in range(spec.slices_per_subject):
            base = _render_base(rng, spec.image_size)
            for kernel in KERNELS:
                gain, noise = params[kernel]
                stacks[kernel].append(
                    _kernel_image(
                        base, spec.soft_blur_sigma, gain, noise,
                        spec.noise_aa_sigma, rng,
                    )
                )
        for kernel in KERNELS:
            volumes[kernel].append(
                VolumeRecord(subject, kernel, np.stack(stacks[kernel]))
            )
    return PhantomDataset(volumes, spec)


def write_phantom_dataset(dataset: PhantomDataset, out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for kernel, records in dataset.volumes.items():
        for record in records:
            save_volume(record, out_dir / f"{record.subject_id}_{kernel}.ksvol")
    manifest_path = out_dir / "manifest.json"
    tmp = manifest_path.with_suffix(".tmp")
    tmp.write_text(json.dumps(dataset.manifest(), indent=2))
    tmp.replace(manifest_path)
    return manifest_path


def load_phantom_dataset(directory) -> dict[str, list[VolumeRecord]]:
    directory = Path(directory)
    volumes: dict[str, list[VolumeRecord]] = {}
    for path in sorted(directory.glob("*.ksvol")):
        record = load_volume(path)
        volumes.setdefault(record.kernel_label, []).append(record)
    if not volumes:
        raise FormatError(f"no .ksvol volumes found in {directory}")
    return volumes


def export_slice_png(slice_hu: np.ndarray, path) -> None:
    """16-bit grayscale PNG, HU offset-encoded as HU + 1024."""
    from PIL import Image

    data = (np.asarray(slice_hu, dtype=np.int32) - HU_MIN).astype(np.uint16)
    Image.fromarray(data).save(path, format="PNG")
