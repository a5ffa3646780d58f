"""Channel statistics, adaptive instance normalization and Gaussian optimal transport.

Everything here is plain numpy on immutable inputs. The network modules keep
torch twins of the feature-statistics transform; tests pin the two paths to
each other through this module.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, InvalidInputError, NumericalError

# Floor applied to per-channel standard deviations (population convention).
EPS_STD = 1e-5
# Jitter added to covariances before matrix square roots.
COV_JITTER = 1e-8


@dataclass
class FeatureMap:
    """A height x width x channels block of real-valued activations."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3:
            raise ContractError(
                f"feature map must be H x W x C, got shape {self.values.shape}"
            )
        if min(self.values.shape) < 1:
            raise ContractError("feature map dimensions must all be >= 1")
        if not np.all(np.isfinite(self.values)):
            raise InvalidInputError("feature map contains non-finite values")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]

    @classmethod
    def from_array(cls, array) -> "FeatureMap":
        return cls(np.asarray(array, dtype=np.float64))


@dataclass
class ChannelStats:
    """Per-channel mean and (floored) standard deviation."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        self.std = np.atleast_1d(np.asarray(self.std, dtype=np.float64))
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise ContractError("mean and std must be equal-length vectors")
        if not (np.all(np.isfinite(self.mean)) and np.all(np.isfinite(self.std))):
            raise InvalidInputError("channel statistics must be finite")
        if np.any(self.std < EPS_STD):
            raise ContractError(f"std entries must be >= {EPS_STD}")

    def __len__(self) -> int:
        return self.mean.shape[0]


@dataclass
class BlockCode:
    """One (scale, shift) pair conditioning a single generator convolution."""

    block_id: str
    scale: np.ndarray
    shift: np.ndarray

    def __post_init__(self):
        self.scale = np.atleast_1d(np.asarray(self.scale, dtype=np.float64))
        self.shift = np.atleast_1d(np.asarray(self.shift, dtype=np.float64))
        if self.scale.shape != self.shift.shape or self.scale.ndim != 1:
            raise ContractError("scale and shift must be equal-length vectors")
        if np.any(self.scale < 0):
            raise ContractError("scale entries must be non-negative")


@dataclass
class AdaINCode:
    """Ordered per-block conditioning codes for the switchable generator."""

    blocks: tuple[BlockCode, ...]

    def __post_init__(self):
        self.blocks = tuple(self.blocks)
        if not self.blocks:
            raise ContractError("code must condition at least one block")

    def block_ids(self) -> tuple[str, ...]:
        return tuple(b.block_id for b in self.blocks)

    def channel_counts(self) -> tuple[int, ...]:
        return tuple(len(b.scale) for b in self.blocks)

    def is_identity(self, atol: float = 0.0) -> bool:
        return all(
            np.allclose(b.scale, 1.0, atol=atol) and np.allclose(b.shift, 0.0, atol=atol)
            for b in self.blocks
        )


def identity_code(block_channels: dict[str, int] | list[tuple[str, int]]) -> AdaINCode:
    """The (scale 1, shift 0) code, one pair per conditioned block."""
    items = block_channels.items() if isinstance(block_channels, dict) else block_channels
    return AdaINCode(
        tuple(BlockCode(bid, np.ones(c), np.zeros(c)) for bid, c in items)
    )


def identity_code_like(code: AdaINCode) -> AdaINCode:
    return identity_code(list(zip(code.block_ids(), code.channel_counts())))


@dataclass
class DomainCoordinate:
    """Position on the sharp-to-soft conversion path: 0 = sharp, 1 = soft."""

    value: float

    def __post_init__(self):
        self.value = float(self.value)
        if not np.isfinite(self.value) or not 0.0 <= self.value <= 1.0:
            raise ContractError(f"domain coordinate must lie in [0, 1], got {self.value}")

    @classmethod
    def coerce(cls, value) -> "DomainCoordinate":
        return value if isinstance(value, cls) else cls(float(value))


@dataclass
class GaussianMeasure:
    """A Gaussian with mean vector and symmetric PSD covariance."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        self.covariance = np.atleast_2d(np.asarray(self.covariance, dtype=np.float64))
        d = self.mean.shape[0]
        if self.covariance.shape != (d, d):
            raise ContractError(
                f"covariance must be {d}x{d}, got {self.covariance.shape}"
            )
        if not np.allclose(self.covariance, self.covariance.T, atol=1e-8):
            raise ContractError("covariance must be symmetric within 1e-8")
        eigvals = np.linalg.eigvalsh(0.5 * (self.covariance + self.covariance.T))
        if np.any(eigvals < -1e-8):
            raise ContractError("covariance must be PSD (eigenvalues >= -1e-8)")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def channel_stats(x: FeatureMap) -> ChannelStats:
    """Per-channel mean and population std, std floored at EPS_STD."""
    v = x.values
    mean = v.mean(axis=(0, 1))
    std = np.maximum(v.std(axis=(0, 1)), EPS_STD)
    return ChannelStats(mean, std)


def adain_transform(x: FeatureMap, target: ChannelStats) -> FeatureMap:
    """Renormalize each channel of x to the target mean/std."""
    if len(target) != x.channels:
        raise ContractError(
            f"target has {len(target)} channels, feature map has {x.channels}"
        )
    src = channel_stats(x)
    z = (target.std / src.std) * (x.values - src.mean) + target.mean
    return FeatureMap(z)


def instance_norm(x: FeatureMap) -> FeatureMap:
    """adain_transform onto unit std and zero mean."""
    unit = ChannelStats(np.zeros(x.channels), np.ones(x.channels))
    return adain_transform(x, unit)


def _sym_sqrt(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric square root via eigendecomposition, negative eigenvalues clamped."""
    sym = 0.5 * (matrix + matrix.T)
    eigvals, eigvecs = np.linalg.eigh(sym)
    eigvals = np.clip(eigvals, 0.0, None)
    root = np.sqrt(eigvals)
    return (eigvecs * root) @ eigvecs.T, eigvals


def gaussian_ot_map(
    x: np.ndarray, source: GaussianMeasure, target: GaussianMeasure
) -> np.ndarray:
    """Closed-form Wasserstein-2 optimal transport of x from source to target.

    Returns m_V + S_U^{-1/2} (S_U^{1/2} S_V S_U^{1/2})^{1/2} S_U^{-1/2} (x - m_U)
    where S_U, S_V are the jittered covariances.
    """
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    d = source.dim
    if target.dim != d or x.shape[-1] != d:
        raise ContractError(
            f"dimension mismatch: x {x.shape}, source {d}, target {target.dim}"
        )
    jitter = COV_JITTER * np.eye(d)
    su = source.covariance + jitter
    sv = target.covariance + jitter

    su_half, eigvals = _sym_sqrt(su)
    if np.any(eigvals <= 0):
        raise NumericalError("source covariance is singular beyond jitter")
    su_half_inv = np.linalg.inv(su_half)
    middle, _ = _sym_sqrt(su_half @ sv @ su_half)
    transport = su_half_inv @ middle @ su_half_inv
    return target.mean + (x - source.mean) @ transport.T


def mix_codes(
    identity: AdaINCode, learned: AdaINCode, beta
) -> AdaINCode:
    """Affine mix (1 - beta) * identity + beta * learned, scales clamped at 0."""
    beta = DomainCoordinate.coerce(beta).value
    if identity.block_ids() != learned.block_ids():
        raise ContractError("codes must share block structure (ids)")
    if identity.channel_counts() != learned.channel_counts():
        raise ContractError("codes must share block structure (channel counts)")
    if not identity.is_identity():
        raise ContractError("identity code must be (scale 1, shift 0) everywhere")
    mixed = []
    for idb, lb in zip(identity.blocks, learned.blocks):
        scale = np.clip((1.0 - beta) * idb.scale + beta * lb.scale, 0.0, None)
        shift = (1.0 - beta) * idb.shift + beta * lb.shift
        mixed.append(BlockCode(idb.block_id, scale, shift))
    return AdaINCode(tuple(mixed))
