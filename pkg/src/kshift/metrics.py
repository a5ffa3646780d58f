"""PSNR / SSIM, a spectral high-band probe, and classical conversion baselines."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ContractError

DEFAULT_MAX_HU = 4095.0  # width of the declared HU range
N_BANDS = 8
WIENER_KAPPA = 1e-2


@dataclass
class MetricReport:
    psnr: float
    ssim: float
    per_slice: list[dict] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "psnr": None if math.isinf(self.psnr) else self.psnr,
            "psnr_is_infinite": math.isinf(self.psnr),
            "ssim": self.ssim,
            "per_slice": self.per_slice,
        }


def _as_float_pair(x, x_hat):
    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(x_hat, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def psnr(x, x_hat, max_value: float = DEFAULT_MAX_HU) -> float:
    """10 log10(max^2 / MSE); +inf for identical inputs."""
    if max_value <= 0:
        raise ContractError("max_value must be positive")
    a, b = _as_float_pair(x, x_hat)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(max_value ** 2 / mse)


def ssim(x, x_hat, dynamic_range: float = DEFAULT_MAX_HU) -> float:
    """Global-statistics structural similarity with the standard stabilizers."""
    if dynamic_range <= 0:
        raise ContractError("dynamic_range must be positive")
    a, b = _as_float_pair(x, x_hat)
    c1 = (0.01 * dynamic_range) ** 2
    c2 = (0.03 * dynamic_range) ** 2
    ma, mb = a.mean(), b.mean()
    va, vb = a.var(), b.var()
    cov = float(np.mean((a - ma) * (b - mb)))
    return float(
        ((2 * ma * mb + c1) * (2 * cov + c2))
        / ((ma ** 2 + mb ** 2 + c1) * (va + vb + c2))
    )


def ssim_gaussian(x, x_hat, dynamic_range: float = DEFAULT_MAX_HU,
                  sigma: float = 1.5) -> float:
    """Sliding-window SSIM with an 11x11 Gaussian window, averaged over pixels."""
    a, b = _as_float_pair(x, x_hat)
    c1 = (0.01 * dynamic_range) ** 2
    c2 = (0.03 * dynamic_range) ** 2
    blur = lambda img: ndimage.gaussian_filter(img, sigma, truncate=3.5)
    ma, mb = blur(a), blur(b)
    va = blur(a * a) - ma ** 2
    vb = blur(b * b) - mb ** 2
    cov = blur(a * b) - ma * mb
    num = (2 * ma * mb + c1) * (2 * cov + c2)
    den = (ma ** 2 + mb ** 2 + c1) * (va + vb + c2)
    return float(np.mean(num / den))


# ---------------------------------------------------------------------------
# spectral probe and band machinery
# ---------------------------------------------------------------------------

def _radial_frequencies(shape) -> np.ndarray:
    fy = np.fft.fftfreq(shape[0])[:, None]
    fx = np.fft.fftfreq(shape[1])[None, :]
    return np.sqrt(fy ** 2 + fx ** 2)


def highband_energy(image, cutoff: float = 0.25) -> float:
    """Fraction of non-DC spectral power above the cutoff (cycles/pixel)."""
    img = np.asarray(image, dtype=np.float64)
    if not 0 < cutoff < math.sqrt(0.5):
        raise ContractError("cutoff must lie in (0, sqrt(0.5)) cycles/pixel")
    power = np.abs(np.fft.fft2(img)) ** 2
    freq = _radial_frequencies(img.shape)
    ac = freq > 0
    total = float(power[ac].sum())
    if total == 0.0:
        return 0.0
    return float(power[ac & (freq > cutoff)].sum()) / total


def band_edges(shape, n_bands: int = N_BANDS) -> np.ndarray:
    """Logarithmically spaced radial band edges from the first AC bin to Nyquist."""
    f_low = 1.0 / max(shape)
    f_high = math.sqrt(0.5)
    return np.geomspace(f_low, f_high, n_bands + 1)


def band_energies(image, n_bands: int = N_BANDS) -> np.ndarray:
    """Spectral power per radial band (DC excluded)."""
    img = np.asarray(image, dtype=np.float64)
    power = np.abs(np.fft.fft2(img)) ** 2
    freq = _radial_frequencies(img.shape)
    edges = band_edges(img.shape, n_bands)
    out = np.zeros(n_bands)
    for i in range(n_bands):
        lo, hi = edges[i], edges[i + 1]
        mask = (freq > 0) & (freq >= lo if i else freq > 0) & (freq < hi)
        if i == n_bands - 1:
            mask = (freq > 0) & (freq >= lo)
        out[i] = power[mask].sum()
    return out


def classical_smooth(sharp_image, target_spectrum_profile) -> np.ndarray:
    """Rescale each radial band's energy toward a target per-band profile.

    The profile is a length-8 vector of band energies, typically measured from
    soft-kernel slices with band_energies(). DC passes through unchanged.
    """
    img = np.asarray(sharp_image, dtype=np.float64)
    target = np.asarray(target_spectrum_profile, dtype=np.float64)
    if target.shape != (N_BANDS,):
        raise ContractError(f"profile must have {N_BANDS} band energies")
    current = band_energies(img)
    spectrum = np.fft.fft2(img)
    freq = _radial_frequencies(img.shape)
    edges = band_edges(img.shape)
    gains = np.ones_like(freq)
    for i in range(N_BANDS):
        lo, hi = edges[i], edges[i + 1]
        mask = (freq > 0) & (freq >= lo if i else freq > 0) & (freq < hi)
        if i == N_BANDS - 1:
            mask = (freq > 0) & (freq >= lo)
        if current[i] > 0:
            gains[mask] = math.sqrt(target[i] / current[i])
        elif target[i] > 0:
            gains[mask] = 1.0
    return np.real(np.fft.ifft2(spectrum * gains))


def classical_sharpen(soft_image, psf_sigma: float,
                      kappa: float = WIENER_KAPPA) -> np.ndarray:
    """Laplacian unsharp boost followed by Wiener deconvolution.

    The point-spread estimate is an isotropic Gaussian of width psf_sigma; the
    unsharp strength is tied to psf_sigma^2 / 2 (first-order blur reversal) so
    the whole operator approaches the identity as psf_sigma -> 0. The Wiener
    gain is normalized to 1 at DC to preserve mean HU.
    """
    img = np.asarray(soft_image, dtype=np.float64)
    if psf_sigma < 0 or kappa < 0:
        raise ContractError("psf_sigma and kappa must be non-negative")
    boosted = img - (psf_sigma ** 2 / 2.0) * ndimage.laplace(img)
    if psf_sigma == 0.0:
        return boosted
    freq2 = _radial_frequencies(img.shape) ** 2
    otf = np.exp(-2.0 * math.pi ** 2 * psf_sigma ** 2 * freq2)
    gain = otf / (otf ** 2 + kappa)
    gain /= gain.flat[0]  # unit DC gain
    return np.real(np.fft.ifft2(np.fft.fft2(boosted) * gain))


# ---------------------------------------------------------------------------
# display helpers (shared definition with the browser viewer)
# ---------------------------------------------------------------------------

def window_display(values_hu, center: float, width: float) -> np.ndarray:
    """Linear [center - width/2, center + width/2] -> [0, 255], clamped.

    Rounding is floor(x + 0.5) so the midpoint maps to 128, matching the
    viewer's arithmetic exactly.
    """
    if width <= 0:
        raise ContractError("window width must be positive")
    v = np.asarray(values_hu, dtype=np.float64)
    scaled = (v - (center - width / 2.0)) / width * 255.0
    return np.clip(np.floor(scaled + 0.5), 0, 255).astype(np.uint8)


def difference_display(a_hu, b_hu, center: float = 0.0, width: float = 400.0) -> np.ndarray:
    """|a - b| rendered through the fixed (-200, 200) HU difference window."""
    a, b = _as_float_pair(a_hu, b_hu)
    return window_display(np.abs(a - b), center, width)


# ---------------------------------------------------------------------------
# volume-level evaluation
# ---------------------------------------------------------------------------

def evaluate_volumes(converted, reference, max_value: float = DEFAULT_MAX_HU) -> MetricReport:
    """Slice-wise PSNR/SSIM of two aligned HU stacks, plus the means."""
    a = np.asarray(converted, dtype=np.float64)
    b = np.asarray(reference, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractError("volumes must share shape")
    per_slice = []
    for i in range(a.shape[0]):
        per_slice.append(
            {"slice": i, "psnr": psnr(a[i], b[i], max_value), "ssim": ssim(a[i], b[i], max_value)}
        )
    finite = [s["psnr"] for s in per_slice if not math.isinf(s["psnr"])]
    mean_psnr = float(np.mean(finite)) if finite else math.inf
    mean_ssim = float(np.mean([s["ssim"] for s in per_slice]))
    return MetricReport(mean_psnr, mean_ssim, per_slice)
