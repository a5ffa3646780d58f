"""Scalar training objectives for two-domain, three-domain and supervised modes.

Conventions follow the printed least-squares objectives: discriminators score
real samples toward 0 and generated samples toward 1, and the total loss
enters the min-max problem as  -l_disc weighted by lambda_disc. Under a label
swap this is equivalent to the usual real->1 / fake->0 convention. Every
squared-norm term is realized as the mean of squared entries over the score
map and the batch.

A generator argument ``g`` is any callable ``g(z, beta, alpha=None)``; batch
dictionaries carry ``sharp`` (domain coordinate 0), ``soft`` (1) and, in
three-domain mode, ``middle`` (0.5) tensors of shape (B, 1, H, W).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch

from .errors import ContractError

TWO_DOMAIN = "switchable_2dom"
THREE_DOMAIN = "switchable_3dom"
VANILLA = "vanilla_cyclegan"
SUPERVISED = "supervised"
MODES = (TWO_DOMAIN, THREE_DOMAIN, VANILLA, SUPERVISED)


@dataclass
class LossWeights:
    lambda_disc: float = 1.0
    lambda_cyc: float = 10.0
    lambda_id: float = 5.0
    lambda_ae: float = 5.0
    lambda_sc: float = 1.0

    def __post_init__(self):
        for name in ("lambda_disc", "lambda_cyc", "lambda_id", "lambda_ae", "lambda_sc"):
            if getattr(self, name) < 0:
                raise ContractError(f"{name} must be non-negative")


@dataclass
class LossReport:
    """Per-term scalars plus their weighted combination."""

    mode: str
    terms: dict[str, float]
    total: float

    def as_dict(self) -> dict:
        out = {"mode": self.mode, "total": self.total}
        out.update(self.terms)
        return out


def _sq(x: torch.Tensor) -> torch.Tensor:
    return (x ** 2).mean()


def _l1(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    if a.shape != b.shape:
        raise ContractError(f"shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
    return (a - b).abs().mean()


def _check_batches(batches, required):
    for key in required:
        if key not in batches or batches[key] is None or batches[key].numel() == 0:
            raise ContractError(f"mode requires a non-empty '{key}' batch")


# ---------------------------------------------------------------------------
# adversarial terms
# ---------------------------------------------------------------------------

def lsgan_disc_loss_2dom(d_h, d_s, real_h, real_s, fake_h, fake_s) -> torch.Tensor:
    """|D_H(y)|^2 + |1-D_H(G(x))|^2 + |D_S(x)|^2 + |1-D_S(G(y))|^2."""
    if real_h.shape[1:] != fake_h.shape[1:] or real_s.shape[1:] != fake_s.shape[1:]:
        raise ContractError("real and fake batches must share patch shape")
    return (
        _sq(d_h(real_h))
        + _sq(1.0 - d_h(fake_h))
        + _sq(d_s(real_s))
        + _sq(1.0 - d_s(fake_s))
    )


def make_fakes_3dom(g, batches, detach=False) -> dict[str, torch.Tensor]:
    """The six cross-domain conversions used by the three-domain objective."""
    _check_batches(batches, ("sharp", "soft", "middle"))
    y, x, z = batches["sharp"], batches["soft"], batches["middle"]
    fakes = {
        "h_from_s": g(x, 0.0, 1.0),
        "s_from_h": g(y, 1.0, 0.0),
        "s_from_m": g(z, 1.0, 0.5),
        "m_from_s": g(x, 0.5, 1.0),
        "h_from_m": g(z, 0.0, 0.5),
        "m_from_h": g(y, 0.5, 0.0),
    }
    if detach:
        fakes = {k: v.detach() for k, v in fakes.items()}
    return fakes


def lsgan_disc_terms_3dom(d_h, d_s, d_m, batches, fakes) -> torch.Tensor:
    """The printed 12-term sum (real terms appear twice per pairing)."""
    y, x, z = batches["sharp"], batches["soft"], batches["middle"]
    return (
        _sq(d_h(y))
        + _sq(1.0 - d_h(fakes["h_from_s"]))
        + _sq(d_s(x))
        + _sq(1.0 - d_s(fakes["s_from_h"]))
        + _sq(d_s(x))
        + _sq(1.0 - d_s(fakes["s_from_m"]))
        + _sq(d_m(z))
        + _sq(1.0 - d_m(fakes["m_from_s"]))
        + _sq(d_h(y))
        + _sq(1.0 - d_h(fakes["h_from_m"]))
        + _sq(d_m(z))
        + _sq(1.0 - d_m(fakes["m_from_h"]))
    )


def lsgan_disc_loss_3dom(d_h, d_s, d_m, batches, g, detach_fakes=False) -> torch.Tensor:
    fakes = make_fakes_3dom(g, batches, detach=detach_fakes)
    return lsgan_disc_terms_3dom(d_h, d_s, d_m, batches, fakes)


def lsgan_gen_loss_2dom(d_h, d_s, fake_h, fake_s) -> torch.Tensor:
    """Non-saturating generator surrogate: push fakes toward the real label (0)."""
    return _sq(d_h(fake_h)) + _sq(d_s(fake_s))


def lsgan_gen_loss_3dom(d_h, d_s, d_m, fakes) -> torch.Tensor:
    return (
        _sq(d_h(fakes["h_from_s"]))
        + _sq(d_s(fakes["s_from_h"]))
        + _sq(d_s(fakes["s_from_m"]))
        + _sq(d_m(fakes["m_from_s"]))
        + _sq(d_h(fakes["h_from_m"]))
        + _sq(d_m(fakes["m_from_h"]))
    )


# ---------------------------------------------------------------------------
# pixel losses
# ---------------------------------------------------------------------------

def cycle_loss_2dom(g, batches) -> torch.Tensor:
    _check_batches(batches, ("sharp", "soft"))
    y, x = batches["sharp"], batches["soft"]
    return _l1(g(g(y, 1.0), 0.0), y) + _l1(g(g(x, 0.0), 1.0), x)


def cycle_loss_3dom(g, batches) -> torch.Tensor:
    _check_batches(batches, ("sharp", "soft", "middle"))
    y, x, z = batches["sharp"], batches["soft"], batches["middle"]
    return (
        _l1(g(g(y, 1.0, 0.0), 0.0, 1.0), y)
        + _l1(g(g(x, 0.0, 1.0), 1.0, 0.0), x)
        + _l1(g(g(y, 0.5, 0.0), 0.0, 0.5), y)
        + _l1(g(g(x, 0.5, 1.0), 1.0, 0.5), x)
        + _l1(g(g(z, 0.0, 0.5), 0.5, 0.0), z)
        + _l1(g(g(z, 1.0, 0.5), 0.5, 1.0), z)
    )


def identity_loss_2dom(g, batches) -> torch.Tensor:
    """Auto-encoding of target-domain inputs (two-domain identity loss)."""
    _check_batches(batches, ("sharp", "soft"))
    y, x = batches["sharp"], batches["soft"]
    return _l1(g(y, 0.0), y) + _l1(g(x, 1.0), x)


def ae_loss_3dom(g, batches) -> torch.Tensor:
    _check_batches(batches, ("sharp", "soft", "middle"))
    y, x, z = batches["sharp"], batches["soft"], batches["middle"]
    return (
        _l1(g(y, 0.0, 0.0), y)
        + _l1(g(x, 1.0, 1.0), x)
        + _l1(g(z, 0.5, 0.5), z)
    )


def self_consistency_loss(g, batches) -> torch.Tensor:
    """Routing through the middle domain must equal direct conversion."""
    _check_batches(batches, ("sharp", "soft"))
    y, x = batches["sharp"], batches["soft"]
    via_m_to_s = g(g(y, 0.5, 0.0), 1.0, 0.5)
    via_m_to_h = g(g(x, 0.5, 1.0), 0.0, 0.5)
    return _l1(via_m_to_s, g(y, 1.0, 0.0)) + _l1(via_m_to_h, g(x, 0.0, 1.0))


def supervised_mse_loss(output: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    if output.shape != target.shape:
        raise ContractError("output and target must share shape")
    return ((output - target) ** 2).mean()


# ---------------------------------------------------------------------------
# combination
# ---------------------------------------------------------------------------

def _term(terms, key):
    if key not in terms:
        raise ContractError(f"missing loss term '{key}'")
    value = terms[key]
    return value.item() if isinstance(value, torch.Tensor) else float(value)


def total_loss(mode: str, weights: LossWeights, terms: dict) -> LossReport:
    """Weighted combination of the per-mode terms, as printed."""
    if mode not in MODES:
        raise ContractError(f"unknown mode {mode!r}")
    vals = {k: (v.item() if isinstance(v, torch.Tensor) else float(v)) for k, v in terms.items()}
    if mode in (TWO_DOMAIN, VANILLA):
        total = (
            -weights.lambda_disc * _term(vals, "disc")
            + weights.lambda_cyc * _term(vals, "cycle")
            + weights.lambda_id * _term(vals, "identity")
        )
    elif mode == THREE_DOMAIN:
        total = (
            -weights.lambda_disc * _term(vals, "disc")
            + weights.lambda_cyc * _term(vals, "cycle")
            + weights.lambda_ae * _term(vals, "ae")
            + weights.lambda_sc * _term(vals, "sc")
        )
    else:
        total = _term(vals, "mse")
    return LossReport(mode=mode, terms=vals, total=total)
