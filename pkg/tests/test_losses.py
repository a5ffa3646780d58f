"""Loss oracles: toy generators/discriminators with hand-computed values,
plus brute-force per-pixel recomputation on 4x4 batches."""

import numpy as np
import pytest
import torch

from kshift.errors import ContractError
from kshift.losses import (
    THREE_DOMAIN,
    TWO_DOMAIN,
    LossReport,
    LossWeights,
    ae_loss_3dom,
    cycle_loss_2dom,
    cycle_loss_3dom,
    identity_loss_2dom,
    lsgan_disc_loss_2dom,
    lsgan_disc_loss_3dom,
    lsgan_gen_loss_2dom,
    make_fakes_3dom,
    self_consistency_loss,
    supervised_mse_loss,
    total_loss,
)


def const_d(value):
    """Discriminator that outputs a constant score map."""
    return lambda x: torch.full((x.shape[0], 1, 3, 3), float(value), dtype=torch.float64)


def labeling_d(real_batches):
    """Perfect discriminator under the printed convention: real -> 0, fake -> 1."""
    reals = [r for r in real_batches]

    def d(x):
        is_real = any(x.shape == r.shape and torch.equal(x, r) for r in reals)
        return torch.full(
            (x.shape[0], 1, 3, 3), 0.0 if is_real else 1.0, dtype=torch.float64
        )

    return d


class IdentityG:
    def __call__(self, z, beta, alpha=None):
        return z


class ShiftTowardSoftG:
    """Adds c only when converting toward the soft domain (beta == 1)."""

    def __init__(self, c):
        self.c = c

    def __call__(self, z, beta, alpha=None):
        return z + self.c if beta == 1.0 else z


class ShiftAlwaysG:
    def __init__(self, c):
        self.c = c

    def __call__(self, z, beta, alpha=None):
        return z + self.c


class ShiftByBetaG:
    """Adds the target coordinate on every call."""

    def __call__(self, z, beta, alpha=None):
        return z + beta


def toy_batches(three=False, seed=0, n=2, size=4):
    rng = np.random.default_rng(seed)
    batches = {
        "sharp": torch.as_tensor(rng.normal(size=(n, 1, size, size)), dtype=torch.float64),
        "soft": torch.as_tensor(rng.normal(size=(n, 1, size, size)), dtype=torch.float64),
    }
    if three:
        batches["middle"] = torch.as_tensor(
            rng.normal(size=(n, 1, size, size)), dtype=torch.float64
        )
    return batches


def brute_l1(a, b):
    """Exhaustive per-pixel L1 mean, plain Python."""
    a = a.detach().numpy().ravel()
    b = b.detach().numpy().ravel()
    return sum(abs(x - y) for x, y in zip(a, b)) / len(a)


class TestDiscLoss2Dom:
    def test_label_perfect_is_zero(self):
        b = toy_batches()
        y, x = b["sharp"], b["soft"]
        fake_h, fake_s = x + 1.0, y + 1.0
        d = labeling_d([y, x])
        loss = lsgan_disc_loss_2dom(d, d, y, x, fake_h, fake_s)
        assert loss.item() == 0.0

    def test_constant_one_is_two(self):
        b = toy_batches()
        loss = lsgan_disc_loss_2dom(
            const_d(1), const_d(1), b["sharp"], b["soft"], b["soft"], b["sharp"]
        )
        assert loss.item() == pytest.approx(2.0)

    def test_constant_half_is_one(self):
        b = toy_batches()
        loss = lsgan_disc_loss_2dom(
            const_d(0.5), const_d(0.5), b["sharp"], b["soft"], b["soft"], b["sharp"]
        )
        assert loss.item() == pytest.approx(1.0)

    def test_shape_mismatch(self):
        b = toy_batches()
        with pytest.raises(ContractError):
            lsgan_disc_loss_2dom(
                const_d(1), const_d(1),
                b["sharp"], b["soft"], torch.zeros(2, 1, 8, 8), b["sharp"],
            )


class TestDiscLoss3Dom:
    def test_label_perfect_is_zero(self):
        b = toy_batches(three=True)
        reals = [b["sharp"], b["soft"], b["middle"]]
        d = labeling_d(reals)
        loss = lsgan_disc_loss_3dom(d, d, d, b, ShiftAlwaysG(1.0))
        assert loss.item() == 0.0

    def test_constant_one_counts_real_terms(self):
        b = toy_batches(three=True)
        loss = lsgan_disc_loss_3dom(const_d(1), const_d(1), const_d(1), b, IdentityG())
        assert loss.item() == pytest.approx(6.0)

    def test_decomposes_into_2dom_plus_middle_terms(self):
        b = toy_batches(three=True)
        g = ShiftByBetaG()
        d_h, d_s, d_m = const_d(0.3), const_d(0.6), const_d(0.2)
        full = lsgan_disc_loss_3dom(d_h, d_s, d_m, b, g).item()

        fakes = make_fakes_3dom(g, b)
        two_dom = lsgan_disc_loss_2dom(
            d_h, d_s, b["sharp"], b["soft"], fakes["h_from_s"], fakes["s_from_h"]
        ).item()
        sq = lambda d, t: (d(t) ** 2).mean().item()
        sq1 = lambda d, t: ((1 - d(t)) ** 2).mean().item()
        middle_terms = (
            sq(d_s, b["soft"]) + sq1(d_s, fakes["s_from_m"])
            + sq(d_m, b["middle"]) + sq1(d_m, fakes["m_from_s"])
            + sq(d_h, b["sharp"]) + sq1(d_h, fakes["h_from_m"])
            + sq(d_m, b["middle"]) + sq1(d_m, fakes["m_from_h"])
        )
        assert full == pytest.approx(two_dom + middle_terms, abs=1e-9)

    def test_missing_middle_batch(self):
        with pytest.raises(ContractError):
            lsgan_disc_loss_3dom(
                const_d(1), const_d(1), const_d(1), toy_batches(), IdentityG()
            )


class TestCycleLoss:
    def test_identity_generator_zero(self):
        assert cycle_loss_2dom(IdentityG(), toy_batches()).item() == 0.0
        assert cycle_loss_3dom(IdentityG(), toy_batches(three=True)).item() == 0.0

    def test_shift_toward_soft_gives_two_c(self):
        # each round trip passes the shifting hop exactly once
        loss = cycle_loss_2dom(ShiftTowardSoftG(0.7), toy_batches())
        assert loss.item() == pytest.approx(2 * 0.7)

    def test_shift_always_gives_four_c(self):
        loss = cycle_loss_2dom(ShiftAlwaysG(0.3), toy_batches())
        assert loss.item() == pytest.approx(4 * 0.3)

    def test_matches_brute_force(self):
        b = toy_batches(seed=3)
        g = ShiftTowardSoftG(0.25)
        y, x = b["sharp"], b["soft"]
        expected = brute_l1(g(g(y, 1.0), 0.0), y) + brute_l1(g(g(x, 0.0), 1.0), x)
        assert cycle_loss_2dom(g, b).item() == pytest.approx(expected, abs=1e-12)

    def test_3dom_constant_shift(self):
        # six round trips, each crossing the shifting hop twice
        loss = cycle_loss_3dom(ShiftAlwaysG(0.5), toy_batches(three=True))
        assert loss.item() == pytest.approx(6 * 2 * 0.5)

    def test_3dom_matches_brute_force(self):
        b = toy_batches(three=True, seed=4)
        g = ShiftByBetaG()
        y, x, z = b["sharp"], b["soft"], b["middle"]
        expected = (
            brute_l1(g(g(y, 1.0, 0.0), 0.0, 1.0), y)
            + brute_l1(g(g(x, 0.0, 1.0), 1.0, 0.0), x)
            + brute_l1(g(g(y, 0.5, 0.0), 0.0, 0.5), y)
            + brute_l1(g(g(x, 0.5, 1.0), 1.0, 0.5), x)
            + brute_l1(g(g(z, 0.0, 0.5), 0.5, 0.0), z)
            + brute_l1(g(g(z, 1.0, 0.5), 0.5, 1.0), z)
        )
        assert cycle_loss_3dom(g, b).item() == pytest.approx(expected, abs=1e-12)


class TestIdentityAndAELoss:
    def test_identity_generator_zero(self):
        assert identity_loss_2dom(IdentityG(), toy_batches()).item() == 0.0
        assert ae_loss_3dom(IdentityG(), toy_batches(three=True)).item() == 0.0

    def test_constant_shift(self):
        # |c| from each of the two auto-encoding directions
        loss = identity_loss_2dom(ShiftAlwaysG(0.4), toy_batches())
        assert loss.item() == pytest.approx(2 * 0.4)

    def test_identity_matches_brute_force(self):
        b = toy_batches(seed=5)
        g = ShiftTowardSoftG(1.1)
        expected = brute_l1(g(b["sharp"], 0.0), b["sharp"]) + brute_l1(
            g(b["soft"], 1.0), b["soft"]
        )
        assert identity_loss_2dom(g, b).item() == pytest.approx(expected, abs=1e-12)

    def test_ae_constant_shift(self):
        loss = ae_loss_3dom(ShiftAlwaysG(0.4), toy_batches(three=True))
        assert loss.item() == pytest.approx(3 * 0.4)

    def test_ae_matches_brute_force(self):
        b = toy_batches(three=True, seed=6)
        g = ShiftByBetaG()
        expected = (
            brute_l1(g(b["sharp"], 0.0, 0.0), b["sharp"])
            + brute_l1(g(b["soft"], 1.0, 1.0), b["soft"])
            + brute_l1(g(b["middle"], 0.5, 0.5), b["middle"])
        )
        assert ae_loss_3dom(g, b).item() == pytest.approx(expected, abs=1e-12)


class TestSelfConsistency:
    def test_route_equals_direct_zero(self):
        assert self_consistency_loss(IdentityG(), toy_batches()).item() == 0.0
        # shifts only on the final soft-bound hop: route and direct agree
        assert self_consistency_loss(ShiftTowardSoftG(2.0), toy_batches()).item() == 0.0

    def test_shift_by_beta(self):
        # route H->M->S adds 0.5 + 1.0, direct adds 1.0 -> 0.5 per direction
        loss = self_consistency_loss(ShiftByBetaG(), toy_batches())
        assert loss.item() == pytest.approx(1.0)

    def test_matches_brute_force(self):
        b = toy_batches(seed=7)
        g = ShiftByBetaG()
        y, x = b["sharp"], b["soft"]
        expected = brute_l1(g(g(y, 0.5, 0.0), 1.0, 0.5), g(y, 1.0, 0.0)) + brute_l1(
            g(g(x, 0.5, 1.0), 0.0, 0.5), g(x, 0.0, 1.0)
        )
        assert self_consistency_loss(g, b).item() == pytest.approx(expected, abs=1e-12)


class TestSupervisedMSE:
    def test_identical_zero(self):
        x = torch.randn(2, 1, 4, 4)
        assert supervised_mse_loss(x, x).item() == 0.0

    def test_uniform_difference(self):
        x = torch.zeros(2, 1, 4, 4)
        assert supervised_mse_loss(x + 2.0, x).item() == pytest.approx(4.0)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(8)
        a = torch.as_tensor(rng.normal(size=(2, 1, 4, 4)))
        b = torch.as_tensor(rng.normal(size=(2, 1, 4, 4)))
        expected = float(np.mean((a.numpy() - b.numpy()) ** 2))
        assert supervised_mse_loss(a, b).item() == pytest.approx(expected, abs=1e-12)


class TestTotalLoss:
    def test_all_zero(self):
        report = total_loss(
            TWO_DOMAIN, LossWeights(), {"disc": 0.0, "cycle": 0.0, "identity": 0.0}
        )
        assert report.total == 0.0

    def test_two_domain_arithmetic(self):
        report = total_loss(
            TWO_DOMAIN,
            LossWeights(lambda_disc=1, lambda_cyc=10, lambda_id=5),
            {"disc": 2.0, "cycle": 0.3, "identity": 0.1},
        )
        assert report.total == pytest.approx(-2.0 + 3.0 + 0.5)

    def test_three_domain_arithmetic(self):
        report = total_loss(
            THREE_DOMAIN,
            LossWeights(lambda_disc=2, lambda_cyc=10, lambda_ae=5, lambda_sc=1),
            {"disc": 1.0, "cycle": 0.2, "ae": 0.4, "sc": 0.6},
        )
        assert report.total == pytest.approx(-2.0 + 2.0 + 2.0 + 0.6)

    def test_report_reproduces_weighted_sum(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            w = LossWeights(*rng.uniform(0, 10, size=5))
            terms = {k: float(v) for k, v in zip(("disc", "cycle", "identity"), rng.uniform(0, 3, 3))}
            report = total_loss(TWO_DOMAIN, w, terms)
            manual = (
                -w.lambda_disc * terms["disc"]
                + w.lambda_cyc * terms["cycle"]
                + w.lambda_id * terms["identity"]
            )
            assert abs(report.total - manual) < 1e-6

    def test_negative_weight_rejected(self):
        with pytest.raises(ContractError):
            LossWeights(lambda_disc=-1)


class TestProperties:
    def test_permutation_invariance(self):
        b = toy_batches(seed=10, n=4)
        g = ShiftTowardSoftG(0.3)
        base = cycle_loss_2dom(g, b).item()
        perm = torch.randperm(4)
        shuffled = {k: v[perm] for k, v in b.items()}
        assert cycle_loss_2dom(g, shuffled).item() == pytest.approx(base, abs=1e-12)

    def test_pixel_losses_non_negative(self):
        b = toy_batches(three=True, seed=11)
        g = ShiftByBetaG()
        for value in (
            cycle_loss_2dom(g, b),
            cycle_loss_3dom(g, b),
            identity_loss_2dom(g, b),
            ae_loss_3dom(g, b),
            self_consistency_loss(g, b),
        ):
            assert value.item() >= 0

    def test_gen_surrogate_zero_when_fooling(self):
        fake_h = torch.randn(2, 1, 4, 4)
        fake_s = torch.randn(2, 1, 4, 4)
        assert lsgan_gen_loss_2dom(const_d(0), const_d(0), fake_h, fake_s).item() == 0.0
