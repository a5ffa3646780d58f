"""Finite-difference gradient checks in double precision (tolerance 1e-3)."""

import pytest
import torch
from torch import nn

from fdutil import relative_gradient_error
from kshift.discriminator import DiscriminatorConfig, PatchDiscriminator
from kshift.generator import GeneratorConfig, build_single_generator, build_split_generator
from kshift.losses import (
    ae_loss_3dom,
    cycle_loss_2dom,
    cycle_loss_3dom,
    identity_loss_2dom,
    lsgan_disc_loss_2dom,
    lsgan_disc_loss_3dom,
    lsgan_gen_loss_2dom,
    self_consistency_loss,
    supervised_mse_loss,
)

TOL = 1e-3


class ToyG(nn.Module):
    """Minimal generator whose output depends smoothly on both coordinates."""

    def __init__(self, seed=0):
        super().__init__()
        torch.manual_seed(seed)
        self.conv = nn.Conv2d(1, 1, 3, padding=1).double()
        self.gain = nn.Parameter(torch.tensor(0.4, dtype=torch.float64))

    def __call__(self, z, beta, alpha=None):
        a = 0.0 if alpha is None else alpha
        return z + torch.tanh(self.conv(z)) * (0.3 + 0.5 * beta + 0.2 * a) + self.gain * beta

    forward = __call__


class ToyD(nn.Module):
    def __init__(self, seed=1):
        super().__init__()
        torch.manual_seed(seed)
        self.c1 = nn.Conv2d(1, 2, 3, stride=2, padding=1).double()
        self.c2 = nn.Conv2d(2, 1, 3, padding=1).double()

    def forward(self, x):
        return self.c2(torch.tanh(self.c1(x)))


def batches(three=False, seed=2, n=2, size=6):
    torch.manual_seed(seed)
    out = {
        "sharp": torch.randn(n, 1, size, size, dtype=torch.float64),
        "soft": torch.randn(n, 1, size, size, dtype=torch.float64),
    }
    if three:
        out["middle"] = torch.randn(n, 1, size, size, dtype=torch.float64)
    return out


@pytest.mark.slow
def test_tiny_generator_all_parameters():
    """The stated tiny instance: 2 levels, 4 base channels, 8x8 input."""
    torch.manual_seed(3)
    g = build_single_generator(GeneratorConfig(scale_levels=2, base_channels=4)).double()
    with torch.no_grad():
        for p in g.net.final.parameters():
            p.normal_(0, 0.05)
    x = torch.randn(1, 1, 8, 8, dtype=torch.float64)
    target = torch.randn(1, 1, 8, 8, dtype=torch.float64)

    def loss():
        return ((g.convert(x, 0.6) - target) ** 2).mean()

    assert relative_gradient_error(g, loss) < TOL


def test_tiny_split_generator_code_paths():
    """Gradients reach both split code generators through alpha and beta."""
    torch.manual_seed(4)
    g = build_split_generator(GeneratorConfig(scale_levels=2, base_channels=2)).double()
    x = torch.randn(1, 1, 8, 8, dtype=torch.float64)
    target = torch.randn(1, 1, 8, 8, dtype=torch.float64)

    def loss():
        return ((g.convert(x, 0.7, alpha=0.4) - target) ** 2).mean()

    bundle = nn.ModuleDict(
        {"enc": g.encoder_codegen, "dec": g.decoder_codegen}
    )
    assert relative_gradient_error(bundle, loss) < TOL


def test_tiny_discriminator_all_parameters():
    torch.manual_seed(5)
    cfg = DiscriminatorConfig.for_patch(48, channels=(4, 8, 8, 8, 1))
    d = PatchDiscriminator(cfg).double()
    x = torch.randn(1, 1, 48, 48, dtype=torch.float64)
    target = torch.randn(1, 1, cfg.output_size, cfg.output_size, dtype=torch.float64)

    def loss():
        return ((d(x) - target) ** 2).mean()

    assert relative_gradient_error(d, loss) < TOL


class TestLossTermGradients:
    def test_disc_loss_2dom_wrt_discriminators(self):
        b = batches()
        d_h, d_s = ToyD(6), ToyD(7)
        both = nn.ModuleDict({"h": d_h, "s": d_s})
        fake_h, fake_s = b["soft"] + 0.3, b["sharp"] - 0.2

        def loss():
            return lsgan_disc_loss_2dom(d_h, d_s, b["sharp"], b["soft"], fake_h, fake_s)

        assert relative_gradient_error(both, loss) < TOL

    def test_disc_loss_3dom_wrt_discriminators(self):
        b = batches(three=True)
        d_h, d_s, d_m = ToyD(8), ToyD(9), ToyD(10)
        all_d = nn.ModuleDict({"h": d_h, "s": d_s, "m": d_m})
        g = ToyG(11)

        def loss():
            return lsgan_disc_loss_3dom(d_h, d_s, d_m, b, g, detach_fakes=True)

        assert relative_gradient_error(all_d, loss) < TOL

    def test_gen_surrogate_wrt_generator(self):
        b = batches(seed=12)
        g = ToyG(13)
        d_h, d_s = ToyD(14), ToyD(15)

        def loss():
            return lsgan_gen_loss_2dom(d_h, d_s, g(b["soft"], 0.0), g(b["sharp"], 1.0))

        assert relative_gradient_error(g, loss) < TOL

    def test_printed_disc_loss_wrt_generator(self):
        b = batches(seed=16)
        g = ToyG(17)
        d_h, d_s = ToyD(18), ToyD(19)

        def loss():
            return lsgan_disc_loss_2dom(
                d_h, d_s, b["sharp"], b["soft"], g(b["soft"], 0.0), g(b["sharp"], 1.0)
            )

        assert relative_gradient_error(g, loss) < TOL

    def test_cycle_2dom(self):
        b = batches(seed=20)
        g = ToyG(21)
        assert relative_gradient_error(g, lambda: cycle_loss_2dom(g, b)) < TOL

    def test_cycle_3dom(self):
        b = batches(three=True, seed=22)
        g = ToyG(23)
        assert relative_gradient_error(g, lambda: cycle_loss_3dom(g, b)) < TOL

    def test_identity_2dom(self):
        b = batches(seed=24)
        g = ToyG(25)
        assert relative_gradient_error(g, lambda: identity_loss_2dom(g, b)) < TOL

    def test_ae_3dom(self):
        b = batches(three=True, seed=26)
        g = ToyG(27)
        assert relative_gradient_error(g, lambda: ae_loss_3dom(g, b)) < TOL

    def test_self_consistency(self):
        b = batches(seed=28)
        g = ToyG(29)
        assert relative_gradient_error(g, lambda: self_consistency_loss(g, b)) < TOL

    def test_supervised_mse(self):
        b = batches(seed=30)
        g = ToyG(31)

        def loss():
            return supervised_mse_loss(g(b["sharp"], 1.0), b["soft"])

        assert relative_gradient_error(g, loss) < TOL
