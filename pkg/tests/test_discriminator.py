"""PatchGAN discriminator contracts."""

import pytest
import torch

from kshift.discriminator import (
    DiscriminatorConfig,
    PatchDiscriminator,
    discriminator_forward,
)
from kshift.errors import ContractError


class TestConfig:
    def test_default_trace_128_to_24(self):
        cfg = DiscriminatorConfig()
        assert cfg.input_size == 128
        assert cfg.output_size == 24

    def test_inconsistent_output_rejected(self):
        with pytest.raises(ContractError):
            DiscriminatorConfig(input_size=128, output_size=30)

    def test_wrong_layer_count_rejected(self):
        with pytest.raises(ContractError):
            DiscriminatorConfig(channels=(64, 128, 1))

    def test_for_patch_64(self):
        cfg = DiscriminatorConfig.for_patch(64)
        assert cfg.output_size == 8


class TestForward:
    def setup_method(self):
        torch.manual_seed(0)
        self.d = PatchDiscriminator(DiscriminatorConfig())

    def test_score_map_shape(self):
        out = self.d(torch.randn(1, 1, 128, 128))
        assert out.shape == (1, 1, 24, 24)

    def test_batch_order_preserved(self):
        batch = torch.randn(4, 1, 128, 128)
        whole = self.d(batch)
        for i in range(4):
            single = self.d(batch[i : i + 1])
            assert torch.allclose(whole[i : i + 1], single, atol=1e-6)

    def test_wrong_size_rejected(self):
        with pytest.raises(ContractError):
            self.d(torch.randn(1, 1, 127, 128))

    def test_forward_wrapper(self):
        out = discriminator_forward(self.d, torch.zeros(2, 1, 128, 128))
        assert out.shape == (2, 1, 24, 24)

    def test_small_patch_config(self):
        torch.manual_seed(1)
        cfg = DiscriminatorConfig.for_patch(64, channels=(8, 16, 16, 16, 1))
        d = PatchDiscriminator(cfg)
        assert d(torch.randn(1, 1, 64, 64)).shape == (1, 1, 8, 8)
