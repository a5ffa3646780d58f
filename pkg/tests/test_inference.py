"""Full-slice conversion: padding behavior and shape/determinism contracts."""

import numpy as np
import pytest
import torch

from kshift.checkpoint import build_models
from kshift.data import VolumeRecord
from kshift.discriminator import DiscriminatorConfig
from kshift.errors import UnsupportedModeError
from kshift.generator import GeneratorConfig
from kshift.inference import convert_slices, convert_volume, pad_to_multiple


def bundle(mode="switchable_2dom"):
    torch.manual_seed(0)
    disc = DiscriminatorConfig.for_patch(48, channels=(4, 8, 8, 8, 1))
    return build_models(mode, GeneratorConfig(scale_levels=2, base_channels=4), disc)


class TestPadding:
    def test_exact_multiple_untouched(self):
        img = np.random.default_rng(0).normal(size=(16, 16))
        padded, size = pad_to_multiple(img, 4)
        assert padded.shape == (16, 16)
        assert size == (16, 16)

    def test_reflect_pad_and_size(self):
        img = np.arange(30.0).reshape(5, 6)
        padded, size = pad_to_multiple(img, 4)
        assert padded.shape == (8, 8)
        assert size == (5, 6)
        np.testing.assert_array_equal(padded[:5, :6], img)
        # reflect: row 5 mirrors row 3 (without repeating the edge)
        np.testing.assert_array_equal(padded[5, :6], img[3])


class TestConvertSlices:
    def test_output_matches_input_shape(self):
        b = bundle()
        rng = np.random.default_rng(1)
        for shape in [(1, 48, 48), (3, 50, 44), (2, 96, 96)]:
            stack = rng.integers(-800, 800, size=shape).astype(np.int16)
            out = convert_slices(b, stack, beta=1.0)
            assert out.shape == shape
            assert out.dtype == np.int16

    def test_deterministic(self):
        b = bundle()
        stack = np.random.default_rng(2).integers(-500, 500, size=(2, 48, 48)).astype(np.int16)
        a = convert_slices(b, stack, beta=0.5)
        c = convert_slices(b, stack, beta=0.5)
        assert np.array_equal(a, c)

    def test_volume_wrapper_keeps_metadata(self):
        b = bundle()
        record = VolumeRecord(
            "subj", "sharp",
            np.zeros((2, 48, 48), dtype=np.int16), (0.7, 0.7),
        )
        out = convert_volume(b, record, beta=1.0)
        assert out.subject_id == "subj"
        assert out.pixel_spacing == (0.7, 0.7)
        assert out.kernel_label == "converted_b1"

    def test_mode_mismatch_raises(self):
        b = bundle()
        stack = np.zeros((1, 48, 48), dtype=np.int16)
        with pytest.raises(UnsupportedModeError):
            convert_slices(b, stack, beta=0.5, alpha=0.5)

    def test_split_mode_alpha_routing(self):
        b = bundle("switchable_3dom")
        stack = np.zeros((1, 48, 48), dtype=np.int16)
        out = convert_slices(b, stack, beta=0.5, alpha=1.0)
        assert out.shape == (1, 48, 48)
        with pytest.raises(UnsupportedModeError):
            convert_slices(b, stack, beta=0.5)
