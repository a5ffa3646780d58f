#!/usr/bin/env python3
"""End-to-end desk-scale experiment on the synthetic phantom.

Generates the paired phantom, trains the two-domain switchable model, then
reports conversion PSNR against ground truth, the high-band trajectory of a
beta sweep, and classical-baseline numbers for comparison. Everything runs on
CPU; expect roughly half an hour with the default settings.

Usage:
    python scripts/run_desk_experiment.py --out runs/desk [--steps 2000]
"""

import argparse
import json
import time
from pathlib import Path

import numpy as np
import torch

from kshift.data import (
    MIDDLE,
    SHARP,
    SOFT,
    PhantomSpec,
    generate_phantom_dataset,
    write_phantom_dataset,
)
from kshift.generator import GeneratorConfig
from kshift.inference import convert_slices
from kshift.losses import LossWeights
from kshift.metrics import (
    band_energies,
    classical_sharpen,
    classical_smooth,
    highband_energy,
    psnr,
    ssim,
)
from kshift.training import TrainingConfig, train

HB_CUTOFF = 0.25


def desk_phantom():
    return PhantomSpec(n_subjects=5, slices_per_subject=40, image_size=96, seed=101)


def desk_train_config(steps: int) -> TrainingConfig:
    return TrainingConfig(
        mode="switchable_2dom",
        weights=LossWeights(lambda_disc=2.0, lambda_cyc=5.0, lambda_id=2.0),
        generator=GeneratorConfig(scale_levels=2, base_channels=12),
        discriminator_channels=(64, 128, 128, 128, 1),
        patch_size=64,
        batch_size=2,
        iterations=steps,
        eval_interval=500,
        learning_rate=2e-4,
        seed=5,
        validation_slices=6,
    )


def mean_psnr(a, b):
    return float(np.mean([psnr(x, y) for x, y in zip(a, b)]))


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/desk")
    parser.add_argument("--steps", type=int, default=2000)
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    torch.set_num_threads(max(1, torch.get_num_threads()))
    dataset = generate_phantom_dataset(desk_phantom())
    write_phantom_dataset(dataset, out / "phantom")
    train_vols = {k: v[:3] for k, v in dataset.volumes.items()}
    val_vols = {k: v[3:4] for k, v in dataset.volumes.items()}
    test = {k: v[4] for k, v in dataset.volumes.items()}

    started = time.time()
    result = train(desk_train_config(args.steps), train_vols, val_vols, out / "train")
    from kshift.checkpoint import load_model

    bundle = load_model(result.final_checkpoint)
    print(f"training took {time.time() - started:.0f}s; best step {result.best_record.step}")

    test_sharp = test[SHARP].slices.astype(np.float64)
    test_soft = test[SOFT].slices.astype(np.float64)
    report = {}

    base = mean_psnr(test_sharp, test_soft)
    to_soft = convert_slices(bundle, test[SHARP].slices, 1.0).astype(np.float64)
    report["sharp_to_soft"] = {
        "baseline_psnr": base,
        "converted_psnr": mean_psnr(to_soft, test_soft),
        "converted_ssim": float(np.mean([ssim(a, b) for a, b in zip(to_soft, test_soft)])),
    }

    to_sharp = convert_slices(bundle, test[SOFT].slices, 0.0).astype(np.float64)
    hb = lambda stack: float(np.mean([highband_energy(s, HB_CUTOFF) for s in stack]))
    report["soft_to_sharp"] = {
        "baseline_psnr": mean_psnr(test_soft, test_sharp),
        "converted_psnr": mean_psnr(to_sharp, test_sharp),
        "highband_converted": hb(to_sharp),
        "highband_real_sharp": hb(test_sharp),
    }

    betas = [round(b, 1) for b in np.linspace(0, 1, 11)]
    sweep = []
    for beta in betas:
        converted = convert_slices(bundle, test[SHARP].slices[:8], beta).astype(np.float64)
        sweep.append(hb(converted))
    report["beta_sweep"] = {"betas": betas, "highband": sweep}

    # classical baselines on the same test subject
    soft_profile = np.mean([band_energies(s) for s in test_soft], axis=0)
    smoothed = np.stack([classical_smooth(s, soft_profile) for s in test_sharp])
    sharpened = np.stack(
        [classical_sharpen(s, psf_sigma=dataset.spec.soft_blur_sigma) for s in test_soft]
    )
    report["classical"] = {
        "smooth_psnr": mean_psnr(smoothed, test_soft),
        "sharpen_psnr": mean_psnr(sharpened, test_sharp),
    }

    (out / "report.json").write_text(json.dumps(report, indent=2))
    print(json.dumps(report, indent=2))


if __name__ == "__main__":
    main()
