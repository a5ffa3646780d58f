"""Command-line workflow: phantom-gen, train, convert, sweep, evaluate, serve."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import load_model
from .data import (
    PhantomSpec,
    generate_phantom_dataset,
    load_phantom_dataset,
    load_volume,
    save_volume,
    write_phantom_dataset,
)
from .errors import KShiftError
from .inference import convert_volume
from .metrics import DEFAULT_MAX_HU, difference_display, evaluate_volumes
from .store import Store
from .training import TrainingConfig, run_kfold, train


def _add_phantom_gen(sub):
    p = sub.add_parser("phantom-gen", help="generate a paired synthetic phantom dataset")
    p.add_argument("--out", required=True, help="output directory for .ksvol stacks")
    p.add_argument("--subjects", type=int, default=4)
    p.add_argument("--slices", type=int, default=50, help="slices per subject")
    p.add_argument("--size", type=int, default=96, help="square slice size in pixels")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--soft-blur", type=float, default=2.0, help="soft kernel blur sigma (px)")
    p.add_argument("--boost", type=float, default=1.5, help="sharp kernel high-pass gain")
    p.add_argument("--noise-soft", type=float, default=4.0, help="soft kernel noise (HU)")
    p.add_argument("--noise-sharp", type=float, default=12.0, help="sharp kernel noise (HU)")


def _cmd_phantom_gen(args) -> int:
    spec = PhantomSpec(
        n_subjects=args.subjects,
        slices_per_subject=args.slices,
        image_size=args.size,
        soft_blur_sigma=args.soft_blur,
        sharp_boost_gain=args.boost,
        noise_sigma_soft=args.noise_soft,
        noise_sigma_sharp=args.noise_sharp,
        seed=args.seed,
    )
    manifest = write_phantom_dataset(generate_phantom_dataset(spec), args.out)
    print(f"wrote phantom dataset to {Path(args.out).resolve()} ({manifest.name})")
    return 0


def _add_train(sub):
    p = sub.add_parser("train", help="train a conversion model")
    p.add_argument("--config", required=True, help="training config JSON")
    p.add_argument("--data", required=True, help="directory of .ksvol volumes")
    p.add_argument("--out", required=True, help="run output directory")
    p.add_argument(
        "--val-fraction", type=float, default=0.25,
        help="fraction of subjects held out for validation (ignored with --kfold)",
    )
    p.add_argument("--kfold", action="store_true",
                   help="run the config's k-fold cross-validation harness")


def _cmd_train(args) -> int:
    config = TrainingConfig.from_dict(json.loads(Path(args.config).read_text()))
    volumes = load_phantom_dataset(args.data)
    if args.kfold:
        results = run_kfold(config, volumes, args.out)
        for fold, result in results:
            print(f"fold {fold.fold_index}: best={result.best_checkpoint}")
        return 0
    subjects = sorted({v.subject_id for records in volumes.values() for v in records})
    n_val = max(1, int(round(len(subjects) * args.val_fraction)))
    if n_val >= len(subjects):
        raise KShiftError("validation fraction leaves no training subjects")
    val_ids = set(subjects[-n_val:])
    train_vols = {
        k: [v for v in records if v.subject_id not in val_ids]
        for k, records in volumes.items()
    }
    val_vols = {
        k: [v for v in records if v.subject_id in val_ids]
        for k, records in volumes.items()
    }
    result = train(config, train_vols, val_vols, args.out)
    print(f"final checkpoint: {result.final_checkpoint}")
    print(f"best checkpoint:  {result.best_checkpoint} (step {result.best_record.step})")
    print(f"history:          {result.history_path}")
    return 0


def _add_convert(sub):
    p = sub.add_parser("convert", help="convert a volume at one (alpha, beta)")
    p.add_argument("--model", required=True, help="KSHIFT1 checkpoint path")
    p.add_argument("--volume", required=True, help="input .ksvol")
    p.add_argument("--beta", type=float, required=True, help="target coordinate in [0,1]")
    p.add_argument("--alpha", type=float, default=None, help="source coordinate (split models)")
    p.add_argument("--out", required=True, help="output .ksvol")


def _cmd_convert(args) -> int:
    bundle = load_model(args.model)
    record = load_volume(args.volume)
    converted = convert_volume(bundle, record, args.beta, args.alpha)
    save_volume(converted, args.out)
    print(f"wrote {args.out}")
    return 0


def _add_sweep(sub):
    p = sub.add_parser("sweep", help="convert a volume at a list of beta values")
    p.add_argument("--model", required=True)
    p.add_argument("--volume", required=True)
    p.add_argument("--betas", required=True, help="comma-separated betas, e.g. 0,0.5,1")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--out", required=True, help="output directory")


def _cmd_sweep(args) -> int:
    bundle = load_model(args.model)
    record = load_volume(args.volume)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    betas = [float(b) for b in args.betas.split(",") if b.strip() != ""]
    if not betas:
        raise KShiftError("no beta values given")
    for beta in betas:
        converted = convert_volume(bundle, record, beta, args.alpha)
        path = out_dir / f"{record.subject_id}_beta{beta:g}.ksvol"
        save_volume(converted, path)
        print(f"wrote {path}")
    return 0


def _add_evaluate(sub):
    p = sub.add_parser("evaluate", help="PSNR/SSIM of a converted volume vs a reference")
    p.add_argument("--converted", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--report", required=True, help="output report JSON")
    p.add_argument("--max-value", type=float, default=DEFAULT_MAX_HU)
    p.add_argument("--diff-dir", default=None,
                   help="write per-slice |difference| PNGs ((-200,200) HU window)")


def _cmd_evaluate(args) -> int:
    converted = load_volume(args.converted)
    reference = load_volume(args.reference)
    report = evaluate_volumes(
        converted.slices.astype(np.float64),
        reference.slices.astype(np.float64),
        max_value=args.max_value,
    )
    report_path = Path(args.report)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    body = {
        "format": "kshift-evaluation/1",
        "converted": str(args.converted),
        "reference": str(args.reference),
        "max_value": args.max_value,
        **report.as_dict(),
    }
    tmp = report_path.with_suffix(report_path.suffix + ".tmp")
    tmp.write_text(json.dumps(body, indent=2))
    tmp.replace(report_path)
    if args.diff_dir:
        from PIL import Image

        diff_dir = Path(args.diff_dir)
        diff_dir.mkdir(parents=True, exist_ok=True)
        for i in range(converted.n_slices):
            display = difference_display(
                converted.slices[i].astype(np.float64),
                reference.slices[i].astype(np.float64),
            )
            Image.fromarray(display, mode="L").save(diff_dir / f"diff_{i:04d}.png")
    psnr_text = "inf" if report.psnr == float("inf") else f"{report.psnr:.4f}"
    print(f"PSNR {psnr_text} dB, SSIM {report.ssim:.4f} -> {report_path}")
    return 0


def _add_serve(sub):
    p = sub.add_parser("serve", help="start the HTTP inference service")
    p.add_argument("--store", default=None,
                   help="store root (default: KSHIFT_STORE environment variable)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--model", action="append", default=[],
                   help="checkpoint to register at startup (repeatable)")


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    store = Store(args.store)
    for path in args.model:
        manifest = store.register_model(path)
        print(f"registered model {manifest.model_id} ({manifest.mode})")
    uvicorn.run(create_app(store), host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kshift",
        description="Continuous CT kernel conversion: data, training, inference, service.",
    )
    parser.add_argument("--version", action="version", version=f"kshift {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_phantom_gen(sub)
    _add_train(sub)
    _add_convert(sub)
    _add_sweep(sub)
    _add_evaluate(sub)
    _add_serve(sub)
    return parser


COMMANDS = {
    "phantom-gen": _cmd_phantom_gen,
    "train": _cmd_train,
    "convert": _cmd_convert,
    "sweep": _cmd_sweep,
    "evaluate": _cmd_evaluate,
    "serve": _cmd_serve,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except KShiftError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
