"""Optimization loops for the four training modes, plus the k-fold harness.

Each iteration runs one discriminator update followed by one generator update
(Adam for both). The printed min-max objective is reported every step; the
generator's adversarial gradient defaults to the non-saturating least-squares
surrogate (push fakes to the real label), with the literal printed form
available through ``generator_adversarial="printed_minmax"``.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .checkpoint import (
    SHARP_TO_SOFT,
    SOFT_TO_SHARP,
    ModelBundle,
    build_models,
    bundle_to_payload,
    config_digest,
    load_checkpoint,
    save_checkpoint,
)
from .data import (
    MIDDLE,
    SHARP,
    SOFT,
    VolumeRecord,
    sample_paired_patches,
    sample_patches,
)
from .discriminator import DiscriminatorConfig
from .errors import ConfigError, ContractError, TrainingDivergedError
from .generator import GeneratorConfig
from .inference import convert_slices
from .losses import (
    MODES,
    SUPERVISED,
    THREE_DOMAIN,
    TWO_DOMAIN,
    VANILLA,
    LossWeights,
    ae_loss_3dom,
    cycle_loss_2dom,
    cycle_loss_3dom,
    identity_loss_2dom,
    lsgan_disc_loss_2dom,
    lsgan_disc_terms_3dom,
    lsgan_gen_loss_2dom,
    lsgan_gen_loss_3dom,
    make_fakes_3dom,
    self_consistency_loss,
    supervised_mse_loss,
    total_loss,
)
from .metrics import psnr, ssim

NON_SATURATING = "non_saturating"
PRINTED_MINMAX = "printed_minmax"


@dataclass
class TrainingConfig:
    mode: str = TWO_DOMAIN
    weights: LossWeights = field(default_factory=LossWeights)
    learning_rate: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    batch_size: int = 8
    patch_size: int = 128
    iterations: int = 2000
    seed: int = 0
    folds: int = 1
    fine_tune_from: str | None = None
    eval_interval: int = 200
    strict_determinism: bool = False
    supervised_direction: str = SHARP_TO_SOFT
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminator_channels: tuple[int, ...] = (64, 128, 256, 256, 1)
    generator_adversarial: str = NON_SATURATING
    validation_slices: int = 8

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.learning_rate <= 0 or self.batch_size < 1 or self.iterations < 1:
            raise ConfigError("learning_rate, batch_size and iterations must be positive")
        if self.folds < 1:
            raise ConfigError("folds must be >= 1")
        if self.patch_size % (2 ** self.generator.scale_levels):
            raise ConfigError(
                f"patch_size {self.patch_size} not divisible by "
                f"2^{self.generator.scale_levels}"
            )
        if self.generator_adversarial not in (NON_SATURATING, PRINTED_MINMAX):
            raise ConfigError(f"unknown adversarial form {self.generator_adversarial}")
        if self.supervised_direction not in (SHARP_TO_SOFT, SOFT_TO_SHARP):
            raise ConfigError(f"unknown direction {self.supervised_direction}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["generator"]["adain_block_ids"] = list(self.generator.adain_block_ids)
        d["discriminator_channels"] = list(self.discriminator_channels)
        return d

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainingConfig":
        raw = dict(raw)
        if "weights" in raw and isinstance(raw["weights"], dict):
            raw["weights"] = LossWeights(**raw["weights"])
        if "generator" in raw and isinstance(raw["generator"], dict):
            gen = dict(raw["generator"])
            gen["adain_block_ids"] = tuple(gen.get("adain_block_ids", ()))
            raw["generator"] = GeneratorConfig(**gen)
        if "discriminator_channels" in raw:
            raw["discriminator_channels"] = tuple(raw["discriminator_channels"])
        unknown = set(raw) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**raw)

    def digest(self) -> str:
        return config_digest(self.to_dict())


@dataclass
class CheckpointRecord:
    step: int
    validation_psnr_sharp: float
    validation_psnr_soft: float
    validation_ssim_sharp: float
    validation_ssim_soft: float
    path: str

    def mean_psnr(self) -> float:
        return 0.5 * (self.validation_psnr_sharp + self.validation_psnr_soft)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def select_best_checkpoint(records: list[CheckpointRecord]) -> CheckpointRecord:
    """Highest mean validation PSNR; ties go to the later step."""
    if not records:
        raise ContractError("no checkpoint records to select from")
    best = records[0]
    for record in records[1:]:
        if record.mean_psnr() >= best.mean_psnr():
            best = record
    return best


@dataclass
class FoldSplit:
    fold_index: int
    train_ids: tuple[str, ...]
    validation_ids: tuple[str, ...]
    test_ids: tuple[str, ...]


def kfold_split(subject_ids, k: int, seed: int) -> list[FoldSplit]:
    """Subject-level folds: rotate one group as test, the next as validation."""
    ids = list(subject_ids)
    if len(set(ids)) != len(ids):
        raise ContractError("subject ids must be unique")
    # k = 2 would leave no training subjects after test + validation rotation
    if k < 3 or k > len(ids):
        raise ContractError(f"k must be in [3, {len(ids)}], got {k}")
    order = np.random.default_rng(seed).permutation(len(ids))
    shuffled = [ids[i] for i in order]
    groups = [list(g) for g in np.array_split(shuffled, k)]
    folds = []
    for i in range(k):
        test = tuple(groups[i])
        val = tuple(groups[(i + 1) % k])
        train = tuple(
            s for j, g in enumerate(groups) if j not in (i, (i + 1) % k) for s in g
        )
        folds.append(FoldSplit(i, train, val, test))
    return folds


# ---------------------------------------------------------------------------
# trainer
# ---------------------------------------------------------------------------

def _to_torch(batch) -> torch.Tensor:
    return torch.as_tensor(
        batch.patches[:, :, :, 0], dtype=torch.float32
    ).unsqueeze(1)


class Trainer:
    """Mutable optimization state for one training run."""

    def __init__(self, config: TrainingConfig,
                 data: dict[str, list[VolumeRecord]]):
        self.config = config
        self.data = data
        self._validate_domains()
        torch.manual_seed(config.seed)
        # set explicitly both ways so one run's strict mode cannot leak into
        # the next run's numerics within the same process
        torch.use_deterministic_algorithms(config.strict_determinism)
        if config.strict_determinism:
            torch.set_num_threads(1)
        disc_cfg = None
        if config.mode != SUPERVISED:
            disc_cfg = DiscriminatorConfig.for_patch(
                config.patch_size, channels=config.discriminator_channels
            )
        self.bundle = build_models(
            config.mode,
            config.generator,
            disc_cfg,
            supervised_direction=config.supervised_direction,
        )
        if config.fine_tune_from:
            payload = load_checkpoint(config.fine_tune_from)
            self.bundle.load_tensors(payload.tensors)
        self.opt_g = torch.optim.Adam(
            list(self.bundle.generator_parameters()),
            lr=config.learning_rate,
            betas=(config.adam_beta1, config.adam_beta2),
        )
        self.opt_d = None
        if config.mode != SUPERVISED:
            self.opt_d = torch.optim.Adam(
                list(self.bundle.discriminator_parameters()),
                lr=config.learning_rate,
                betas=(config.adam_beta1, config.adam_beta2),
            )
        self.rngs = {
            label: np.random.default_rng([config.seed, i, 7919])
            for i, label in enumerate((SHARP, SOFT, MIDDLE, "paired"))
        }
        self.step = 0

    def _validate_domains(self):
        required = {
            TWO_DOMAIN: (SHARP, SOFT),
            VANILLA: (SHARP, SOFT),
            THREE_DOMAIN: (SHARP, SOFT, MIDDLE),
            SUPERVISED: (SHARP, SOFT),
        }[self.config.mode]
        for label in required:
            if not self.data.get(label):
                raise ConfigError(f"mode {self.config.mode} requires '{label}' volumes")
        if self.config.mode == SUPERVISED:
            a, b = self.data[SHARP], self.data[SOFT]
            if len(a) != len(b) or any(
                x.subject_id != y.subject_id or x.slices.shape != y.slices.shape
                for x, y in zip(a, b)
            ):
                raise ConfigError("supervised mode requires paired, aligned volumes")

    # -- batches ------------------------------------------------------------

    def draw_batches(self) -> dict[str, torch.Tensor]:
        cfg = self.config
        if cfg.mode == SUPERVISED:
            a, b = sample_paired_patches(
                self.data[SHARP], self.data[SOFT],
                cfg.patch_size, cfg.batch_size, self.rngs["paired"],
            )
            return {SHARP: _to_torch(a), SOFT: _to_torch(b)}
        labels = (SHARP, SOFT, MIDDLE) if cfg.mode == THREE_DOMAIN else (SHARP, SOFT)
        return {
            label: _to_torch(
                sample_patches(self.data[label], cfg.patch_size, cfg.batch_size,
                               self.rngs[label])
            )
            for label in labels
        }

    # -- one optimization step per mode --------------------------------------

    def train_step(self, batches: dict[str, torch.Tensor]) -> dict[str, float]:
        mode = self.config.mode
        if mode in (TWO_DOMAIN, VANILLA):
            return self._step_2dom(batches)
        if mode == THREE_DOMAIN:
            return self._step_3dom(batches)
        return self._step_supervised(batches)

    def _g(self):
        return self.bundle.convert

    def _step_2dom(self, batches) -> dict[str, float]:
        cfg, w = self.config, self.config.weights
        g = self._g()
        d_h = self.bundle.discriminators["sharp"]
        d_s = self.bundle.discriminators["soft"]
        y, x = batches[SHARP], batches[SOFT]

        with torch.no_grad():
            fake_h = g(x, 0.0)
            fake_s = g(y, 1.0)
        d_loss = lsgan_disc_loss_2dom(d_h, d_s, y, x, fake_h, fake_s)
        self.opt_d.zero_grad()
        d_loss.backward()
        self.opt_d.step()

        fake_h = g(x, 0.0)
        fake_s = g(y, 1.0)
        if cfg.generator_adversarial == NON_SATURATING:
            gen_adv = lsgan_gen_loss_2dom(d_h, d_s, fake_h, fake_s)
            adv_part = w.lambda_disc * gen_adv
        else:
            gen_adv = lsgan_disc_loss_2dom(d_h, d_s, y, x, fake_h, fake_s)
            adv_part = -w.lambda_disc * gen_adv
        cyc = (
            (g(fake_s, 0.0) - y).abs().mean() + (g(fake_h, 1.0) - x).abs().mean()
        )
        ident = identity_loss_2dom(g, batches)
        g_loss = adv_part + w.lambda_cyc * cyc + w.lambda_id * ident
        self.opt_g.zero_grad()
        g_loss.backward()
        self.opt_g.step()

        report = total_loss(
            cfg.mode, w, {"disc": d_loss, "cycle": cyc, "identity": ident}
        )
        terms = dict(report.terms)
        terms.update(gen_adv=gen_adv.item(), total=report.total,
                     gen_objective=g_loss.item())
        return terms

    def _step_3dom(self, batches) -> dict[str, float]:
        cfg, w = self.config, self.config.weights
        g = self._g()
        d_h = self.bundle.discriminators["sharp"]
        d_s = self.bundle.discriminators["soft"]
        d_m = self.bundle.discriminators["middle"]
        y, x, z = batches[SHARP], batches[SOFT], batches[MIDDLE]

        with torch.no_grad():
            frozen = make_fakes_3dom(g, batches)
        d_loss = lsgan_disc_terms_3dom(d_h, d_s, d_m, batches, frozen)
        self.opt_d.zero_grad()
        d_loss.backward()
        self.opt_d.step()

        fakes = make_fakes_3dom(g, batches)
        if cfg.generator_adversarial == NON_SATURATING:
            gen_adv = lsgan_gen_loss_3dom(d_h, d_s, d_m, fakes)
            adv_part = w.lambda_disc * gen_adv
        else:
            gen_adv = lsgan_disc_terms_3dom(d_h, d_s, d_m, batches, fakes)
            adv_part = -w.lambda_disc * gen_adv
        cyc = (
            (g(fakes["s_from_h"], 0.0, 1.0) - y).abs().mean()
            + (g(fakes["h_from_s"], 1.0, 0.0) - x).abs().mean()
            + (g(fakes["m_from_h"], 0.0, 0.5) - y).abs().mean()
            + (g(fakes["m_from_s"], 1.0, 0.5) - x).abs().mean()
            + (g(fakes["h_from_m"], 0.5, 0.0) - z).abs().mean()
            + (g(fakes["s_from_m"], 0.5, 1.0) - z).abs().mean()
        )
        ae = ae_loss_3dom(g, batches)
        sc = (
            (g(fakes["m_from_h"], 1.0, 0.5) - fakes["s_from_h"]).abs().mean()
            + (g(fakes["m_from_s"], 0.0, 0.5) - fakes["h_from_s"]).abs().mean()
        )
        g_loss = adv_part + w.lambda_cyc * cyc + w.lambda_ae * ae + w.lambda_sc * sc
        self.opt_g.zero_grad()
        g_loss.backward()
        self.opt_g.step()

        report = total_loss(
            cfg.mode, w, {"disc": d_loss, "cycle": cyc, "ae": ae, "sc": sc}
        )
        terms = dict(report.terms)
        terms.update(gen_adv=gen_adv.item(), total=report.total,
                     gen_objective=g_loss.item())
        return terms

    def _step_supervised(self, batches) -> dict[str, float]:
        if self.config.supervised_direction == SHARP_TO_SOFT:
            inputs, targets = batches[SHARP], batches[SOFT]
        else:
            inputs, targets = batches[SOFT], batches[SHARP]
        out = self.bundle.supervised_net(inputs)
        loss = supervised_mse_loss(out, targets)
        self.opt_g.zero_grad()
        loss.backward()
        self.opt_g.step()
        report = total_loss(SUPERVISED, self.config.weights, {"mse": loss})
        return {"mse": loss.item(), "total": report.total}


# public step functions mirroring the per-mode contracts

def train_step_2dom(trainer: Trainer, batches) -> dict[str, float]:
    return trainer._step_2dom(batches)


def train_step_3dom(trainer: Trainer, batches) -> dict[str, float]:
    return trainer._step_3dom(batches)


def train_step_vanilla(trainer: Trainer, batches) -> dict[str, float]:
    return trainer._step_2dom(batches)


def train_step_supervised(trainer: Trainer, batches) -> dict[str, float]:
    return trainer._step_supervised(batches)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def _paired_validation_slices(val_data, a_label, b_label, limit):
    pairs = []
    a_by_subject = {v.subject_id: v for v in val_data.get(a_label, [])}
    for vb in val_data.get(b_label, []):
        va = a_by_subject.get(vb.subject_id)
        if va is None or va.slices.shape != vb.slices.shape:
            continue
        for i in range(va.n_slices):
            pairs.append((va.slices[i], vb.slices[i]))
    if len(pairs) > limit:
        stride = len(pairs) / limit
        pairs = [pairs[int(i * stride)] for i in range(limit)]
    return pairs


def validation_metrics(bundle: ModelBundle, val_data, config: TrainingConfig) -> dict:
    """PSNR/SSIM of both conversion directions on paired validation slices."""
    limit = config.validation_slices
    out = {}
    directions = (
        ("sharp", SOFT, SHARP, 0.0, 1.0),  # generate sharp from soft inputs
        ("soft", SHARP, SOFT, 1.0, 0.0),   # generate soft from sharp inputs
    )
    for name, src_label, tgt_label, beta, src_coord in directions:
        pairs = _paired_validation_slices(val_data, src_label, tgt_label, limit)
        if not pairs:
            raise ConfigError(f"no paired validation slices for {src_label}->{tgt_label}")
        inputs = np.stack([p[0] for p in pairs])
        targets = np.stack([p[1] for p in pairs]).astype(np.float64)
        supports = True
        if bundle.mode == SUPERVISED:
            wanted = SHARP_TO_SOFT if name == "soft" else SOFT_TO_SHARP
            supports = bundle.supervised_direction == wanted
        if supports:
            alpha = src_coord if bundle.mode == THREE_DOMAIN else None
            converted = convert_slices(bundle, inputs, beta, alpha).astype(np.float64)
        else:
            # untrained direction of a one-way model: report the input baseline
            converted = inputs.astype(np.float64)
        psnrs = [psnr(c, t) for c, t in zip(converted, targets)]
        ssims = [ssim(c, t) for c, t in zip(converted, targets)]
        finite = [p for p in psnrs if not math.isinf(p)]
        out[f"psnr_{name}"] = float(np.mean(finite)) if finite else math.inf
        out[f"ssim_{name}"] = float(np.mean(ssims))
    return out


# ---------------------------------------------------------------------------
# main loop
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    final_checkpoint: Path
    best_checkpoint: Path
    history_path: Path
    records: list[CheckpointRecord]
    best_record: CheckpointRecord


def train(
    config: TrainingConfig,
    data: dict[str, list[VolumeRecord]],
    val_data: dict[str, list[VolumeRecord]],
    out_dir,
) -> TrainResult:
    """Run one training job; returns final/best checkpoints and the history log."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    trainer = Trainer(config, data)
    digest = config.digest()
    (out_dir / "config.json").write_text(json.dumps(config.to_dict(), indent=2))

    history_path = out_dir / "history.jsonl"
    records: list[CheckpointRecord] = []
    with open(history_path, "w") as history:
        for step in range(1, config.iterations + 1):
            trainer.step = step
            batches = trainer.draw_batches()
            terms = trainer.train_step(batches)
            if not all(math.isfinite(v) for v in terms.values()):
                raise TrainingDivergedError(
                    f"non-finite loss at step {step}: {terms}"
                )
            entry = {"step": step, **terms}
            if step % config.eval_interval == 0 or step == config.iterations:
                metrics = validation_metrics(trainer.bundle, val_data, config)
                ckpt_path = out_dir / f"ckpt_step{step:06d}.kshift"
                save_checkpoint(
                    ckpt_path,
                    bundle_to_payload(
                        trainer.bundle, digest,
                        extra={"step": step, "validation": metrics},
                    ),
                )
                records.append(
                    CheckpointRecord(
                        step=step,
                        validation_psnr_sharp=metrics["psnr_sharp"],
                        validation_psnr_soft=metrics["psnr_soft"],
                        validation_ssim_sharp=metrics["ssim_sharp"],
                        validation_ssim_soft=metrics["ssim_soft"],
                        path=str(ckpt_path),
                    )
                )
                entry["validation"] = metrics
            history.write(json.dumps(entry) + "\n")

    final_path = out_dir / "final.kshift"
    save_checkpoint(
        final_path,
        bundle_to_payload(trainer.bundle, digest, extra={"step": config.iterations}),
    )
    best = select_best_checkpoint(records)
    best_path = out_dir / "best.kshift"
    best_path.write_bytes(Path(best.path).read_bytes())
    return TrainResult(final_path, best_path, history_path, records, best)


def filter_volumes(data: dict[str, list[VolumeRecord]], ids) -> dict[str, list[VolumeRecord]]:
    wanted = set(ids)
    return {
        label: [v for v in records if v.subject_id in wanted]
        for label, records in data.items()
    }


def run_kfold(
    config: TrainingConfig, data: dict[str, list[VolumeRecord]], out_root
) -> list[tuple[FoldSplit, TrainResult]]:
    """Train once per fold; test volumes never reach the trainer."""
    subjects = sorted({v.subject_id for records in data.values() for v in records})
    folds = kfold_split(subjects, config.folds, config.seed)
    out_root = Path(out_root)
    results = []
    for fold in folds:
        result = train(
            config,
            filter_volumes(data, fold.train_ids),
            filter_volumes(data, fold.validation_ids),
            out_root / f"fold{fold.fold_index}",
        )
        results.append((fold, result))
    return results
