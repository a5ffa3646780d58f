"""On-disk store for volumes and model checkpoints.

Everything is written tmp-file-then-rename so a crash never leaves a manifest
pointing at a missing artifact. The store root comes from the KSHIFT_STORE
environment variable unless given explicitly.
"""

from __future__ import annotations

import datetime
import hashlib
import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path

from .checkpoint import ModelBundle, load_checkpoint, load_model
from .data import VolumeRecord, volume_from_bytes
from .errors import ContractError, FormatError

ENV_STORE = "KSHIFT_STORE"


def _atomic_write(path: Path, data: bytes):
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)


@dataclass
class ModelManifest:
    model_id: str
    mode: str
    train_config_digest: str
    checkpoint_path: str
    created_at: str

    def as_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "mode": self.mode,
            "train_config_digest": self.train_config_digest,
            "checkpoint_path": self.checkpoint_path,
            "created_at": self.created_at,
        }


class Store:
    def __init__(self, root: str | Path | None = None):
        if root is None:
            root = os.environ.get(ENV_STORE)
        if root is None:
            raise ContractError(
                f"no store root given and {ENV_STORE} is not set"
            )
        self.root = Path(root)
        self.volumes_dir = self.root / "volumes"
        self.models_dir = self.root / "models"
        self.volumes_dir.mkdir(parents=True, exist_ok=True)
        self.models_dir.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()
        self._model_cache: dict[str, ModelBundle] = {}

    def _lock_for(self, key: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(key, threading.Lock())

    # -- volumes -------------------------------------------------------------

    def ingest_volume(self, payload: bytes) -> str:
        record = volume_from_bytes(payload)  # validate before anything lands
        volume_id = hashlib.sha256(payload).hexdigest()[:12]
        with self._lock_for(volume_id):
            vol_path = self.volumes_dir / f"{volume_id}.ksvol"
            meta_path = self.volumes_dir / f"{volume_id}.json"
            if not vol_path.exists():
                _atomic_write(vol_path, payload)
                meta = {
                    "volume_id": volume_id,
                    "subject_id": record.subject_id,
                    "kernel_label": record.kernel_label,
                    "n_slices": record.n_slices,
                    "height": record.shape[0],
                    "width": record.shape[1],
                    "pixel_spacing": list(record.pixel_spacing),
                }
                _atomic_write(meta_path, json.dumps(meta, indent=2).encode())
        return volume_id

    def list_volumes(self) -> list[dict]:
        out = []
        for meta_path in sorted(self.volumes_dir.glob("*.json")):
            out.append(json.loads(meta_path.read_text()))
        return out

    def has_volume(self, volume_id: str) -> bool:
        return (self.volumes_dir / f"{volume_id}.ksvol").exists()

    def get_volume(self, volume_id: str) -> VolumeRecord:
        path = self.volumes_dir / f"{volume_id}.ksvol"
        if not path.exists():
            raise KeyError(volume_id)
        return volume_from_bytes(path.read_bytes())

    # -- models --------------------------------------------------------------

    def register_model(self, checkpoint_path, model_id: str | None = None) -> ModelManifest:
        src = Path(checkpoint_path)
        payload = load_checkpoint(src)  # must exist and parse
        if model_id is None:
            model_id = hashlib.sha256(src.read_bytes()).hexdigest()[:12]
        with self._lock_for(f"model:{model_id}"):
            dst = self.models_dir / f"{model_id}.kshift"
            if not dst.exists():
                _atomic_write(dst, src.read_bytes())
            manifest = ModelManifest(
                model_id=model_id,
                mode=payload.mode,
                train_config_digest=payload.train_config_digest,
                checkpoint_path=str(dst),
                created_at=datetime.datetime.now(datetime.timezone.utc).isoformat(),
            )
            _atomic_write(
                self.models_dir / f"{model_id}.json",
                json.dumps(manifest.as_dict(), indent=2).encode(),
            )
        return manifest

    def list_models(self) -> list[dict]:
        out = []
        for meta_path in sorted(self.models_dir.glob("*.json")):
            out.append(json.loads(meta_path.read_text()))
        return out

    def has_model(self, model_id: str) -> bool:
        return (self.models_dir / f"{model_id}.kshift").exists()

    def load_model(self, model_id: str) -> ModelBundle:
        if model_id in self._model_cache:
            return self._model_cache[model_id]
        path = self.models_dir / f"{model_id}.kshift"
        if not path.exists():
            raise KeyError(model_id)
        bundle = load_model(path)
        self._model_cache[model_id] = bundle
        return bundle
