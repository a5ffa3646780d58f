"""HTTP service contract tests (no UI required)."""

import base64
import io

import numpy as np
import pytest
import torch
from fastapi.testclient import TestClient
from PIL import Image

from kshift.checkpoint import bundle_to_payload, save_checkpoint
from kshift.data import (
    PhantomSpec,
    VolumeRecord,
    generate_phantom_dataset,
    volume_to_bytes,
)
from kshift.generator import GeneratorConfig
from kshift.losses import THREE_DOMAIN
from kshift.service import create_app
from kshift.store import Store
from kshift.training import Trainer, TrainingConfig


def tiny_checkpoint(tmp_path, mode="switchable_2dom", name="model.kshift"):
    dataset = generate_phantom_dataset(
        PhantomSpec(n_subjects=1, slices_per_subject=1, image_size=48, seed=41)
    )
    cfg = TrainingConfig(
        mode=mode,
        generator=GeneratorConfig(scale_levels=2, base_channels=4),
        discriminator_channels=(4, 8, 8, 8, 1),
        patch_size=48,
        batch_size=1,
        iterations=1,
        seed=13,
    )
    trainer = Trainer(cfg, dataset.volumes)
    path = tmp_path / name
    save_checkpoint(path, bundle_to_payload(trainer.bundle, cfg.digest()))
    return path


@pytest.fixture()
def client(tmp_path):
    store = Store(tmp_path / "store")
    single = store.register_model(tiny_checkpoint(tmp_path, "switchable_2dom"))
    split = store.register_model(
        tiny_checkpoint(tmp_path, THREE_DOMAIN, name="split.kshift")
    )
    volume = VolumeRecord(
        "subj", "sharp",
        np.random.default_rng(3).integers(-1000, 1500, size=(2, 48, 48)).astype(np.int16),
    )
    app = create_app(store)
    test_client = TestClient(app, raise_server_exceptions=False)
    ingest = test_client.post("/volumes", content=volume_to_bytes(volume))
    assert ingest.status_code == 200
    test_client.volume_id = ingest.json()["volume_id"]
    test_client.single_model = single.model_id
    test_client.split_model = split.model_id
    return test_client


class TestHealthAndListing:
    def test_healthz(self, client):
        body = client.get("/healthz").json()
        assert body["status"] == "ok"
        assert body["service"] == "kshift"
        assert "version" in body

    def test_models_listed(self, client):
        body = client.get("/models").json()
        ids = {m["model_id"] for m in body["models"]}
        assert client.single_model in ids and client.split_model in ids
        for manifest in body["models"]:
            assert {"model_id", "mode", "train_config_digest",
                    "checkpoint_path", "created_at"} <= set(manifest)

    def test_volumes_listed(self, client):
        body = client.get("/volumes").json()
        assert any(v["volume_id"] == client.volume_id for v in body["volumes"])


class TestIngestion:
    def test_round_trip(self, client):
        vol = VolumeRecord(
            "other", "soft",
            np.random.default_rng(5).integers(-500, 500, size=(1, 32, 32)).astype(np.int16),
        )
        payload = volume_to_bytes(vol)
        vid = client.post("/volumes", content=payload).json()["volume_id"]
        listed = {v["volume_id"]: v for v in client.get("/volumes").json()["volumes"]}
        assert listed[vid]["subject_id"] == "other"
        assert listed[vid]["n_slices"] == 1

    def test_ingest_idempotent(self, client):
        vol = VolumeRecord("dup", "soft", np.zeros((1, 32, 32), dtype=np.int16))
        payload = volume_to_bytes(vol)
        a = client.post("/volumes", content=payload).json()["volume_id"]
        b = client.post("/volumes", content=payload).json()["volume_id"]
        assert a == b

    def test_bad_payload_is_400(self, client):
        assert client.post("/volumes", content=b"not a volume").status_code == 400

    def test_slice_endpoint_serves_png(self, client):
        resp = client.get(f"/volumes/{client.volume_id}/slices/0")
        assert resp.status_code == 200
        img = Image.open(io.BytesIO(resp.content))
        assert img.size == (48, 48)

    def test_slice_endpoint_errors(self, client):
        assert client.get("/volumes/nope/slices/0").status_code == 404
        assert client.get(f"/volumes/{client.volume_id}/slices/99").status_code == 400

    def test_store_root_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv("KSHIFT_STORE", str(tmp_path / "env_store"))
        store = Store()
        assert store.root == tmp_path / "env_store"
        assert store.volumes_dir.exists()

    def test_store_writes_are_atomic(self, client, tmp_path):
        # every manifest references an existing artifact, and no temp files linger
        store_root = tmp_path / "store"
        from pathlib import Path

        for meta in client.get("/volumes").json()["volumes"]:
            assert (store_root / "volumes" / f"{meta['volume_id']}.ksvol").exists()
        for meta in client.get("/models").json()["models"]:
            assert Path(meta["checkpoint_path"]).exists()
        assert not list(store_root.rglob("*.tmp"))


class TestConvert:
    def request(self, client, **overrides):
        body = {
            "volume_id": client.volume_id,
            "slice_index": 0,
            "beta": 1.0,
            "model_id": client.single_model,
        }
        body.update(overrides)
        return client.post("/convert", json=body)

    def test_conversion_metadata_and_size(self, client):
        resp = self.request(client)
        assert resp.status_code == 200
        body = resp.json()
        assert body["beta"] == 1.0
        assert body["model_id"] == client.single_model
        assert body["duration_ms"] >= 0
        png = base64.b64decode(body["png_base64"])
        img = Image.open(io.BytesIO(png))
        assert img.size == (48, 48)  # converted slice keeps source dimensions

    def test_deterministic_payload(self, client):
        a = self.request(client).json()["png_base64"]
        b = self.request(client).json()["png_base64"]
        assert a == b

    def test_beta_out_of_range_is_400(self, client):
        assert self.request(client, beta=1.5).status_code == 400
        assert self.request(client, beta=-0.1).status_code == 400

    def test_bad_slice_is_400(self, client):
        assert self.request(client, slice_index=99).status_code == 400

    def test_unknown_volume_is_404(self, client):
        assert self.request(client, volume_id="missing").status_code == 404

    def test_unknown_model_is_404(self, client):
        assert self.request(client, model_id="missing").status_code == 404

    def test_alpha_on_single_code_model_is_422(self, client):
        assert self.request(client, alpha=0.5).status_code == 422

    def test_split_model_requires_alpha(self, client):
        ok = self.request(client, model_id=client.split_model, alpha=0.5)
        assert ok.status_code == 200
        missing = self.request(client, model_id=client.split_model)
        assert missing.status_code == 422

    def test_png_is_offset_encoded_hu(self, client):
        store_resp = self.request(client, beta=0.0)
        body = store_resp.json()
        png = base64.b64decode(body["png_base64"])
        arr = np.array(Image.open(io.BytesIO(png)), dtype=np.int32)
        hu = arr - body["hu_offset"]
        assert hu.min() >= -1024 and hu.max() <= 3071
