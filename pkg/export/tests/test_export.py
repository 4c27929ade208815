"""Full export round trip: emit, verify, re-export deterministically."""

import json

import numpy as np
import pytest

from clip_export.export import ExportError, export_bundle, verify_bundle
from symdx.encoders.bundle import load_bundle


@pytest.fixture(scope="module")
def exported(tmp_path_factory):
    out = tmp_path_factory.mktemp("bundle")
    manifest = export_bundle("test-vit32", out, n_merges=200)
    return out, manifest


def test_export_emits_all_assets(exported):
    out, manifest = exported
    for rel in (
        "manifest.json",
        "visual.onnx",
        "text.onnx",
        "vocab.json",
        "merges.txt",
        "goldens/goldens.json",
        "export_manifest.json",
    ):
        assert (out / rel).is_file(), rel
    assert manifest["embedding_dim"] == 64
    assert manifest["golden_counts"]["texts"] >= 3
    assert manifest["golden_counts"]["images"] >= 2


def test_embedding_dim_read_from_checkpoint(exported):
    out, manifest = exported
    bundle = load_bundle(out / "manifest.json")
    assert bundle.dim == manifest["embedding_dim"]
    emb = bundle.encode_texts(["pleural effusion"])[0]
    assert emb.dim == manifest["embedding_dim"]


def test_verification_cosines_recorded(exported):
    _, manifest = exported
    cosines = manifest["verification"]
    assert cosines["text_cosines"] and cosines["image_cosines"]
    assert min(cosines["text_cosines"] + cosines["image_cosines"]) >= 0.999


def test_reexport_identical_up_to_timestamps(exported, tmp_path):
    out, manifest = exported
    again = export_bundle("test-vit32", tmp_path / "again", n_merges=200)
    a, b = dict(manifest), dict(again)
    a.pop("created_at"), b.pop("created_at")
    a.pop("verification"), b.pop("verification")
    assert a == b  # includes every file hash
    assert manifest["verification"] == again["verification"]


def test_tampered_asset_fails_hash_check_on_load(tmp_path):
    out = tmp_path / "bundle"
    export_bundle("test-vit32", out, n_merges=200, verify=False)
    graph_path = out / "text.onnx"
    graph_path.write_bytes(graph_path.read_bytes() + b"\x00")
    from symdx.errors import AssetError

    with pytest.raises(AssetError, match="hash check"):
        load_bundle(out / "manifest.json")


def test_corrupted_golden_aborts_verification(tmp_path):
    out = tmp_path / "bundle"
    export_bundle("test-vit32", out, n_merges=200, verify=False)
    goldens_path = out / "goldens" / "goldens.json"
    goldens = json.loads(goldens_path.read_text())
    goldens["images"][0]["embedding"] = list(
        -np.asarray(goldens["images"][0]["embedding"])
    )
    goldens_path.write_text(json.dumps(goldens))
    with pytest.raises(ExportError, match="cosine"):
        verify_bundle(out)


def test_unknown_model_name_rejected(tmp_path):
    with pytest.raises(ExportError):
        export_bundle("ViT-Q/99", tmp_path)


def test_public_model_requires_local_files(tmp_path):
    with pytest.raises(ExportError, match="never downloads"):
        export_bundle("ViT-B/32", tmp_path)


def test_resnet_names_rejected_with_guidance(tmp_path):
    with pytest.raises(ExportError, match="convolutional"):
        export_bundle("RN50", tmp_path)
