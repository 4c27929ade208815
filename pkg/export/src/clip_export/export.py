"""Bundle export: checkpoint -> graphs + tokenizer assets + goldens.

The emitted directory is exactly what the inference engine's bundle
loader consumes.  Before reporting success the exporter replays every
golden fixture through the engine and aborts on the first fixture
whose output drifts beyond tolerance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from symdx.encoders.bundle import load_bundle, sha256_file
from symdx.encoders.preprocess import load_image_file, preprocess_image

from .bpe import (
    CORPUS,
    EOT,
    SOT,
    build_vocab,
    load_reference_merges,
    train_merges,
    write_assets,
)
from .fixtures import (
    GOLDEN_TEXTS,
    make_fixture_images,
    reference_image_embeddings,
    reference_preprocess,
    reference_text_embeddings,
    reference_token_ids,
)
from .graphs import build_text_graph, build_visual_graph
from .model import TEST_CHECKPOINT_SEED, DualEncoder, build_test_checkpoint
from .openai_weights import CheckpointError, load_openai_checkpoint

# the public checkpoints' preprocessing constants
PREPROCESS_MEAN = (0.48145466, 0.4578275, 0.40821073)
PREPROCESS_STD = (0.26862954, 0.26130258, 0.27577711)

COSINE_TOLERANCE = 0.999
TENSOR_TOLERANCE = 1e-3

VIT_CHECKPOINTS = ("ViT-B/32", "ViT-B/16", "ViT-L/14")
RESNET_CHECKPOINTS = ("RN50", "RN101", "RN50x64")
TEST_CHECKPOINT = "test-vit32"


class ExportError(RuntimeError):
    pass


def _cosine(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))


@dataclass
class ResolvedCheckpoint:
    name: str
    model: DualEncoder
    vocab: dict[str, int]
    merges: list[tuple[str, str]]


def resolve_checkpoint(
    name: str,
    checkpoint_path: str | None = None,
    bpe_merges_path: str | None = None,
    seed: int = TEST_CHECKPOINT_SEED,
    n_merges: int = 700,
) -> ResolvedCheckpoint:
    if name == TEST_CHECKPOINT:
        merges = train_merges(CORPUS, n_merges)
        vocab = build_vocab(merges)
        model = build_test_checkpoint(vocab_size=len(vocab), seed=seed)
        return ResolvedCheckpoint(name, model, vocab, merges)
    if name in RESNET_CHECKPOINTS:
        raise ExportError(
            f"{name} uses a convolutional image tower this exporter does not "
            f"emit; supported: {TEST_CHECKPOINT}, {', '.join(VIT_CHECKPOINTS)}"
        )
    if name in VIT_CHECKPOINTS:
        if not checkpoint_path or not bpe_merges_path:
            raise ExportError(
                f"exporting {name} needs --checkpoint (local weights file) and "
                "--bpe-merges (the reference vocabulary merges file); this "
                "exporter never downloads"
            )
        try:
            model = load_openai_checkpoint(checkpoint_path)
        except CheckpointError as e:
            raise ExportError(str(e)) from e
        merges = load_reference_merges(bpe_merges_path)
        # the reference file carries the full merge list; the vocabulary is
        # reconstructed the standard way around it
        vocab = build_vocab(merges)
        if len(vocab) != model.cfg.vocab_size:
            raise ExportError(
                f"vocabulary built from {bpe_merges_path} has {len(vocab)} "
                f"entries but the checkpoint embeds {model.cfg.vocab_size}"
            )
        return ResolvedCheckpoint(name, model, vocab, merges)
    raise ExportError(f"unknown checkpoint name {name!r}")


def export_bundle(
    model_name: str,
    out_dir: str | Path,
    checkpoint_path: str | None = None,
    bpe_merges_path: str | None = None,
    seed: int = TEST_CHECKPOINT_SEED,
    n_merges: int = 700,
    verify: bool = True,
) -> dict:
    """Write a complete encoder bundle and return its export manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    resolved = resolve_checkpoint(
        model_name, checkpoint_path, bpe_merges_path, seed=seed, n_merges=n_merges
    )
    model, cfg = resolved.model, resolved.model.cfg

    write_assets(resolved.vocab, resolved.merges, out_dir)
    (out_dir / "visual.onnx").write_bytes(build_visual_graph(model))
    (out_dir / "text.onnx").write_bytes(build_text_graph(model))

    image_paths = make_fixture_images(out_dir / "fixtures")
    goldens_dir = out_dir / "goldens"
    goldens_dir.mkdir(exist_ok=True)

    token_ids = reference_token_ids(
        GOLDEN_TEXTS, resolved.vocab, resolved.merges, cfg.context_length
    )
    preprocessed = [
        reference_preprocess(p, cfg.image_size, PREPROCESS_MEAN, PREPROCESS_STD)
        for p in image_paths
    ]
    image_embeddings = reference_image_embeddings(model, preprocessed)
    text_embeddings = reference_text_embeddings(model, token_ids)

    goldens: dict = {
        "schema_version": 1,
        "texts": [
            {"text": text, "ids": ids, "embedding": emb}
            for text, ids, emb in zip(GOLDEN_TEXTS, token_ids, text_embeddings)
        ],
        "images": [],
    }
    for path, tensor, emb in zip(image_paths, preprocessed, image_embeddings):
        npy_rel = f"goldens/pre_{path.stem}.npy"
        np.save(out_dir / npy_rel, tensor)
        goldens["images"].append(
            {
                "file": str(path.relative_to(out_dir)),
                "preprocessed": npy_rel,
                "embedding": emb,
            }
        )
    goldens_path = goldens_dir / "goldens.json"
    goldens_path.write_text(json.dumps(goldens, indent=2) + "\n", encoding="utf-8")

    core_assets = ["visual.onnx", "text.onnx", "vocab.json", "merges.txt"]
    manifest = {
        "schema_version": 1,
        "name": resolved.name,
        "embedding_dim": cfg.embed_dim,
        "graphs": {"visual": "visual.onnx", "text": "text.onnx"},
        "graph_io": {
            "visual": {"input": "image", "output": "embedding"},
            "text": {"input": "tokens", "output": "embedding"},
        },
        "preprocess": {
            "image_size": cfg.image_size,
            "mean": list(PREPROCESS_MEAN),
            "std": list(PREPROCESS_STD),
        },
        "tokenizer": {
            "vocab": "vocab.json",
            "merges": "merges.txt",
            "context_length": cfg.context_length,
            "vocab_size": len(resolved.vocab),
            "sot_token": SOT,
            "eot_token": EOT,
            "pad_id": 0,
        },
        "assets_sha256": {rel: sha256_file(out_dir / rel) for rel in core_assets},
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")

    report = verify_bundle(out_dir) if verify else {}

    all_files = core_assets + [
        "manifest.json",
        "goldens/goldens.json",
        *(f"goldens/pre_{p.stem}.npy" for p in image_paths),
        *(str(p.relative_to(out_dir)) for p in image_paths),
    ]
    export_manifest = {
        "schema_version": 1,
        "checkpoint": resolved.name,
        "embedding_dim": cfg.embed_dim,
        "seed": seed if resolved.name == TEST_CHECKPOINT else None,
        "created_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "files_sha256": {rel: sha256_file(out_dir / rel) for rel in sorted(all_files)},
        "golden_counts": {
            "texts": len(goldens["texts"]),
            "images": len(goldens["images"]),
        },
        "verification": report,
    }
    (out_dir / "export_manifest.json").write_text(
        json.dumps(export_manifest, indent=2) + "\n", encoding="utf-8"
    )
    return export_manifest


def verify_bundle(out_dir: str | Path) -> dict:
    """Replay every golden fixture through the inference engine.

    Aborts with the failing fixture named if token ids differ, a
    preprocessed tensor drifts beyond 1e-3 per element, or an embedding
    falls under the cosine floor.
    """
    out_dir = Path(out_dir)
    bundle = load_bundle(out_dir / "manifest.json")
    goldens = json.loads((out_dir / "goldens" / "goldens.json").read_text("utf-8"))
    report = {"text_cosines": [], "image_cosines": []}

    for entry in goldens["texts"]:
        got = list(bundle.tokenizer.tokenize(entry["text"]).ids)
        if got != entry["ids"]:
            raise ExportError(
                f"token ids diverge for fixture text {entry['text']!r}: "
                f"{got[:8]}… vs {entry['ids'][:8]}…"
            )
        engine_emb = bundle.encode_texts([entry["text"]])[0].values
        cosine = _cosine(engine_emb, entry["embedding"])
        report["text_cosines"].append(cosine)
        if cosine < COSINE_TOLERANCE:
            raise ExportError(
                f"text embedding cosine {cosine:.6f} below {COSINE_TOLERANCE} "
                f"for fixture {entry['text']!r}"
            )

    for entry in goldens["images"]:
        raw = load_image_file(out_dir / entry["file"])
        tensor = preprocess_image(raw, bundle.preprocess_constants)
        golden_tensor = np.load(out_dir / entry["preprocessed"])
        worst = float(np.max(np.abs(tensor.data - golden_tensor)))
        if worst > TENSOR_TOLERANCE:
            raise ExportError(
                f"preprocessed tensor drifts {worst:.2e} (> {TENSOR_TOLERANCE}) "
                f"for fixture {entry['file']}"
            )
        engine_emb = bundle.encode_image(tensor).values
        cosine = _cosine(engine_emb, entry["embedding"])
        report["image_cosines"].append(cosine)
        if cosine < COSINE_TOLERANCE:
            raise ExportError(
                f"image embedding cosine {cosine:.6f} below {COSINE_TOLERANCE} "
                f"for fixture {entry['file']}"
            )
    return report
