"""Encoder bundle: serialized visual/text graphs plus their assets.

A bundle directory holds an asset manifest (JSON) naming the two ONNX
graph files, the tokenizer vocabulary/merges, the preprocessing
constants, and a content hash per asset.  Hashes are verified at load
time so a tampered or truncated asset fails before any inference runs.
The bundle is immutable after load and safe to share across threads.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import AssetError, SchemaVersionError
from ..onnxrt.engine import GraphHandle, GraphRuntime, NumpyOnnxRuntime
from ..scoring import Embedding, l2_normalize
from .preprocess import ImageTensor, PreprocessConstants, preprocess_image
from .tokenizer import BpeTokenizer

MANIFEST_SCHEMA_VERSION = 1


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass(frozen=True)
class EncoderBundle:
    """Loaded encoder pair with tokenizer and preprocessing assets."""

    name: str
    dim: int
    root: Path
    preprocess_constants: PreprocessConstants
    tokenizer: BpeTokenizer
    visual: GraphHandle
    text: GraphHandle
    visual_io: tuple[str, str]  # (input name, output name)
    text_io: tuple[str, str]
    fingerprint: str

    def _run_single(self, graph: GraphHandle, io: tuple[str, str], arr) -> Embedding:
        out = graph.run({io[0]: arr})[io[1]]
        vec = np.asarray(out, dtype=np.float32).reshape(-1)
        if vec.shape[0] != self.dim:
            raise AssetError(
                f"bundle {self.name!r}: graph produced dimension "
                f"{vec.shape[0]}, manifest declares {self.dim}"
            )
        return l2_normalize(Embedding(vec.astype(np.float64)))

    def encode_image(self, img: ImageTensor) -> Embedding:
        """Embed one preprocessed image; output is unit-normalized."""
        size = self.preprocess_constants.image_size
        if img.shape != (3, size, size):
            raise AssetError(
                f"bundle {self.name!r} expects 3x{size}x{size} input, "
                f"got {img.shape}"
            )
        return self._run_single(self.visual, self.visual_io, img.data)

    def encode_image_bytes(self, raw: bytes) -> Embedding:
        return self.encode_image(preprocess_image(raw, self.preprocess_constants))

    def encode_texts(self, texts: list[str]) -> list[Embedding]:
        """Embed each string, order preserved, each unit-normalized."""
        if not texts:
            raise ValueError("encode_texts requires at least one string")
        out = []
        for text in texts:
            seq = self.tokenizer.tokenize(text)
            tokens = np.asarray(seq.ids, dtype=np.int64)
            out.append(self._run_single(self.text, self.text_io, tokens))
        return out


def _require(manifest: dict, key: str, path: Path):
    if key not in manifest:
        raise AssetError(f"manifest {path} lacks required field {key!r}")
    return manifest[key]


def load_bundle(
    manifest_path: str | Path,
    runtime: GraphRuntime | None = None,
    verify_hashes: bool = True,
) -> EncoderBundle:
    """Load and verify an encoder bundle from its asset manifest."""
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / "manifest.json"
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise AssetError(f"cannot load bundle manifest {manifest_path}: {e}") from e

    version = manifest.get("schema_version")
    if version != MANIFEST_SCHEMA_VERSION:
        raise SchemaVersionError(
            f"bundle manifest schema {version!r} is not supported "
            f"(expected {MANIFEST_SCHEMA_VERSION})"
        )

    root = manifest_path.parent
    name = _require(manifest, "name", manifest_path)
    dim = int(_require(manifest, "embedding_dim", manifest_path))
    graphs = _require(manifest, "graphs", manifest_path)
    graph_io = _require(manifest, "graph_io", manifest_path)
    pp = _require(manifest, "preprocess", manifest_path)
    tok = _require(manifest, "tokenizer", manifest_path)
    hashes = _require(manifest, "assets_sha256", manifest_path)

    asset_files = {
        graphs["visual"],
        graphs["text"],
        tok["vocab"],
        tok["merges"],
    }
    for rel in sorted(asset_files):
        asset = root / rel
        if not asset.is_file():
            raise AssetError(f"bundle asset missing: {asset}")
        if verify_hashes:
            if rel not in hashes:
                raise AssetError(f"manifest lists no hash for asset {rel!r}")
            actual = sha256_file(asset)
            if actual != hashes[rel]:
                raise AssetError(
                    f"asset {rel!r} fails its hash check "
                    f"(expected {hashes[rel][:12]}…, got {actual[:12]}…)"
                )

    constants = PreprocessConstants(
        image_size=int(pp["image_size"]),
        mean=tuple(float(v) for v in pp["mean"]),
        std=tuple(float(v) for v in pp["std"]),
    )
    tokenizer = BpeTokenizer.from_files(
        root / tok["vocab"],
        root / tok["merges"],
        context_length=int(tok.get("context_length", 77)),
        sot_token=tok.get("sot_token", "<|startoftext|>"),
        eot_token=tok.get("eot_token", "<|endoftext|>"),
        pad_id=int(tok.get("pad_id", 0)),
    )
    declared_vocab = tok.get("vocab_size")
    if declared_vocab is not None and int(declared_vocab) != tokenizer.vocab_size:
        raise AssetError(
            f"tokenizer vocabulary has {tokenizer.vocab_size} entries, "
            f"manifest declares {declared_vocab}"
        )

    runtime = runtime or NumpyOnnxRuntime()
    visual = runtime.load_graph(root / graphs["visual"])
    text = runtime.load_graph(root / graphs["text"])

    # fingerprint covers identity-defining content, not load incidentals
    fingerprint = hashlib.sha256(
        json.dumps(
            {"name": name, "embedding_dim": dim, "assets_sha256": hashes},
            sort_keys=True,
        ).encode("utf-8")
    ).hexdigest()

    return EncoderBundle(
        name=name,
        dim=dim,
        root=root,
        preprocess_constants=constants,
        tokenizer=tokenizer,
        visual=visual,
        text=text,
        visual_io=(graph_io["visual"]["input"], graph_io["visual"]["output"]),
        text_io=(graph_io["text"]["input"], graph_io["text"]["output"]),
        fingerprint=fingerprint,
    )
