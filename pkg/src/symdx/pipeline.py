"""Glue between encoders, knowledge bases, and scoring.

Two caches make sweeps tractable on CPU: symptom-text embeddings are
computed once per (knowledge base, bundle) pair, and image embeddings
once per (image content, bundle) pair with an optional on-disk layer.
Both expose hit/miss counters so the performance contract is testable.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoders.bundle import EncoderBundle
from .encoders.preprocess import load_image_file, preprocess_image
from .errors import ConfigMismatchError
from .knowledge import KnowledgeBase
from .scoring import AggregationMode, Embedding, ScoreReport, classify


@dataclass(frozen=True)
class EmbeddedKb:
    """A knowledge base paired with its symptom embeddings."""

    kb_id: str
    bundle_fingerprint: str
    embeddings: dict[str, list[Embedding]]  # class id -> symptom embeddings
    texts: dict[str, list[str]]  # class id -> symptom phrases, same order


def _kb_cache_token(kb: KnowledgeBase, wrapper: str | None) -> str:
    h = hashlib.sha256()
    for c in kb.classes:
        h.update(c.class_id.encode("utf-8"))
        for s in c.symptoms:
            h.update(b"\x1f" + s.encode("utf-8"))
        h.update(b"\x1e")
    h.update((wrapper or "").encode("utf-8"))
    return h.hexdigest()


class TextEmbeddingCache:
    """Per-process cache of embedded knowledge bases, instrumented."""

    def __init__(self):
        self._store: dict[tuple[str, str], EmbeddedKb] = {}
        self.hits = 0
        self.misses = 0

    def get_or_embed(
        self,
        kb: KnowledgeBase,
        bundle: EncoderBundle,
        wrapper: str | None = None,
    ) -> EmbeddedKb:
        key = (_kb_cache_token(kb, wrapper), bundle.fingerprint)
        cached = self._store.get(key)
        if cached is not None:
            self.hits += 1
            return cached
        self.misses += 1
        embedded = embed_kb(kb, bundle, wrapper=wrapper)
        self._store[key] = embedded
        return embedded


def embed_kb(
    kb: KnowledgeBase,
    bundle: EncoderBundle,
    wrapper: str | None = None,
) -> EmbeddedKb:
    """Encode every symptom phrase of ``kb`` with the bundle's text tower.

    ``wrapper`` optionally wraps each phrase before encoding (e.g.
    ``"a photo of {}"``); by default phrases are encoded verbatim.
    """
    if kb.encoder_fingerprint and kb.encoder_fingerprint != bundle.fingerprint:
        raise ConfigMismatchError(
            f"knowledge base {kb.kb_id!r} was embedded with encoder "
            f"{kb.encoder_fingerprint[:12]}…, bundle is {bundle.fingerprint[:12]}…"
        )
    embeddings: dict[str, list[Embedding]] = {}
    texts: dict[str, list[str]] = {}
    for descriptor in kb.classes:
        phrases = list(descriptor.symptoms)
        encoded_input = (
            [wrapper.format(p) for p in phrases] if wrapper else phrases
        )
        embeddings[descriptor.class_id] = bundle.encode_texts(encoded_input)
        texts[descriptor.class_id] = phrases
    return EmbeddedKb(
        kb_id=kb.kb_id,
        bundle_fingerprint=bundle.fingerprint,
        embeddings=embeddings,
        texts=texts,
    )


class ImageEmbedder:
    """Embeds image files through one bundle, caching per content hash.

    The optional disk layer keys by (image sha256, bundle fingerprint)
    so repeated sweeps across aggregation modes or knowledge bases
    never re-encode an image.
    """

    def __init__(self, bundle: EncoderBundle, cache_dir: str | Path | None = None):
        self.bundle = bundle
        self._memory: dict[str, Embedding] = {}
        self.cache_dir: Path | None = None
        if cache_dir is not None:
            self.cache_dir = Path(cache_dir) / bundle.fingerprint[:16]
            self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.encode_calls = 0
        self.cache_hits = 0

    def embed_bytes(self, raw: bytes) -> Embedding:
        digest = hashlib.sha256(raw).hexdigest()
        hit = self._memory.get(digest)
        if hit is not None:
            self.cache_hits += 1
            return hit
        if self.cache_dir is not None:
            path = self.cache_dir / f"{digest}.npy"
            if path.is_file():
                self.cache_hits += 1
                emb = Embedding(np.load(path), normalized=True)
                self._memory[digest] = emb
                return emb
        self.encode_calls += 1
        emb = self.bundle.encode_image(
            preprocess_image(raw, self.bundle.preprocess_constants)
        )
        self._memory[digest] = emb
        if self.cache_dir is not None:
            np.save(self.cache_dir / f"{digest}.npy", emb.values)
        return emb

    def embed_path(self, path: str | Path) -> Embedding:
        return self.embed_bytes(load_image_file(path))


def classify_embedding(
    image: Embedding, embedded: EmbeddedKb, mode: AggregationMode
) -> ScoreReport:
    return classify(image, embedded.embeddings, mode, symptom_texts=embedded.texts)


def classify_image(
    path: str | Path,
    kb: KnowledgeBase,
    bundle: EncoderBundle,
    mode: AggregationMode,
    wrapper: str | None = None,
) -> ScoreReport:
    """Full single-image pipeline: preprocess, encode, score, argmax."""
    embedded = embed_kb(kb, bundle, wrapper=wrapper)
    image = bundle.encode_image_bytes(load_image_file(path))
    return classify_embedding(image, embedded, mode)
