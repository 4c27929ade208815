"""Similarity scoring and argmax classification over embeddings.

Everything here is a pure function over immutable inputs: an image
embedding is scored against each class's symptom embeddings, the
per-symptom similarities are aggregated (mean or max), and the class
with the highest aggregate wins.  Ties go to the class declared first
in the knowledge base so results are reproducible across runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    DimensionMismatchError,
    EmptyDescriptorError,
    NormalizationError,
)

# |L2 norm - 1| must stay below this for an embedding flagged normalized.
UNIT_NORM_TOL = 1e-4


class AggregationMode(Enum):
    """Rule combining per-symptom similarities into one class score."""

    MEAN = "mean"
    MAX = "max"

    @classmethod
    def parse(cls, name: str) -> "AggregationMode":
        try:
            return cls(name.lower())
        except ValueError:
            raise ValueError(f"unknown aggregation mode: {name!r}") from None


@dataclass(frozen=True)
class Embedding:
    """Fixed-dimension real vector produced by an encoder.

    ``normalized`` records whether the producer scaled the vector to
    unit L2 norm; it is validated on construction, not assumed.
    """

    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("embedding must be a non-empty 1-D vector")
        if not np.all(np.isfinite(arr)):
            raise ValueError("embedding contains NaN or Inf")
        if self.normalized:
            norm = float(np.linalg.norm(arr))
            if abs(norm - 1.0) >= UNIT_NORM_TOL:
                raise NormalizationError(
                    f"embedding flagged normalized has L2 norm {norm:.6f}"
                )
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


def dot(a: Embedding, b: Embedding) -> float:
    """Inner product of two embeddings of equal dimension."""
    if a.dim != b.dim:
        raise DimensionMismatchError(
            f"embedding dimensions differ: {a.dim} vs {b.dim}"
        )
    return float(np.dot(a.values, b.values))


def l2_normalize(v: Embedding) -> Embedding:
    """Scale ``v`` to unit L2 norm, preserving direction."""
    norm = float(np.linalg.norm(v.values))
    if norm == 0.0:
        raise NormalizationError("cannot normalize a zero vector")
    return Embedding(v.values / norm, normalized=True)


def class_score(
    image: Embedding,
    symptoms: Sequence[Embedding],
    mode: AggregationMode,
) -> float:
    """Aggregate similarity between one image and one class's symptoms.

    MEAN averages the per-symptom inner products; MAX takes the best
    single symptom.  An empty symptom list is a hard error (the mean
    would divide by zero, and silently skipping a class would bias the
    argmax).
    """
    if len(symptoms) == 0:
        raise EmptyDescriptorError("class has no symptom embeddings")
    sims = [dot(image, g) for g in symptoms]
    if mode is AggregationMode.MEAN:
        return float(np.mean(sims))
    return max(sims)


@dataclass(frozen=True)
class ClassScores:
    """Per-symptom similarities and their aggregate for one class."""

    class_id: str
    symptom_scores: tuple[tuple[str, float], ...]
    aggregate: float


@dataclass(frozen=True)
class ScoreReport:
    """Full score breakdown for one image against a knowledge base."""

    classes: tuple[ClassScores, ...]  # knowledge-base declaration order
    predicted: str
    mode: AggregationMode
    image_dim: int = field(default=0)

    def scores_for(self, class_id: str) -> ClassScores:
        for entry in self.classes:
            if entry.class_id == class_id:
                return entry
        raise KeyError(class_id)

    @property
    def aggregates(self) -> dict[str, float]:
        return {c.class_id: c.aggregate for c in self.classes}


def classify(
    image: Embedding,
    kb_embeddings: Mapping[str, Sequence[Embedding]],
    mode: AggregationMode,
    symptom_texts: Mapping[str, Sequence[str]] | None = None,
) -> ScoreReport:
    """Score ``image`` against every class and pick the argmax.

    ``kb_embeddings`` maps class id to that class's symptom embeddings;
    its iteration order is the tie-break order.  ``symptom_texts``
    optionally labels each embedding for the report (defaults to the
    symptom's index).
    """
    if not kb_embeddings:
        raise EmptyDescriptorError("no classes to classify against")

    entries: list[ClassScores] = []
    best_id: str | None = None
    best_score = -np.inf
    for class_id, symptoms in kb_embeddings.items():
        if len(symptoms) == 0:
            raise EmptyDescriptorError(f"class {class_id!r} has no symptoms")
        texts: Sequence[str]
        if symptom_texts is not None and class_id in symptom_texts:
            texts = symptom_texts[class_id]
            if len(texts) != len(symptoms):
                raise DimensionMismatchError(
                    f"class {class_id!r}: {len(texts)} symptom texts for "
                    f"{len(symptoms)} embeddings"
                )
        else:
            texts = [str(i) for i in range(len(symptoms))]

        sims = [dot(image, g) for g in symptoms]
        if mode is AggregationMode.MEAN:
            aggregate = float(np.mean(sims))
        else:
            aggregate = max(sims)
        entries.append(
            ClassScores(
                class_id=class_id,
                symptom_scores=tuple(zip(texts, sims)),
                aggregate=aggregate,
            )
        )
        # strict > keeps the earliest class on ties
        if aggregate > best_score:
            best_score = aggregate
            best_id = class_id

    assert best_id is not None
    return ScoreReport(
        classes=tuple(entries),
        predicted=best_id,
        mode=mode,
        image_dim=image.dim,
    )
