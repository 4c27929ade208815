"""Batch evaluation: accuracy, confusion matrices, gains, and sweeps."""

from __future__ import annotations

import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .encoders.bundle import EncoderBundle
from .errors import ConfigMismatchError, ManifestError, SymdxError
from .knowledge import KnowledgeBase
from .manifest import DatasetManifest
from .pipeline import (
    EmbeddedKb,
    ImageEmbedder,
    TextEmbeddingCache,
    classify_embedding,
)
from .scoring import AggregationMode, Embedding


def display_pct(fraction: float) -> float:
    """Accuracy fraction -> percentage at the 2-decimal display precision."""
    return round(fraction * 100.0, 2)


@dataclass(frozen=True)
class EvalResult:
    """Accuracy and confusion counts for one (manifest, KB, bundle, mode) run."""

    dataset_id: str
    classes: tuple[str, ...]
    confusion: tuple[tuple[int, ...], ...]  # [true class][predicted class]
    failures: tuple[tuple[str, str], ...] = ()  # (path, error) in lenient mode
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.classes)
        if len(self.confusion) != n or any(len(row) != n for row in self.confusion):
            raise ValueError("confusion matrix shape does not match classes")

    @property
    def total(self) -> int:
        return sum(sum(row) for row in self.confusion)

    @property
    def correct(self) -> int:
        return sum(self.confusion[i][i] for i in range(len(self.classes)))

    @property
    def accuracy(self) -> float:
        return self.correct / self.total

    @property
    def accuracy_pct(self) -> float:
        return display_pct(self.accuracy)

    @property
    def per_class_counts(self) -> dict[str, int]:
        return {c: sum(row) for c, row in zip(self.classes, self.confusion)}

    def to_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "classes": list(self.classes),
            "accuracy": self.accuracy,
            "accuracy_pct": self.accuracy_pct,
            "total": self.total,
            "correct": self.correct,
            "per_class_counts": self.per_class_counts,
            "confusion": [list(row) for row in self.confusion],
            "failures": [list(f) for f in self.failures],
            "config": self.config,
        }

    def format_table(self) -> str:
        width = max(len(c) for c in self.classes) + 2
        out = io.StringIO()
        out.write(
            f"dataset: {self.dataset_id}   accuracy: {self.accuracy_pct:.2f}% "
            f"({self.correct}/{self.total})\n"
        )
        header = " " * width + "".join(f"{c:>{width}}" for c in self.classes)
        out.write(header + "   <- predicted\n")
        for cls, row in zip(self.classes, self.confusion):
            out.write(f"{cls:>{width}}" + "".join(f"{v:>{width}}" for v in row) + "\n")
        if self.failures:
            out.write(f"skipped (unreadable): {len(self.failures)}\n")
        return out.getvalue()


def evaluate(
    manifest: DatasetManifest,
    kb: KnowledgeBase,
    bundle: EncoderBundle | None,
    mode: AggregationMode,
    *,
    strict: bool = True,
    workers: int = 1,
    embedder: ImageEmbedder | None = None,
    embed_fn: Callable[[str], Embedding] | None = None,
    text_cache: TextEmbeddingCache | None = None,
    embedded_kb: EmbeddedKb | None = None,
    wrapper: str | None = None,
) -> EvalResult:
    """Classify every manifest image and tally the confusion matrix.

    ``embed_fn``/``embedded_kb`` bypass the encoders entirely (used by
    tests and rigged-predictor experiments); normal runs derive both
    from ``bundle``.  Unreadable images abort in strict mode (the
    default) and are recorded and excluded from the denominator
    otherwise.  Results do not depend on entry order or worker count.
    """
    missing = [c for c in manifest.classes if c not in kb.class_ids]
    if missing:
        raise ManifestError(
            f"manifest {manifest.dataset_id!r} labels classes the knowledge "
            f"base lacks: {', '.join(missing)}"
        )

    if embedded_kb is None:
        if bundle is None:
            raise ConfigMismatchError("evaluate needs a bundle or an embedded KB")
        if text_cache is not None:
            embedded_kb = text_cache.get_or_embed(kb, bundle, wrapper=wrapper)
        else:
            from .pipeline import embed_kb

            embedded_kb = embed_kb(kb, bundle, wrapper=wrapper)

    # restrict scoring to the manifest's label set, preserving KB order
    eval_classes = [c for c in kb.class_ids if c in set(manifest.classes)]
    scoped = EmbeddedKb(
        kb_id=embedded_kb.kb_id,
        bundle_fingerprint=embedded_kb.bundle_fingerprint,
        embeddings={c: embedded_kb.embeddings[c] for c in eval_classes},
        texts={c: embedded_kb.texts[c] for c in eval_classes},
    )

    if embed_fn is None:
        if embedder is None:
            if bundle is None:
                raise ConfigMismatchError("evaluate needs a bundle or an embed_fn")
            embedder = ImageEmbedder(bundle)
        embed_fn = embedder.embed_path

    def run_one(entry):
        try:
            image = embed_fn(entry.path)
            report = classify_embedding(image, scoped, mode)
            return entry, report.predicted, None
        except SymdxError as e:
            return entry, None, str(e)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run_one, manifest.entries))
    else:
        outcomes = [run_one(e) for e in manifest.entries]

    index = {c: i for i, c in enumerate(manifest.classes)}
    matrix = [[0] * len(manifest.classes) for _ in manifest.classes]
    failures: list[tuple[str, str]] = []
    for entry, predicted, error in outcomes:
        if error is not None:
            if strict:
                raise ManifestError(
                    f"unreadable image {entry.path!r}: {error} "
                    "(run with strict mode off to skip such items)"
                )
            failures.append((entry.path, error))
            continue
        matrix[index[entry.class_id]][index[predicted]] += 1

    if sum(map(sum, matrix)) == 0:
        raise ManifestError(
            f"no evaluable images in manifest {manifest.dataset_id!r}"
        )

    config = {
        "kb_id": kb.kb_id,
        "bundle": getattr(bundle, "name", None),
        "bundle_fingerprint": (
            bundle.fingerprint if bundle is not None else scoped.bundle_fingerprint
        ),
        "aggregation": mode.value,
        "prompt_ids": sorted({c.prompt_id for c in kb.classes}),
        "strict": strict,
    }
    return EvalResult(
        dataset_id=manifest.dataset_id,
        classes=manifest.classes,
        confusion=tuple(tuple(row) for row in matrix),
        failures=tuple(failures),
        config=config,
    )


@dataclass(frozen=True)
class GainRow:
    """Ours-vs-baseline accuracy comparison at display precision."""

    dataset_id: str
    ours_accuracy: float  # full precision, kept for downstream math
    baseline_accuracy: float
    ours_pct: float
    baseline_pct: float
    gain: float

    def format_row(self) -> str:
        return (
            f"{self.dataset_id}: ours {self.ours_pct:.2f}%  "
            f"baseline {self.baseline_pct:.2f}%  gain {self.gain:+.2f}"
        )


def compare(ours: EvalResult, baseline: EvalResult) -> GainRow:
    """Gain of ``ours`` over ``baseline`` on the same manifest and encoder."""
    if ours.dataset_id != baseline.dataset_id or ours.classes != baseline.classes:
        raise ManifestError("results come from different manifests")
    if ours.total + len(ours.failures) != baseline.total + len(baseline.failures):
        raise ManifestError("results cover different numbers of images")
    ours_fp = ours.config.get("bundle_fingerprint")
    base_fp = baseline.config.get("bundle_fingerprint")
    if ours_fp != base_fp:
        raise ManifestError("results come from different encoder bundles")
    ours_pct = display_pct(ours.accuracy)
    base_pct = display_pct(baseline.accuracy)
    return GainRow(
        dataset_id=ours.dataset_id,
        ours_accuracy=ours.accuracy,
        baseline_accuracy=baseline.accuracy,
        ours_pct=ours_pct,
        baseline_pct=base_pct,
        gain=round(ours_pct - base_pct, 2),
    )


@dataclass(frozen=True)
class SweepCell:
    kb_id: str
    bundle_name: str
    mode: AggregationMode
    result: EvalResult | None
    error: str | None = None

    @property
    def column(self) -> tuple[str, str]:
        return (self.kb_id, self.mode.value)


@dataclass
class SweepGrid:
    """Cartesian grid of evaluations plus a best-accuracy summary row."""

    dataset_id: str
    cells: list[SweepCell]

    def cell(self, kb_id: str, bundle_name: str, mode: AggregationMode) -> SweepCell:
        for c in self.cells:
            if (c.kb_id, c.bundle_name, c.mode) == (kb_id, bundle_name, mode):
                return c
        raise KeyError((kb_id, bundle_name, mode))

    @property
    def columns(self) -> list[tuple[str, str]]:
        seen: list[tuple[str, str]] = []
        for c in self.cells:
            if c.column not in seen:
                seen.append(c.column)
        return seen

    @property
    def bundle_names(self) -> list[str]:
        seen: list[str] = []
        for c in self.cells:
            if c.bundle_name not in seen:
                seen.append(c.bundle_name)
        return seen

    def best_per_column(self) -> dict[tuple[str, str], float]:
        best: dict[tuple[str, str], float] = {}
        for c in self.cells:
            if c.result is None:
                continue
            pct = c.result.accuracy_pct
            if c.column not in best or pct > best[c.column]:
                best[c.column] = pct
        return best

    def to_csv_rows(self) -> list[list[str]]:
        columns = self.columns
        header = ["bundle"] + [f"{kb}/{mode}" for kb, mode in columns]
        rows = [header]
        for bundle_name in self.bundle_names:
            row = [bundle_name]
            for column in columns:
                match = [
                    c
                    for c in self.cells
                    if c.bundle_name == bundle_name and c.column == column
                ]
                if not match or match[0].result is None:
                    row.append("error" if match and match[0].error else "")
                else:
                    row.append(f"{match[0].result.accuracy_pct:.2f}")
            rows.append(row)
        best = self.best_per_column()
        rows.append(
            ["best"]
            + [f"{best[col]:.2f}" if col in best else "" for col in columns]
        )
        return rows

    def format_table(self) -> str:
        rows = self.to_csv_rows()
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        lines = [
            "  ".join(f"{cell:>{w}}" for cell, w in zip(row, widths)) for row in rows
        ]
        return f"dataset: {self.dataset_id}\n" + "\n".join(lines) + "\n"


def sweep(
    manifest: DatasetManifest,
    kbs: Sequence[KnowledgeBase],
    bundles: Sequence[EncoderBundle],
    modes: Sequence[AggregationMode],
    *,
    strict: bool = True,
    workers: int = 1,
    cache_dir=None,
    text_cache: TextEmbeddingCache | None = None,
) -> SweepGrid:
    """Evaluate every (KB, bundle, mode) combination.

    Image embeddings are shared per bundle and symptom embeddings per
    (KB, bundle) pair, so adding an aggregation mode to a sweep costs
    no encoder work.  A failing cell is recorded in-grid and the sweep
    continues.
    """
    text_cache = text_cache or TextEmbeddingCache()
    cells: list[SweepCell] = []
    for bundle in bundles:
        embedder = ImageEmbedder(bundle, cache_dir=cache_dir)
        for kb in kbs:
            for mode in modes:
                try:
                    result = evaluate(
                        manifest,
                        kb,
                        bundle,
                        mode,
                        strict=strict,
                        workers=workers,
                        embedder=embedder,
                        text_cache=text_cache,
                    )
                    cells.append(SweepCell(kb.kb_id, bundle.name, mode, result))
                except SymdxError as e:
                    cells.append(
                        SweepCell(kb.kb_id, bundle.name, mode, None, error=str(e))
                    )
    return SweepGrid(dataset_id=manifest.dataset_id, cells=cells)
