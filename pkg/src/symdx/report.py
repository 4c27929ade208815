"""Per-case diagnosis reports: ranked symptom evidence in three formats.

A case report restructures a ScoreReport for human and machine
consumption: per-class symptom scores ranked descending (stable, so
knowledge-base order breaks ties), a top-evidence list for the
predicted class, and JSON/CSV/TEXT export.  Scores are carried through
untouched; only ordering and formatting happen here.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

from .scoring import ScoreReport

BAR_GLYPH = "█"
BAR_WIDTH = 40


@dataclass(frozen=True)
class RankedClass:
    class_id: str
    aggregate: float
    ranked_scores: tuple[tuple[str, float], ...]  # (symptom, score), desc


@dataclass(frozen=True)
class CaseReport:
    image_id: str
    predicted: str
    aggregation: str
    classes: tuple[RankedClass, ...]  # knowledge-base order
    top_evidence: tuple[tuple[str, float], ...]
    config: dict

    def ranked_for(self, class_id: str) -> RankedClass:
        for entry in self.classes:
            if entry.class_id == class_id:
                return entry
        raise KeyError(class_id)


def build_case_report(
    score_report: ScoreReport, image_id: str, config: dict | None = None
) -> CaseReport:
    """Rank the raw scores; no numeric mutation beyond ordering."""
    ranked_classes = []
    for entry in score_report.classes:
        # stable sort: equal scores keep their knowledge-base order
        ranked = tuple(
            sorted(entry.symptom_scores, key=lambda pair: pair[1], reverse=True)
        )
        ranked_classes.append(
            RankedClass(
                class_id=entry.class_id,
                aggregate=entry.aggregate,
                ranked_scores=ranked,
            )
        )
    top = next(
        rc.ranked_scores for rc in ranked_classes if rc.class_id == score_report.predicted
    )
    return CaseReport(
        image_id=image_id,
        predicted=score_report.predicted,
        aggregation=score_report.mode.value,
        classes=tuple(ranked_classes),
        top_evidence=top,
        config=dict(config or {}),
    )


def case_report_to_dict(report: CaseReport) -> dict:
    return {
        "image_id": report.image_id,
        "predicted": report.predicted,
        "aggregation": report.aggregation,
        "classes": [
            {
                "class_id": rc.class_id,
                "aggregate": rc.aggregate,
                "symptoms": [
                    {"symptom": s, "score": v} for s, v in rc.ranked_scores
                ],
            }
            for rc in report.classes
        ],
        "top_evidence": [
            {"symptom": s, "score": v} for s, v in report.top_evidence
        ],
        "config": report.config,
    }


def case_report_from_dict(doc: dict) -> CaseReport:
    classes = tuple(
        RankedClass(
            class_id=c["class_id"],
            aggregate=c["aggregate"],
            ranked_scores=tuple((s["symptom"], s["score"]) for s in c["symptoms"]),
        )
        for c in doc["classes"]
    )
    return CaseReport(
        image_id=doc["image_id"],
        predicted=doc["predicted"],
        aggregation=doc["aggregation"],
        classes=classes,
        top_evidence=tuple(
            (s["symptom"], s["score"]) for s in doc["top_evidence"]
        ),
        config=doc.get("config", {}),
    )


def _render_text(report: CaseReport) -> str:
    out = io.StringIO()
    out.write(f"image: {report.image_id}\n")
    out.write(f"predicted: {report.predicted}  (aggregation: {report.aggregation})\n")
    all_scores = [
        v for rc in report.classes for _, v in rc.ranked_scores
    ]
    peak = max(abs(v) for v in all_scores) or 1.0
    # predicted class first, remaining classes in knowledge-base order
    ordered = sorted(
        report.classes, key=lambda rc: rc.class_id != report.predicted
    )
    for rc in ordered:
        marker = " (predicted)" if rc.class_id == report.predicted else ""
        out.write(f"\n{rc.class_id}{marker}  aggregate {rc.aggregate:.2f}\n")
        for symptom, value in rc.ranked_scores:
            bar = BAR_GLYPH * max(0, round(BAR_WIDTH * max(value, 0.0) / peak))
            out.write(f"  {value:6.2f} {bar} {symptom}\n")
    return out.getvalue()


def export_report(report: CaseReport, format: str) -> bytes:
    """Serialize a case report as ``json``, ``csv``, or ``text``."""
    fmt = format.lower()
    if fmt == "json":
        return (
            json.dumps(case_report_to_dict(report), indent=2, ensure_ascii=False)
            + "\n"
        ).encode("utf-8")
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["image_id", "class", "symptom", "score", "predicted"])
        for rc in report.classes:
            for symptom, value in rc.ranked_scores:
                writer.writerow(
                    [
                        report.image_id,
                        rc.class_id,
                        symptom,
                        repr(value),
                        str(rc.class_id == report.predicted).lower(),
                    ]
                )
        return buf.getvalue().encode("utf-8")
    if fmt == "text":
        return _render_text(report).encode("utf-8")
    raise ValueError(f"unknown report format: {format!r}")
