"""Figure rendering for case reports and evaluation tables.

Figures are written to files next to the delimited output; nothing
here feeds back into scoring.  The case-report figure mirrors the
text rendering: one horizontal bar per symptom, grouped by class,
predicted class first.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluate import SweepGrid
from .report import CaseReport

PREDICTED_COLOR = "#d46a9b"
OTHER_COLOR = "#6aa84f"


def render_case_report(report: CaseReport, path: str | Path) -> Path:
    """Per-symptom similarity bars, one panel per class."""
    ordered = sorted(report.classes, key=lambda rc: rc.class_id != report.predicted)
    n_rows = sum(len(rc.ranked_scores) + 1 for rc in ordered)
    fig_height = max(2.0, 0.32 * n_rows + 0.8)
    fig, axes = plt.subplots(
        len(ordered),
        1,
        figsize=(9, fig_height),
        gridspec_kw={
            "height_ratios": [len(rc.ranked_scores) for rc in ordered]
        },
        squeeze=False,
    )
    for ax, rc in zip(axes[:, 0], ordered):
        labels = [s for s, _ in rc.ranked_scores][::-1]
        values = [v for _, v in rc.ranked_scores][::-1]
        color = PREDICTED_COLOR if rc.class_id == report.predicted else OTHER_COLOR
        ax.barh(labels, values, color=color)
        suffix = " (predicted)" if rc.class_id == report.predicted else ""
        ax.set_title(
            f"{rc.class_id}{suffix} — aggregate {rc.aggregate:.2f}",
            fontsize=10,
            loc="left",
        )
        ax.tick_params(labelsize=8)
        ax.margins(y=0.02)
    fig.suptitle(f"{report.image_id} → {report.predicted}", fontsize=11)
    fig.tight_layout(rect=(0, 0, 1, 0.96))
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_sweep_grid(grid: SweepGrid, path: str | Path) -> Path:
    """Grouped accuracy bars: one group per bundle, one bar per column."""
    columns = grid.columns
    bundles = grid.bundle_names
    fig, ax = plt.subplots(figsize=(1.8 + 1.4 * len(bundles), 4.2))
    group_width = 0.8
    bar_width = group_width / max(1, len(columns))
    for col_idx, column in enumerate(columns):
        xs, ys = [], []
        for b_idx, bundle_name in enumerate(bundles):
            for cell in grid.cells:
                if cell.bundle_name == bundle_name and cell.column == column:
                    if cell.result is not None:
                        xs.append(b_idx - group_width / 2 + (col_idx + 0.5) * bar_width)
                        ys.append(cell.result.accuracy_pct)
        ax.bar(xs, ys, width=bar_width * 0.9, label="/".join(column))
    ax.set_xticks(range(len(bundles)))
    ax.set_xticklabels(bundles, fontsize=9)
    ax.set_ylabel("accuracy (%)")
    ax.set_title(f"dataset: {grid.dataset_id}", fontsize=10)
    ax.legend(fontsize=8)
    ax.set_ylim(0, 100)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
