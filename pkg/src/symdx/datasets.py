"""Manifest builders for the public datasets' published directory layouts.

These scan a locally downloaded copy; images are never redistributed
with this package.  Class-name presets are assumptions where the
upstream datasets only provide numeric labels or filename suffixes.
"""

from __future__ import annotations

import csv
from pathlib import Path

from .errors import ManifestError
from .manifest import DatasetManifest, ManifestEntry

# Severity grades 0-4 on the international scale; the two highest names
# are fixed by the per-symptom report vocabulary, the rest are presets.
IDRID_GRADE_NAMES = (
    "No Apparent Retinopathy",
    "Mild Nonproliferative Retinopathy",
    "Moderate Nonproliferative Retinopathy",
    "Severe Nonproliferative Retinopathy",
    "Proliferative Retinopathy",
)

CHEST_XRAY_CLASSES = ("Normal lungs", "Tuberculosis")
PNEUMONIA_CLASSES = ("Normal lungs", "Pneumonia")


def _suffix_coded_xrays(
    root: Path, stem_prefix: str, dataset_id: str
) -> DatasetManifest:
    """Layout with one flat PNG directory, label coded in the filename:
    ``<PREFIX>_####_0.png`` is normal, ``_1.png`` shows disease."""
    normal, abnormal = CHEST_XRAY_CLASSES
    entries = []
    for img in sorted(root.rglob(f"{stem_prefix}_*.png")):
        stem = img.stem
        if stem.endswith("_0"):
            entries.append(ManifestEntry(path=str(img), class_id=normal))
        elif stem.endswith("_1"):
            entries.append(ManifestEntry(path=str(img), class_id=abnormal))
    if not entries:
        raise ManifestError(
            f"no {stem_prefix}_*.png files found under {root}; "
            "expected the dataset's published layout"
        )
    return DatasetManifest(
        dataset_id=dataset_id, classes=CHEST_XRAY_CLASSES, entries=tuple(entries)
    )


def build_montgomery_manifest(root: str | Path) -> DatasetManifest:
    return _suffix_coded_xrays(Path(root), "MCUCXR", "montgomery")


def build_shenzhen_manifest(root: str | Path) -> DatasetManifest:
    return _suffix_coded_xrays(Path(root), "CHNCXR", "shenzhen")


def build_pneumonia_manifest(root: str | Path) -> DatasetManifest:
    """Layout with NORMAL/ and PNEUMONIA/ class directories (any split
    level); the whole labeled set is evaluated, not one split."""
    root = Path(root)
    normal, pneumonia = PNEUMONIA_CLASSES
    entries = []
    for class_dir, class_id in (("NORMAL", normal), ("PNEUMONIA", pneumonia)):
        for directory in sorted(root.rglob(class_dir)):
            if not directory.is_dir():
                continue
            for img in sorted(directory.iterdir()):
                if img.suffix.lower() in (".jpeg", ".jpg", ".png"):
                    entries.append(ManifestEntry(path=str(img), class_id=class_id))
    if not entries:
        raise ManifestError(
            f"no NORMAL/PNEUMONIA class directories with images under {root}"
        )
    return DatasetManifest(
        dataset_id="pneumonia", classes=PNEUMONIA_CLASSES, entries=tuple(entries)
    )


def build_idrid_manifest(root: str | Path) -> DatasetManifest:
    """Disease-grading layout: per-split ground-truth CSVs with an
    ``Image name`` and ``Retinopathy grade`` column, images as
    ``<Image name>.jpg`` under the matching original-images split."""
    root = Path(root)
    label_csvs = sorted(root.rglob("*Disease Grading*Labels*.csv")) or sorted(
        root.rglob("*Labels*.csv")
    )
    if not label_csvs:
        raise ManifestError(f"no grading label CSVs found under {root}")
    images_by_name = {
        img.stem: img
        for img in sorted(root.rglob("IDRiD_*.jpg")) + sorted(root.rglob("IDRiD_*.png"))
    }
    entries = []
    seen = set()
    for csv_path in label_csvs:
        with open(csv_path, newline="", encoding="utf-8-sig") as f:
            for row in csv.DictReader(f):
                name = (row.get("Image name") or "").strip()
                grade_txt = (row.get("Retinopathy grade") or "").strip()
                if not name or not grade_txt or name in seen:
                    continue
                seen.add(name)
                grade = int(grade_txt)
                if not 0 <= grade <= 4:
                    raise ManifestError(
                        f"{csv_path}: grade {grade} for {name} out of range"
                    )
                img = images_by_name.get(name)
                if img is None:
                    continue
                entries.append(
                    ManifestEntry(path=str(img), class_id=IDRID_GRADE_NAMES[grade])
                )
    if not entries:
        raise ManifestError(f"no graded images matched under {root}")
    return DatasetManifest(
        dataset_id="idrid", classes=IDRID_GRADE_NAMES, entries=tuple(entries)
    )


PRESET_BUILDERS = {
    "montgomery": build_montgomery_manifest,
    "shenzhen": build_shenzhen_manifest,
    "pneumonia": build_pneumonia_manifest,
    "idrid": build_idrid_manifest,
}

PRESET_CATEGORIES = {
    "montgomery": list(CHEST_XRAY_CLASSES),
    "shenzhen": list(CHEST_XRAY_CLASSES),
    "pneumonia": list(PNEUMONIA_CLASSES),
    "idrid": list(IDRID_GRADE_NAMES),
}
