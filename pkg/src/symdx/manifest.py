"""Dataset manifests: labeled image lists defining the evaluation label set.

Two on-disk forms are supported: a single JSON document, or a CSV of
``path,label`` rows with a sidecar class-list file (one class per line,
order significant) named ``<stem>.classes.txt`` next to the CSV.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ManifestError

MANIFEST_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    class_id: str


@dataclass(frozen=True)
class DatasetManifest:
    dataset_id: str
    classes: tuple[str, ...]
    entries: tuple[ManifestEntry, ...]

    def __post_init__(self):
        if not self.entries:
            raise ManifestError(f"manifest {self.dataset_id!r} has no entries")
        if len(set(self.classes)) != len(self.classes):
            raise ManifestError(f"manifest {self.dataset_id!r} repeats classes")
        known = set(self.classes)
        for entry in self.entries:
            if entry.class_id not in known:
                raise ManifestError(
                    f"entry {entry.path!r} is labeled {entry.class_id!r}, "
                    "which is not in the class list"
                )
        paths = [e.path for e in self.entries]
        if len(set(paths)) != len(paths):
            raise ManifestError(f"manifest {self.dataset_id!r} repeats paths")

    @property
    def class_counts(self) -> dict[str, int]:
        counts = {c: 0 for c in self.classes}
        for entry in self.entries:
            counts[entry.class_id] += 1
        return counts

    def __len__(self) -> int:
        return len(self.entries)


def _classes_sidecar(csv_path: Path) -> Path:
    return csv_path.with_name(csv_path.stem + ".classes.txt")


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["path", "label"])
        for entry in manifest.entries:
            writer.writerow([entry.path, entry.class_id])
        path.write_text(buf.getvalue(), encoding="utf-8")
        _classes_sidecar(path).write_text(
            "\n".join(manifest.classes) + "\n", encoding="utf-8"
        )
        return
    doc = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "dataset_id": manifest.dataset_id,
        "classes": list(manifest.classes),
        "entries": [{"path": e.path, "class_id": e.class_id} for e in manifest.entries],
    }
    path.write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n", "utf-8")


def load_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest file not found: {path}")
    if path.suffix.lower() == ".csv":
        return _load_csv(path)
    return _load_json(path)


def _load_json(path: Path) -> DatasetManifest:
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ManifestError(f"manifest {path} is not valid JSON: {e}") from e
    version = doc.get("schema_version")
    if version != MANIFEST_SCHEMA_VERSION:
        raise ManifestError(
            f"manifest {path} declares unsupported schema {version!r}"
        )
    try:
        return DatasetManifest(
            dataset_id=doc["dataset_id"],
            classes=tuple(doc["classes"]),
            entries=tuple(
                ManifestEntry(path=e["path"], class_id=e["class_id"])
                for e in doc["entries"]
            ),
        )
    except (KeyError, TypeError) as e:
        raise ManifestError(f"manifest {path} is malformed: {e}") from e


def _load_csv(path: Path) -> DatasetManifest:
    sidecar = _classes_sidecar(path)
    if not sidecar.is_file():
        raise ManifestError(
            f"CSV manifest {path} needs its class-list sidecar {sidecar.name}"
        )
    classes = tuple(
        line.strip()
        for line in sidecar.read_text(encoding="utf-8").splitlines()
        if line.strip()
    )
    entries = []
    with open(path, newline="", encoding="utf-8") as f:
        for row_no, row in enumerate(csv.reader(f)):
            if not row:
                continue
            if row_no == 0 and [c.strip().lower() for c in row] == ["path", "label"]:
                continue
            if len(row) != 2:
                raise ManifestError(f"manifest {path}:{row_no + 1}: expected path,label")
            entries.append(ManifestEntry(path=row[0], class_id=row[1]))
    return DatasetManifest(
        dataset_id=path.stem, classes=classes, entries=tuple(entries)
    )
