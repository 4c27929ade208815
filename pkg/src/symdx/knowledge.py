"""Per-class symptom knowledge: prompt rendering, answer parsing, persistence.

A knowledge base maps each diagnostic category to the list of visual
symptom phrases an LLM produced for it, together with the provenance
needed to audit or regenerate the entry (prompt id, verbatim response,
capture time).  Class order is significant: it is the tie-break order
used by classification.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path

from .errors import (
    KnowledgeBaseError,
    SchemaError,
    SchemaVersionError,
    SymptomParseError,
)
from .llm import LlmConfig, ResponseCache, cache_key, query_llm

KB_SCHEMA_VERSION = 1
PLACEHOLDER = "{Diagnostic Category}"


class PromptVariant(Enum):
    DESIGNED = "designed"
    BASELINE = "baseline"


@dataclass(frozen=True)
class PromptTemplate:
    """Parameterized query sent to the LLM for one category."""

    id: str
    text: str
    variant: PromptVariant

    def __post_init__(self):
        if self.text.count(PLACEHOLDER) != 1:
            raise ValueError(
                f"template {self.id!r} must contain {PLACEHOLDER} exactly once"
            )


DESIGNED_PROMPT = PromptTemplate(
    id="designed-v1",
    text=(
        "Q: According to published literature, what are useful medical "
        "visual features for distinguishing {Diagnostic Category} in a photo?"
    ),
    variant=PromptVariant.DESIGNED,
)

BASELINE_PROMPT = PromptTemplate(
    id="baseline-v1",
    text=(
        "Q: What are useful visual features for distinguishing "
        "{Diagnostic Category} in a photo?"
    ),
    variant=PromptVariant.BASELINE,
)

TEMPLATES = {t.variant: t for t in (DESIGNED_PROMPT, BASELINE_PROMPT)}


def render_prompt(template: PromptTemplate, category: str) -> str:
    """Substitute the category into the template, verbatim."""
    if not category or not category.strip():
        raise ValueError("category must be non-empty")
    return template.text.replace(PLACEHOLDER, category)


class DescriptorSource(Enum):
    LLM = "LLM"
    MANUAL = "MANUAL"


@dataclass(frozen=True)
class ClassDescriptor:
    """One diagnostic category with its symptom phrases and provenance."""

    class_id: str
    display_name: str
    symptoms: tuple[str, ...]
    prompt_id: str
    source: DescriptorSource
    raw_response: str | None = None
    created_at: str = ""

    def __post_init__(self):
        if not self.class_id:
            raise SchemaError("descriptor has empty class_id")
        if len(self.symptoms) == 0:
            raise SchemaError(f"class {self.class_id!r} has no symptoms")
        if any(not s.strip() for s in self.symptoms):
            raise SchemaError(f"class {self.class_id!r} has a blank symptom")
        if len(set(self.symptoms)) != len(self.symptoms):
            raise SchemaError(f"class {self.class_id!r} has duplicate symptoms")
        if self.source is DescriptorSource.LLM and not self.raw_response:
            raise SchemaError(
                f"class {self.class_id!r} is LLM-sourced but lacks the "
                "verbatim response (audit trail)"
            )


@dataclass(frozen=True)
class KnowledgeBase:
    """Ordered class descriptors; order is the classification tie-break."""

    kb_id: str
    classes: tuple[ClassDescriptor, ...]
    dataset_id: str | None = None
    encoder_fingerprint: str | None = None

    def __post_init__(self):
        ids = [c.class_id for c in self.classes]
        if len(set(ids)) != len(ids):
            raise SchemaError(f"knowledge base {self.kb_id!r} repeats class ids")
        if not ids:
            raise SchemaError(f"knowledge base {self.kb_id!r} has no classes")

    @property
    def class_ids(self) -> list[str]:
        return [c.class_id for c in self.classes]

    def descriptor(self, class_id: str) -> ClassDescriptor:
        for c in self.classes:
            if c.class_id == class_id:
                return c
        raise KeyError(class_id)

    def with_fingerprint(self, fingerprint: str) -> "KnowledgeBase":
        return replace(self, encoder_fingerprint=fingerprint)


_LIST_MARKER = re.compile(r"^\s*(?:\d+\s*[.)]|[-*•])\s*")


def parse_symptoms(raw: str) -> list[str]:
    """Extract symptom phrases from an LLM answer.

    One phrase per line: enumeration markers and surrounding whitespace
    are stripped, a single trailing period is removed, header lines
    ending in ':' and fragments under three characters are dropped, and
    exact repeats are deduplicated while preserving order.
    """
    if not raw:
        raise SymptomParseError("empty response")
    seen: set[str] = set()
    symptoms: list[str] = []
    for line in raw.splitlines():
        line = _LIST_MARKER.sub("", line).strip()
        if not line or line.endswith(":"):
            continue
        if line.endswith("."):
            line = line[:-1].rstrip()
        if len(line) < 3:
            continue
        if line in seen:
            continue
        seen.add(line)
        symptoms.append(line)
    if not symptoms:
        raise SymptomParseError("no symptom lines survived parsing")
    return symptoms


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def build_kb(
    categories: list[str],
    template: PromptTemplate,
    cfg: LlmConfig,
    cache: ResponseCache | None = None,
    kb_id: str | None = None,
    dataset_id: str | None = None,
) -> KnowledgeBase:
    """Query the LLM once per category and assemble a knowledge base.

    Per-class failures abort the whole build with the failing class
    named; a partial KB is never produced.
    """
    if not categories:
        raise KnowledgeBaseError("no categories given")
    if len(set(categories)) != len(categories):
        raise KnowledgeBaseError("duplicate category names")
    descriptors = []
    for category in categories:
        try:
            prompt = render_prompt(template, category)
            key = cache_key(template.id, category, cfg.model)
            answer = query_llm(prompt, cfg, cache=cache, key=key)
            symptoms = parse_symptoms(answer)
        except Exception as e:
            raise KnowledgeBaseError(f"class {category!r}: {e}") from e
        # timestamp from the cached capture, so warm-cache rebuilds are
        # byte-identical; only a genuinely fresh answer gets a new stamp
        captured_at = _now()
        if cache is not None:
            record = cache.get(key)
            if record and record.get("captured_at"):
                captured_at = record["captured_at"]
        descriptors.append(
            ClassDescriptor(
                class_id=category,
                display_name=category,
                symptoms=tuple(symptoms),
                prompt_id=template.id,
                source=DescriptorSource.LLM,
                raw_response=answer,
                created_at=captured_at,
            )
        )
    return KnowledgeBase(
        kb_id=kb_id or f"kb-{template.variant.value}-{len(categories)}cls",
        classes=tuple(descriptors),
        dataset_id=dataset_id,
    )


def category_name_kb(categories: list[str], kb_id: str = "category-names") -> KnowledgeBase:
    """Degenerate KB whose only symptom per class is the class name.

    Scoring against it reduces the pipeline to plain zero-shot
    classification over category names.
    """
    return KnowledgeBase(
        kb_id=kb_id,
        classes=tuple(
            ClassDescriptor(
                class_id=c,
                display_name=c,
                symptoms=(c,),
                prompt_id="category-name",
                source=DescriptorSource.MANUAL,
                created_at=_now(),
            )
            for c in categories
        ),
    )


_KB_FIELDS = {"schema_version", "kb_id", "dataset_id", "encoder_fingerprint", "classes"}
_CLASS_FIELDS = {
    "class_id",
    "display_name",
    "symptoms",
    "prompt_id",
    "source",
    "raw_response",
    "created_at",
}


def save_kb(kb: KnowledgeBase, path: str | Path) -> None:
    doc = {
        "schema_version": KB_SCHEMA_VERSION,
        "kb_id": kb.kb_id,
        "dataset_id": kb.dataset_id,
        "encoder_fingerprint": kb.encoder_fingerprint,
        "classes": [
            {
                "class_id": c.class_id,
                "display_name": c.display_name,
                "symptoms": list(c.symptoms),
                "prompt_id": c.prompt_id,
                "source": c.source.value,
                "raw_response": c.raw_response,
                "created_at": c.created_at,
            }
            for c in kb.classes
        ],
    }
    Path(path).write_text(
        json.dumps(doc, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )


def load_kb(path: str | Path) -> KnowledgeBase:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise SchemaError(f"knowledge base {path} is not valid JSON: {e}") from e
    except OSError as e:
        raise SchemaError(f"cannot read knowledge base {path}: {e}") from e
    if not isinstance(doc, dict):
        raise SchemaError(f"knowledge base {path} must be a JSON object")
    version = doc.get("schema_version")
    if not isinstance(version, int) or version > KB_SCHEMA_VERSION:
        raise SchemaVersionError(
            f"knowledge base {path} declares schema {version!r}; "
            f"this build supports up to {KB_SCHEMA_VERSION}"
        )
    unknown = set(doc) - _KB_FIELDS
    if unknown:
        raise SchemaVersionError(
            f"knowledge base {path} carries unknown fields {sorted(unknown)}; "
            "refusing to guess their meaning"
        )
    try:
        classes = []
        for entry in doc["classes"]:
            unknown = set(entry) - _CLASS_FIELDS
            if unknown:
                raise SchemaVersionError(
                    f"class entry carries unknown fields {sorted(unknown)}"
                )
            classes.append(
                ClassDescriptor(
                    class_id=entry["class_id"],
                    display_name=entry.get("display_name", entry["class_id"]),
                    symptoms=tuple(entry["symptoms"]),
                    prompt_id=entry.get("prompt_id", ""),
                    source=DescriptorSource(entry.get("source", "MANUAL")),
                    raw_response=entry.get("raw_response"),
                    created_at=entry.get("created_at", ""),
                )
            )
        return KnowledgeBase(
            kb_id=doc["kb_id"],
            classes=tuple(classes),
            dataset_id=doc.get("dataset_id"),
            encoder_fingerprint=doc.get("encoder_fingerprint"),
        )
    except SchemaError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise SchemaError(f"knowledge base {path} is malformed: {e}") from e
