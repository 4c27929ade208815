"""Prompt rendering, symptom parsing, and KB persistence."""

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from symdx.errors import (
    KnowledgeBaseError,
    SchemaError,
    SchemaVersionError,
    SymptomParseError,
)
from symdx.knowledge import (
    BASELINE_PROMPT,
    DESIGNED_PROMPT,
    ClassDescriptor,
    DescriptorSource,
    KnowledgeBase,
    PromptTemplate,
    PromptVariant,
    build_kb,
    category_name_kb,
    load_kb,
    parse_symptoms,
    render_prompt,
    save_kb,
)
from symdx.llm import LlmConfig, ResponseCache, cache_key


# ---------------------------------------------------------------------------
# render_prompt
# ---------------------------------------------------------------------------

def test_designed_prompt_for_tuberculosis():
    assert render_prompt(DESIGNED_PROMPT, "Tuberculosis") == (
        "Q: According to published literature, what are useful medical "
        "visual features for distinguishing Tuberculosis in a photo?"
    )


def test_baseline_prompt_for_pneumonia():
    assert render_prompt(BASELINE_PROMPT, "Pneumonia") == (
        "Q: What are useful visual features for distinguishing "
        "Pneumonia in a photo?"
    )


def test_empty_category_rejected():
    with pytest.raises(ValueError):
        render_prompt(DESIGNED_PROMPT, "")
    with pytest.raises(ValueError):
        render_prompt(DESIGNED_PROMPT, "   ")


def test_template_requires_exactly_one_placeholder():
    with pytest.raises(ValueError):
        PromptTemplate(id="bad", text="no placeholder", variant=PromptVariant.DESIGNED)
    with pytest.raises(ValueError):
        PromptTemplate(
            id="bad",
            text="{Diagnostic Category} and {Diagnostic Category}",
            variant=PromptVariant.DESIGNED,
        )


@settings(max_examples=50, deadline=None)
@given(st.text(min_size=1, max_size=40).filter(lambda s: s.strip()))
def test_rendered_prompt_contains_category_once_no_placeholder(category):
    out = render_prompt(DESIGNED_PROMPT, category)
    assert category in out
    assert "{Diagnostic Category}" not in out


# ---------------------------------------------------------------------------
# parse_symptoms
# ---------------------------------------------------------------------------

def test_parse_numbered_list():
    raw = (
        "1. No visible cavities or consolidations\n"
        "2. Absence of pleural effusions\n"
        "3. Clear and distinct lung borders"
    )
    assert parse_symptoms(raw) == [
        "No visible cavities or consolidations",
        "Absence of pleural effusions",
        "Clear and distinct lung borders",
    ]


def test_parse_dash_list():
    assert parse_symptoms("- Venous beading and loops\n- Neovascularization") == [
        "Venous beading and loops",
        "Neovascularization",
    ]


def test_parse_drops_headers_and_short_lines():
    with pytest.raises(SymptomParseError):
        parse_symptoms("Useful features:\n\n")
    raw = "Useful features:\n1. Air bronchogram sign.\n2. ok\n* Consolidation"
    assert parse_symptoms(raw) == ["Air bronchogram sign", "Consolidation"]


def test_parse_strips_trailing_period_and_dedupes():
    raw = "1) Pleural thickening.\n2) Pleural thickening\n3. Cavitation"
    assert parse_symptoms(raw) == ["Pleural thickening", "Cavitation"]


def test_parse_bullet_variants():
    raw = "• Miliary pattern\n* Upper lobe infiltrates\n- Cavity formation"
    assert parse_symptoms(raw) == [
        "Miliary pattern",
        "Upper lobe infiltrates",
        "Cavity formation",
    ]


@settings(max_examples=100, deadline=None)
@given(st.text(max_size=300))
def test_parse_output_invariants(raw):
    try:
        out = parse_symptoms(raw)
    except SymptomParseError:
        return
    assert out
    assert len(set(out)) == len(out)
    for phrase in out:
        assert phrase == phrase.strip()
        assert len(phrase) >= 3
        assert not phrase.endswith(":")


# ---------------------------------------------------------------------------
# build_kb against a pre-seeded cache (no network)
# ---------------------------------------------------------------------------

CFG = LlmConfig(endpoint="https://llm.invalid/v1/chat/completions", model="test-model")


def seed_cache(tmp_path, template, answers):
    cache = ResponseCache(tmp_path / "cache")
    for category, answer in answers.items():
        cache.put(
            cache_key(template.id, category, CFG.model),
            {"schema_version": 1, "prompt": "", "response": answer},
        )
    return cache


def test_build_kb_from_cached_answers(tmp_path):
    cache = seed_cache(
        tmp_path,
        DESIGNED_PROMPT,
        {
            "Normal lungs": "1. Clear and distinct lung borders\n2. Absence of pleural effusions",
            "Tuberculosis": "- Cavitation in upper lobes\n- Miliary nodules",
        },
    )
    kb = build_kb(["Normal lungs", "Tuberculosis"], DESIGNED_PROMPT, CFG, cache=cache)
    assert kb.class_ids == ["Normal lungs", "Tuberculosis"]
    assert all(len(c.symptoms) >= 1 for c in kb.classes)
    assert all(c.raw_response for c in kb.classes)
    assert kb.classes[0].prompt_id == DESIGNED_PROMPT.id


def test_build_kb_duplicate_categories_rejected(tmp_path):
    cache = seed_cache(tmp_path, DESIGNED_PROMPT, {"A": "1. foo bar"})
    with pytest.raises(KnowledgeBaseError):
        build_kb(["A", "A"], DESIGNED_PROMPT, CFG, cache=cache)


def test_build_kb_single_category(tmp_path):
    cache = seed_cache(tmp_path, DESIGNED_PROMPT, {"Pneumonia": "1. Air bronchogram sign"})
    kb = build_kb(["Pneumonia"], DESIGNED_PROMPT, CFG, cache=cache)
    assert len(kb.classes) == 1


def test_build_kb_failure_names_class(tmp_path):
    cache = seed_cache(tmp_path, DESIGNED_PROMPT, {"Good": "1. some symptom"})
    with pytest.raises(KnowledgeBaseError, match="Missing"):
        build_kb(["Good", "Missing"], DESIGNED_PROMPT, CFG, cache=cache)


def test_category_name_kb_reduces_to_names():
    kb = category_name_kb(["Normal lungs", "Tuberculosis"])
    assert [c.symptoms for c in kb.classes] == [("Normal lungs",), ("Tuberculosis",)]
    assert all(c.source is DescriptorSource.MANUAL for c in kb.classes)


# ---------------------------------------------------------------------------
# save / load
# ---------------------------------------------------------------------------

def make_kb(n_classes=2, kb_id="kb-test"):
    classes = tuple(
        ClassDescriptor(
            class_id=f"class-{i}",
            display_name=f"Class {i}",
            symptoms=(f"symptom {i}a", f"symptom {i}b"),
            prompt_id="designed-v1",
            source=DescriptorSource.LLM,
            raw_response=f"1. symptom {i}a\n2. symptom {i}b",
            created_at="2026-08-09T00:00:00+00:00",
        )
        for i in range(n_classes)
    )
    return KnowledgeBase(kb_id=kb_id, classes=classes, dataset_id="synthetic")


def test_round_trip_identity(tmp_path):
    kb = make_kb()
    path = tmp_path / "kb.json"
    save_kb(kb, path)
    assert load_kb(path) == kb


def test_zero_symptom_class_rejected(tmp_path):
    kb = make_kb()
    path = tmp_path / "kb.json"
    save_kb(kb, path)
    doc = json.loads(path.read_text())
    doc["classes"][0]["symptoms"] = []
    path.write_text(json.dumps(doc))
    with pytest.raises(SchemaError):
        load_kb(path)


def test_newer_schema_version_rejected(tmp_path):
    path = tmp_path / "kb.json"
    save_kb(make_kb(), path)
    doc = json.loads(path.read_text())
    doc["schema_version"] = 99
    path.write_text(json.dumps(doc))
    with pytest.raises(SchemaVersionError):
        load_kb(path)


def test_unknown_future_field_rejected(tmp_path):
    path = tmp_path / "kb.json"
    save_kb(make_kb(), path)
    doc = json.loads(path.read_text())
    doc["embedding_cache"] = {"some": "future thing"}
    path.write_text(json.dumps(doc))
    with pytest.raises(SchemaVersionError):
        load_kb(path)


def test_duplicate_class_ids_rejected(tmp_path):
    path = tmp_path / "kb.json"
    save_kb(make_kb(), path)
    doc = json.loads(path.read_text())
    doc["classes"][1]["class_id"] = doc["classes"][0]["class_id"]
    path.write_text(json.dumps(doc))
    with pytest.raises(SchemaError):
        load_kb(path)


def test_malformed_json_rejected(tmp_path):
    path = tmp_path / "kb.json"
    path.write_text("{not json")
    with pytest.raises(SchemaError):
        load_kb(path)


symptom_text = st.text(
    alphabet=st.characters(blacklist_categories=("Cs", "Cc")),
    min_size=3,
    max_size=60,
).filter(lambda s: s.strip() == s and len(s.strip()) >= 3)


@settings(max_examples=50, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.uuids().map(str),
            st.lists(symptom_text, min_size=1, max_size=6, unique=True),
        ),
        min_size=1,
        max_size=5,
        unique_by=lambda t: t[0],
    )
)
def test_round_trip_many_generated_kbs(tmp_path_factory, entries):
    classes = tuple(
        ClassDescriptor(
            class_id=cid,
            display_name=cid,
            symptoms=tuple(symptoms),
            prompt_id="designed-v1",
            source=DescriptorSource.MANUAL,
            created_at="2026-08-09T00:00:00+00:00",
        )
        for cid, symptoms in entries
    )
    kb = KnowledgeBase(kb_id="generated", classes=classes)
    path = tmp_path_factory.mktemp("kbs") / "kb.json"
    save_kb(kb, path)
    assert load_kb(path) == kb
