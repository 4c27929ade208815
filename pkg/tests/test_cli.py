"""Command-line surface: behaviors and the stable exit-code contract."""

import csv
import io
import json

import numpy as np
import pytest
from PIL import Image

from symdx.cli import main
from symdx.knowledge import load_kb
from symdx.manifest import DatasetManifest, ManifestEntry, save_manifest
from symdx.pipeline import classify_image
from symdx.report import case_report_from_dict
from symdx.scoring import AggregationMode


@pytest.fixture(scope="module")
def cache_dir(fixtures_dir):
    return str(fixtures_dir / "llm_cache")


@pytest.fixture(scope="module")
def kb_path(fixtures_dir):
    return str(fixtures_dir / "kb" / "montgomery-designed.json")


@pytest.fixture(scope="module")
def xray(bundle_dir):
    return str(bundle_dir / "fixtures" / "fixture_xray.png")


def run(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


# ---------------------------------------------------------------------------
# generate-kb
# ---------------------------------------------------------------------------

def test_generate_kb_from_warm_cache(tmp_path, capsys, fixtures_dir, cache_dir):
    out = tmp_path / "kb.json"
    code, stdout, _ = run(
        [
            "generate-kb",
            "--categories", str(fixtures_dir / "categories" / "montgomery.txt"),
            "--variant", "designed",
            "--cache-dir", cache_dir,
            "--out", str(out),
        ],
        capsys,
    )
    assert code == 0
    assert "Normal lungs: 7 symptoms" in stdout
    assert "Tuberculosis: 7 symptoms" in stdout
    assert load_kb(out).class_ids == ["Normal lungs", "Tuberculosis"]


def test_generate_kb_baseline_variant_recorded(tmp_path, capsys, fixtures_dir, cache_dir):
    out = tmp_path / "kb.json"
    code, _, _ = run(
        [
            "generate-kb",
            "--categories", str(fixtures_dir / "categories" / "montgomery.txt"),
            "--variant", "baseline",
            "--cache-dir", cache_dir,
            "--out", str(out),
        ],
        capsys,
    )
    assert code == 0
    kb = load_kb(out)
    assert all(c.prompt_id == "baseline-v1" for c in kb.classes)


def test_generate_kb_cold_cache_unreachable_endpoint_exits_2(tmp_path, capsys):
    categories = tmp_path / "cats.txt"
    categories.write_text("Never Cached Category\n")
    code, _, stderr = run(
        [
            "generate-kb",
            "--categories", str(categories),
            "--out", str(tmp_path / "kb.json"),
            "--cache-dir", str(tmp_path / "cold"),
            "--llm-endpoint", "http://127.0.0.1:1/v1/chat/completions",
        ],
        capsys,
    )
    assert code == 2
    assert "Never Cached Category" in stderr
    assert not (tmp_path / "kb.json").exists()  # partial KB never written


# ---------------------------------------------------------------------------
# classify
# ---------------------------------------------------------------------------

def test_classify_json_output_parses_against_schema(
    capsys, bundle_dir, kb_path, xray
):
    code, stdout, _ = run(
        [
            "classify", xray,
            "--bundle", str(bundle_dir),
            "--kb", kb_path,
            "--format", "json",
        ],
        capsys,
    )
    assert code == 0
    report = case_report_from_dict(json.loads(stdout))
    assert report.predicted in ("Normal lungs", "Tuberculosis")
    assert report.top_evidence


def test_classify_deterministic_across_runs(capsys, bundle_dir, kb_path, xray):
    argv = ["classify", xray, "--bundle", str(bundle_dir), "--kb", kb_path,
            "--format", "json"]
    code_a, out_a, _ = run(argv, capsys)
    code_b, out_b, _ = run(argv, capsys)
    assert code_a == code_b == 0
    assert out_a == out_b


def test_classify_corrupt_image_exits_1(tmp_path, capsys, bundle_dir, kb_path):
    bad = tmp_path / "broken.png"
    bad.write_bytes(b"definitely not a png")
    code, _, stderr = run(
        ["classify", str(bad), "--bundle", str(bundle_dir), "--kb", kb_path],
        capsys,
    )
    assert code == 1
    assert "decode" in stderr.lower()


def test_classify_kb_bundle_mismatch_exits_3(
    tmp_path, capsys, bundle_dir, kb_path, xray
):
    kb = load_kb(kb_path).with_fingerprint("f" * 64)
    from symdx.knowledge import save_kb

    pinned = tmp_path / "pinned.json"
    save_kb(kb, pinned)
    code, _, stderr = run(
        ["classify", xray, "--bundle", str(bundle_dir), "--kb", str(pinned)],
        capsys,
    )
    assert code == 3
    assert "encoder" in stderr


def test_classify_writes_figure(tmp_path, capsys, bundle_dir, kb_path, xray):
    figure = tmp_path / "case.png"
    code, _, _ = run(
        [
            "classify", xray,
            "--bundle", str(bundle_dir),
            "--kb", kb_path,
            "--figure", str(figure),
        ],
        capsys,
    )
    assert code == 0
    assert figure.is_file() and figure.stat().st_size > 0


# ---------------------------------------------------------------------------
# eval / sweep
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def labeled_manifest(tmp_path_factory, bundle, montgomery_kb):
    """Six synthetic images labeled by the pipeline itself, then two
    deliberately mislabeled: the expected accuracy is exactly 6/8."""
    tmp = tmp_path_factory.mktemp("evalset")
    rng = np.random.default_rng(5)
    entries = []
    predictions = []
    for i in range(8):
        arr = rng.integers(0, 256, size=(64, 48, 3), dtype=np.uint8)
        path = tmp / f"case_{i}.png"
        Image.fromarray(arr).save(path)
        predicted = classify_image(
            path, montgomery_kb, bundle, AggregationMode.MEAN
        ).predicted
        predictions.append(predicted)
        entries.append((str(path), predicted))
    flip = {"Normal lungs": "Tuberculosis", "Tuberculosis": "Normal lungs"}
    entries[0] = (entries[0][0], flip[entries[0][1]])
    entries[3] = (entries[3][0], flip[entries[3][1]])
    manifest = DatasetManifest(
        "selftest",
        ("Normal lungs", "Tuberculosis"),
        tuple(ManifestEntry(p, c) for p, c in entries),
    )
    path = tmp / "manifest.json"
    save_manifest(manifest, path)
    return path


def test_eval_accuracy_matches_hand_tally(
    capsys, bundle_dir, kb_path, labeled_manifest
):
    code, stdout, _ = run(
        [
            "eval",
            "--manifest", str(labeled_manifest),
            "--bundle", str(bundle_dir),
            "--kb", kb_path,
            "--format", "json",
        ],
        capsys,
    )
    assert code == 0
    result = json.loads(stdout)
    assert result["total"] == 8
    assert result["correct"] == 6
    assert result["accuracy_pct"] == 75.0


def test_eval_baseline_flag_prints_gain(
    capsys, bundle_dir, kb_path, labeled_manifest
):
    code, stdout, _ = run(
        [
            "eval",
            "--manifest", str(labeled_manifest),
            "--bundle", str(bundle_dir),
            "--kb", kb_path,
            "--baseline",
        ],
        capsys,
    )
    assert code == 0
    assert "category-name baseline" in stdout
    assert "gain" in stdout
    gain_line = [l for l in stdout.splitlines() if "gain" in l][-1]
    assert "+" in gain_line or "-" in gain_line


def test_eval_class_mismatch_exits_4(
    tmp_path, capsys, bundle_dir, fixtures_dir, labeled_manifest
):
    code, _, stderr = run(
        [
            "eval",
            "--manifest", str(labeled_manifest),
            "--bundle", str(bundle_dir),
            "--kb", str(fixtures_dir / "kb" / "idrid-designed.json"),
        ],
        capsys,
    )
    assert code == 4
    assert "classes" in stderr


def test_sweep_matches_individual_evals(
    tmp_path, capsys, bundle_dir, kb_path, fixtures_dir, labeled_manifest
):
    baseline_kb_path = str(fixtures_dir / "kb" / "montgomery-baseline.json")
    csv_out = tmp_path / "grid.csv"
    figure = tmp_path / "grid.png"
    code, stdout, _ = run(
        [
            "sweep",
            "--manifest", str(labeled_manifest),
            "--kb", kb_path,
            "--kb", baseline_kb_path,
            "--bundle", str(bundle_dir),
            "--modes", "mean,max",
            "--csv", str(csv_out),
            "--figure", str(figure),
        ],
        capsys,
    )
    assert code == 0
    assert figure.is_file()
    rows = list(csv.reader(csv_out.open()))
    assert rows[0][0] == "bundle" and rows[-1][0] == "best"
    grid_cells = {
        (header, value)
        for header, value in zip(rows[0][1:], rows[1][1:])
    }
    # cross-check one cell against a standalone eval run
    code, stdout, _ = run(
        [
            "eval",
            "--manifest", str(labeled_manifest),
            "--bundle", str(bundle_dir),
            "--kb", kb_path,
            "--mode", "mean",
            "--format", "json",
        ],
        capsys,
    )
    standalone = json.loads(stdout)["accuracy_pct"]
    assert ("montgomery-designed/mean", f"{standalone:.2f}") in grid_cells
    # best row is the column-wise max
    for col_idx in range(1, len(rows[0])):
        column = [float(r[col_idx]) for r in rows[1:-1] if r[col_idx]]
        assert float(rows[-1][col_idx]) == max(column)


# ---------------------------------------------------------------------------
# export-report
# ---------------------------------------------------------------------------

def test_export_report_round_trip(tmp_path, capsys, bundle_dir, kb_path, xray):
    report_path = tmp_path / "case.json"
    code, stdout, _ = run(
        [
            "classify", xray,
            "--bundle", str(bundle_dir),
            "--kb", kb_path,
            "--format", "json",
        ],
        capsys,
    )
    report_path.write_text(stdout)
    code, stdout, _ = run(
        ["export-report", str(report_path), "--format", "csv"], capsys
    )
    assert code == 0
    rows = list(csv.reader(io.StringIO(stdout)))
    assert rows[0] == ["image_id", "class", "symptom", "score", "predicted"]
    assert len(rows) == 1 + 14  # 7 symptoms per class, two classes

    figure = tmp_path / "fig.png"
    code, _, _ = run(
        ["export-report", str(report_path), "--figure", str(figure)], capsys
    )
    assert code == 0 and figure.is_file()


# ---------------------------------------------------------------------------
# presets, config precedence, idempotence
# ---------------------------------------------------------------------------

def test_eval_preset_scans_data_root(tmp_path, capsys, bundle_dir, kb_path):
    rng = np.random.default_rng(9)
    cxr = tmp_path / "CXR_png"
    cxr.mkdir()
    for i, suffix in enumerate([0, 0, 1]):
        arr = rng.integers(0, 256, size=(40, 40), dtype=np.uint8)
        Image.fromarray(arr, mode="L").save(cxr / f"MCUCXR_{i:04d}_{suffix}.png")
    code, stdout, _ = run(
        [
            "eval",
            "--preset", "montgomery",
            "--data-root", str(tmp_path),
            "--bundle", str(bundle_dir),
            "--kb", kb_path,
            "--format", "json",
        ],
        capsys,
    )
    assert code == 0
    assert json.loads(stdout)["total"] == 3


def test_config_precedence_flag_over_file_over_env(
    tmp_path, capsys, monkeypatch, bundle_dir, kb_path, xray
):
    config = tmp_path / "conf.json"
    config.write_text(json.dumps({"kb": kb_path, "format": "json"}))
    monkeypatch.setenv("SYMDX_BUNDLE", str(bundle_dir))  # env supplies bundle
    monkeypatch.setenv("SYMDX_FORMAT", "csv")  # file overrides env
    code, stdout, _ = run(["classify", xray, "--config", str(config)], capsys)
    assert code == 0
    json.loads(stdout)  # file-level json format won over env csv

    # flag overrides file
    code, stdout, _ = run(
        ["classify", xray, "--config", str(config), "--format", "csv"], capsys
    )
    assert code == 0
    assert stdout.startswith("image_id,class,symptom")


def test_generate_kb_rerun_byte_identical(tmp_path, capsys, fixtures_dir, cache_dir):
    argv = [
        "generate-kb",
        "--categories", str(fixtures_dir / "categories" / "montgomery.txt"),
        "--cache-dir", cache_dir,
        "--kb-id", "repeat",
    ]
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run([*argv, "--out", str(a)], capsys)[0] == 0
    assert run([*argv, "--out", str(b)], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_eval_strict_flag_accepted(capsys, bundle_dir, kb_path, labeled_manifest):
    code, stdout, _ = run(
        [
            "eval",
            "--manifest", str(labeled_manifest),
            "--bundle", str(bundle_dir),
            "--kb", kb_path,
            "--strict",
            "--format", "json",
        ],
        capsys,
    )
    assert code == 0
    assert json.loads(stdout)["config"]["strict"] is True
