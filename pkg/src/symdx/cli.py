"""Command-line interface.

Commands: ``generate-kb``, ``classify``, ``eval``, ``sweep``,
``export-report``.  Exit codes are stable API: 0 ok, 1 I/O or backend
failure, 2 LLM failure, 3 configuration mismatch, 4 manifest/KB class
mismatch.  Option precedence is CLI flag > config file > environment
variable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .datasets import PRESET_BUILDERS, PRESET_CATEGORIES
from .encoders.bundle import load_bundle
from .errors import (
    ConfigMismatchError,
    EmptyResponseError,
    KnowledgeBaseError,
    ManifestError,
    SymdxError,
    SymptomParseError,
    TransportError,
)
from .evaluate import compare, evaluate, sweep
from .knowledge import (
    TEMPLATES,
    PromptVariant,
    build_kb,
    category_name_kb,
    load_kb,
    save_kb,
)
from .llm import LlmConfig, ResponseCache
from .manifest import load_manifest
from .pipeline import classify_image
from .report import build_case_report, case_report_from_dict, export_report
from .scoring import AggregationMode

EXIT_OK = 0
EXIT_IO = 1
EXIT_LLM = 2
EXIT_CONFIG = 3
EXIT_MANIFEST = 4


def _exit_code(exc: Exception) -> int:
    if isinstance(
        exc, (TransportError, EmptyResponseError, KnowledgeBaseError, SymptomParseError)
    ):
        return EXIT_LLM
    if isinstance(exc, ConfigMismatchError):
        return EXIT_CONFIG
    if isinstance(exc, ManifestError):
        return EXIT_MANIFEST
    return EXIT_IO


class Settings:
    """Layered option lookup: CLI flag > config file > environment."""

    def __init__(self, args: argparse.Namespace):
        self.args = vars(args)
        self.file_config = {}
        config_path = self.args.get("config") or os.environ.get("SYMDX_CONFIG")
        if config_path:
            self.file_config = json.loads(Path(config_path).read_text("utf-8"))

    def get(self, name: str, default=None):
        value = self.args.get(name)
        if value is not None:
            return value
        if name in self.file_config:
            return self.file_config[name]
        env = os.environ.get(f"SYMDX_{name.upper()}")
        if env is not None:
            return env
        return default

    def require(self, name: str):
        value = self.get(name)
        if value is None:
            raise ConfigMismatchError(
                f"missing required option --{name.replace('_', '-')} "
                f"(or config key / SYMDX_{name.upper()})"
            )
        return value


def _mode(settings: Settings) -> AggregationMode:
    return AggregationMode.parse(str(settings.get("mode", "mean")))


def _strict(settings: Settings) -> bool:
    # an explicit --strict wins over --no-strict; strict is the default
    if settings.get("strict_flag"):
        return True
    return not bool(settings.get("no_strict", False))


def _workers(settings: Settings) -> int:
    workers = int(settings.get("workers", 1))
    if workers < 1:
        raise ConfigMismatchError("worker count must be >= 1")
    return workers


def _read_categories(settings: Settings) -> list[str]:
    preset = settings.get("preset")
    if preset:
        if preset not in PRESET_CATEGORIES:
            raise ConfigMismatchError(
                f"unknown preset {preset!r}; choices: {', '.join(PRESET_CATEGORIES)}"
            )
        return list(PRESET_CATEGORIES[preset])
    path = settings.require("categories")
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    categories = [line.strip() for line in lines if line.strip()]
    if not categories:
        raise KnowledgeBaseError(f"categories file {path} is empty")
    return categories


def cmd_generate_kb(settings: Settings) -> int:
    categories = _read_categories(settings)
    variant = PromptVariant(str(settings.get("variant", "designed")).lower())
    template = TEMPLATES[variant]
    cfg = LlmConfig(
        endpoint=settings.get("llm_endpoint", LlmConfig.endpoint),
        model=settings.get("llm_model", LlmConfig.model),
        temperature=float(settings.get("temperature", 0.0)),
    )
    cache_dir = settings.get("cache_dir")
    cache = ResponseCache(cache_dir) if cache_dir else None
    kb = build_kb(
        categories,
        template,
        cfg,
        cache=cache,
        kb_id=settings.get("kb_id"),
        dataset_id=settings.get("dataset_id"),
    )
    out = settings.require("out")
    save_kb(kb, out)
    print(f"wrote {out} ({len(kb.classes)} classes, prompt variant {variant.value})")
    for descriptor in kb.classes:
        print(f"  {descriptor.class_id}: {len(descriptor.symptoms)} symptoms")
    return EXIT_OK


def cmd_classify(settings: Settings) -> int:
    bundle = load_bundle(settings.require("bundle"))
    kb = load_kb(settings.require("kb"))
    image_path = settings.require("image")
    mode = _mode(settings)
    score_report = classify_image(
        image_path, kb, bundle, mode, wrapper=settings.get("text_template")
    )
    case = build_case_report(
        score_report,
        image_id=str(image_path),
        config={
            "bundle": bundle.name,
            "bundle_fingerprint": bundle.fingerprint,
            "kb_id": kb.kb_id,
            "aggregation": mode.value,
        },
    )
    fmt = str(settings.get("format", "text"))
    sys.stdout.write(export_report(case, fmt).decode("utf-8"))
    figure = settings.get("figure")
    if figure:
        from .figures import render_case_report

        render_case_report(case, figure)
        print(f"figure written to {figure}", file=sys.stderr)
    return EXIT_OK


def _load_eval_manifest(settings: Settings):
    preset = settings.get("preset")
    if preset:
        if preset not in PRESET_BUILDERS:
            raise ConfigMismatchError(
                f"unknown preset {preset!r}; choices: {', '.join(PRESET_BUILDERS)}"
            )
        return PRESET_BUILDERS[preset](settings.require("data_root"))
    return load_manifest(settings.require("manifest"))


def _emit_result(result, settings: Settings, label: str = "") -> None:
    fmt = str(settings.get("format", "text"))
    if fmt == "json":
        print(json.dumps(result.to_dict(), indent=2))
    elif fmt == "csv":
        print("dataset,kb,bundle,aggregation,accuracy_pct,correct,total")
        cfg = result.config
        print(
            f"{result.dataset_id},{cfg.get('kb_id')},{cfg.get('bundle')},"
            f"{cfg.get('aggregation')},{result.accuracy_pct:.2f},"
            f"{result.correct},{result.total}"
        )
    else:
        if label:
            print(f"== {label} ==")
        print(result.format_table(), end="")


def cmd_eval(settings: Settings) -> int:
    manifest = _load_eval_manifest(settings)
    bundle = load_bundle(settings.require("bundle"))
    kb = load_kb(settings.require("kb"))
    mode = _mode(settings)
    strict = _strict(settings)
    result = evaluate(
        manifest,
        kb,
        bundle,
        mode,
        strict=strict,
        workers=_workers(settings),
        wrapper=settings.get("text_template"),
    )
    _emit_result(result, settings, label="symptom knowledge base")
    out = settings.get("out")
    if out:
        Path(out).write_text(json.dumps(result.to_dict(), indent=2) + "\n", "utf-8")
    if settings.get("baseline"):
        baseline_kb = category_name_kb(list(manifest.classes))
        baseline = evaluate(
            manifest,
            baseline_kb,
            bundle,
            mode,
            strict=strict,
            workers=_workers(settings),
        )
        _emit_result(baseline, settings, label="category-name baseline")
        print(compare(result, baseline).format_row())
    return EXIT_OK


def cmd_sweep(settings: Settings) -> int:
    manifest = _load_eval_manifest(settings)
    kb_paths = settings.require("kb")
    bundle_paths = settings.require("bundle")
    kbs = [load_kb(p) for p in kb_paths]
    bundles = [load_bundle(p) for p in bundle_paths]
    mode_names = str(settings.get("modes", "mean,max")).split(",")
    modes = [AggregationMode.parse(m) for m in mode_names if m]
    grid = sweep(
        manifest,
        kbs,
        bundles,
        modes,
        strict=_strict(settings),
        workers=_workers(settings),
        cache_dir=settings.get("cache_dir"),
    )
    print(grid.format_table(), end="")
    csv_out = settings.get("csv")
    if csv_out:
        import csv as csv_mod

        with open(csv_out, "w", newline="", encoding="utf-8") as f:
            csv_mod.writer(f, lineterminator="\n").writerows(grid.to_csv_rows())
        print(f"csv written to {csv_out}", file=sys.stderr)
    figure = settings.get("figure")
    if figure:
        from .figures import render_sweep_grid

        render_sweep_grid(grid, figure)
        print(f"figure written to {figure}", file=sys.stderr)
    failures = [c for c in grid.cells if c.error]
    for cell in failures:
        print(
            f"cell ({cell.kb_id}, {cell.bundle_name}, {cell.mode.value}) "
            f"failed: {cell.error}",
            file=sys.stderr,
        )
    return EXIT_OK


def cmd_export_report(settings: Settings) -> int:
    doc = json.loads(Path(settings.require("report")).read_text("utf-8"))
    case = case_report_from_dict(doc)
    fmt = str(settings.get("format", "text"))
    payload = export_report(case, fmt)
    out = settings.get("out")
    if out:
        Path(out).write_bytes(payload)
    else:
        sys.stdout.write(payload.decode("utf-8"))
    figure = settings.get("figure")
    if figure:
        from .figures import render_case_report

        render_case_report(case, figure)
        print(f"figure written to {figure}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="symdx",
        description=(
            "Zero-shot image diagnosis: classify images against LLM-generated "
            "per-class symptom descriptions and explain the result per symptom."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file (flag > file > env)")
        p.add_argument("--format", choices=["json", "csv", "text"], default=None)

    p = sub.add_parser("generate-kb", help="query the LLM and write a knowledge base")
    common(p)
    p.add_argument("--categories", help="file with one category per line")
    p.add_argument("--preset", help="dataset preset for the category list")
    p.add_argument("--variant", choices=["designed", "baseline"], default=None)
    p.add_argument("--out", help="output KB JSON path")
    p.add_argument("--kb-id", dest="kb_id")
    p.add_argument("--dataset-id", dest="dataset_id")
    p.add_argument("--cache-dir", dest="cache_dir", help="LLM response cache")
    p.add_argument("--llm-endpoint", dest="llm_endpoint")
    p.add_argument("--llm-model", dest="llm_model")
    p.add_argument("--temperature", type=float, default=None)
    p.set_defaults(handler=cmd_generate_kb)

    p = sub.add_parser("classify", help="diagnose a single image")
    common(p)
    p.add_argument("image", help="image file to classify")
    p.add_argument("--bundle", help="encoder bundle manifest (or its directory)")
    p.add_argument("--kb", help="knowledge base JSON")
    p.add_argument("--mode", choices=["mean", "max"], default=None)
    p.add_argument("--text-template", dest="text_template")
    p.add_argument("--figure", help="also render the score breakdown to this file")
    p.set_defaults(handler=cmd_classify)

    p = sub.add_parser("eval", help="evaluate a labeled manifest")
    common(p)
    p.add_argument("--manifest", help="manifest JSON/CSV path")
    p.add_argument("--preset", help="dataset preset (scans --data-root)")
    p.add_argument("--data-root", dest="data_root")
    p.add_argument("--bundle")
    p.add_argument("--kb")
    p.add_argument("--mode", choices=["mean", "max"], default=None)
    p.add_argument("--baseline", action="store_true", default=None,
                   help="also run the category-name KB and print the gain")
    p.add_argument("--strict", dest="strict_flag", action="store_true", default=None,
                   help="abort on unreadable images (the default)")
    p.add_argument("--no-strict", dest="no_strict", action="store_true", default=None,
                   help="skip unreadable images instead of aborting")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", help="write the result JSON here")
    p.add_argument("--text-template", dest="text_template")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("sweep", help="evaluate a grid of KBs/bundles/modes")
    common(p)
    p.add_argument("--manifest")
    p.add_argument("--preset")
    p.add_argument("--data-root", dest="data_root")
    p.add_argument("--kb", action="append", help="repeatable")
    p.add_argument("--bundle", action="append", help="repeatable")
    p.add_argument("--modes", default=None, help="comma-separated: mean,max")
    p.add_argument("--strict", dest="strict_flag", action="store_true", default=None)
    p.add_argument("--no-strict", dest="no_strict", action="store_true", default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--cache-dir", dest="cache_dir", help="image embedding cache")
    p.add_argument("--csv", help="write the grid as CSV here")
    p.add_argument("--figure", help="render the grid as a bar chart here")
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("export-report", help="re-render a saved case report")
    common(p)
    p.add_argument("report", help="case report JSON file")
    p.add_argument("--out", help="write instead of printing")
    p.add_argument("--figure", help="also render the bar-chart figure")
    p.set_defaults(handler=cmd_export_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = Settings(args)
        return args.handler(settings)
    except SymdxError as e:
        print(f"error: {e}", file=sys.stderr)
        return _exit_code(e)
    except (OSError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
