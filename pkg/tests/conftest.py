import json
from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parent.parent
BUNDLE_DIR = REPO_ROOT / "assets" / "test-vit32"
FIXTURES_DIR = REPO_ROOT / "fixtures"


@pytest.fixture(scope="session")
def bundle_dir() -> Path:
    if not (BUNDLE_DIR / "manifest.json").is_file():
        pytest.fail(f"committed encoder bundle missing at {BUNDLE_DIR}")
    return BUNDLE_DIR


@pytest.fixture(scope="session")
def bundle(bundle_dir):
    from symdx.encoders.bundle import load_bundle

    return load_bundle(bundle_dir / "manifest.json")


@pytest.fixture(scope="session")
def goldens(bundle_dir) -> dict:
    return json.loads((bundle_dir / "goldens" / "goldens.json").read_text("utf-8"))


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES_DIR


@pytest.fixture(scope="session")
def montgomery_kb():
    from symdx.knowledge import load_kb

    return load_kb(FIXTURES_DIR / "kb" / "montgomery-designed.json")
