"""Pytest configuration and fixtures."""

import tempfile
from pathlib import Path

import pytest

from orthobell import db
from orthobell.core import Lab
from orthobell.types import Config, ConjugatePair

SEED = 20240601


@pytest.fixture(autouse=True)
def isolated_dirs(tmp_path, monkeypatch):
    """Keep tests away from the real XDG config/data dirs and ORTHOBELL_* settings."""
    monkeypatch.setenv("XDG_CONFIG_HOME", str(tmp_path / "xdg-config"))
    monkeypatch.setenv("XDG_DATA_HOME", str(tmp_path / "xdg-data"))
    for name in ("SEED", "WORKERS", "OUTPUT_DIR"):
        monkeypatch.delenv(f"ORTHOBELL_{name}", raising=False)
    return tmp_path


@pytest.fixture
def test_db():
    """Create a temporary run registry."""
    temp_db = tempfile.NamedTemporaryFile(suffix=".db", delete=False)
    temp_db.close()

    db.init_db(temp_db.name)

    yield temp_db.name

    db.close_db()
    Path(temp_db.name).unlink(missing_ok=True)


@pytest.fixture
def output_dir(tmp_path):
    path = tmp_path / "out"
    path.mkdir()
    return path


@pytest.fixture
def lab(test_db, output_dir):
    """Lab writing into a temporary directory and recording into the temporary registry."""
    return Lab(Config(output_dir=str(output_dir)), output_dir=output_dir, record=True)


@pytest.fixture
def seed():
    return SEED


@pytest.fixture(params=[2.0, 2.2, 3.0, 4.0, 6.0], ids=lambda p: f"p={p:g}")
def pair(request):
    return ConjugatePair.from_p(request.param)


@pytest.fixture
def pair3():
    return ConjugatePair.from_p(3.0)
