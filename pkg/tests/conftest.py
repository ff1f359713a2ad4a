from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def gold_repo_dir() -> Path:
    return FIXTURES / "gold_skeleton" / "repo"
