from pathlib import Path

import pytest

from focusmodel.events import default_action_table
from focusmodel.ontology import load_hierarchy

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def table():
    return default_action_table()


@pytest.fixture(scope="session")
def lexicon():
    return load_hierarchy(FIXTURES / "lexicon.jsonl")
