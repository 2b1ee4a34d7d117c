import pytest

from pathlib import Path

from claimgate.backends import StubBackend
from claimgate.data import load_split
from claimgate.retrieval import build_index

FIXTURES = Path(__file__).parent / "fixtures"
GOLDENS = Path(__file__).parent / "goldens"

SPLIT_PATH = FIXTURES / "split_mini.jsonl"
CORPUS_PATH = FIXTURES / "corpus_toy.jsonl"


@pytest.fixture(scope="session")
def stub():
    return StubBackend()


@pytest.fixture(scope="session")
def split():
    return load_split(SPLIT_PATH)


@pytest.fixture(scope="session")
def toy_index():
    return build_index(CORPUS_PATH)
