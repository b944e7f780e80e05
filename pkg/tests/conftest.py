import json
from pathlib import Path

import pytest

from crowdpos import (
    load_bank,
    load_mapping,
    load_wordlists,
    parse_corpus_file,
)
from crowdpos.qc import load_test_questions
from crowdpos.tags import UniversalTag

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def corpus_tokens():
    return parse_corpus_file(FIXTURES / "corpus.tsv")


@pytest.fixture(scope="session")
def wordlists():
    return load_wordlists(FIXTURES / "lists")


@pytest.fixture(scope="session")
def bank():
    return load_bank(FIXTURES / "bank")


@pytest.fixture(scope="session")
def mapping_table():
    return load_mapping(FIXTURES / "mapping.json")


@pytest.fixture(scope="session")
def test_questions():
    return load_test_questions(FIXTURES / "test_questions.json")


@pytest.fixture(scope="session")
def golds():
    doc = json.loads((FIXTURES / "golds.json").read_text(encoding="utf-8"))
    return {k: UniversalTag(v) for k, v in doc.items()}


@pytest.fixture(scope="session")
def tokens_by_id(corpus_tokens):
    return {t.token_id: t for t in corpus_tokens}
