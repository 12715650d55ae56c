import json
from pathlib import Path

import pytest

from kcl.corpus import load_dataset
from kcl.synthetic import SyntheticSpec, make_dataset

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixture_root():
    return FIXTURES / "corpus"


@pytest.fixture
def fixture_dataset(fixture_root):
    return load_dataset(fixture_root)


@pytest.fixture
def manifest():
    return json.loads((FIXTURES / "corpus_manifest.json").read_text())


@pytest.fixture(scope="session")
def small_synthetic():
    return make_dataset(0, SyntheticSpec(n_train=40, n_test=20, n_unlabeled=10))
