"""Shared fixtures: bundled catalog, pretraining corpus."""

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from molmedrec.data import load_catalog
from molmedrec.pretrain import build_corpus


def bundled_asset(name: str) -> str:
    from importlib import resources
    return str(resources.files("molmedrec") / "assets" / name)


@pytest.fixture(scope="session")
def catalog():
    return load_catalog(bundled_asset("catalog.tsv"), bundled_asset("molecules.sdf"))


@pytest.fixture(scope="session")
def corpus(catalog):
    return build_corpus(catalog)
