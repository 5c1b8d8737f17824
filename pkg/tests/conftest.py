import os
import sys

import numpy as np
import pytest

# make tests/oracles.py importable under --import-mode=importlib
sys.path.insert(0, os.path.dirname(__file__))

from amsdtree.cli import bundled_manifest_path  # noqa: E402
from amsdtree.data import load_dataset, load_manifest  # noqa: E402


@pytest.fixture(scope="session")
def toy():
    return load_dataset(load_manifest(bundled_manifest_path()))


@pytest.fixture(scope="session")
def toy_csv():
    return os.path.join(os.path.dirname(bundled_manifest_path()), "toy.csv")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
