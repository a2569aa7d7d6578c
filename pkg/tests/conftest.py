import os

# Single-threaded BLAS keeps runs bit-reproducible regardless of host cores.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

from pathlib import Path

import numpy as np
import pytest

from pathforge.corpus import build_grid_corpus, build_sequential_corpus
from pathforge.embeddings import SyntheticStore

REPO_ROOT = Path(__file__).resolve().parent.parent
CACHE_DIR = REPO_ROOT / ".pathforge_data"

# Heavy experiment runs are cached here so repeated pytest invocations reuse
# them; delete the directory for a cold run.
os.environ.setdefault("PATHFORGE_DATA_DIR", str(CACHE_DIR))


@pytest.fixture(scope="session")
def store():
    return SyntheticStore(dim=100)


@pytest.fixture(scope="session")
def small_store():
    return SyntheticStore(dim=10)


def make_chain(n: int, store, dim_tokens: int = 3):
    """Chain corpus with overlapping keyword windows over a small pool."""
    kw = [[f"t{j}" for j in range(i, i + dim_tokens)] for i in range(n)]
    return build_sequential_corpus(kw, store, name=f"chain{n}")


@pytest.fixture(scope="session")
def chain5(store):
    return make_chain(5, store)


@pytest.fixture(scope="session")
def grid(store):
    return build_grid_corpus(store)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
