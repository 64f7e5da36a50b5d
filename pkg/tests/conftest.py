import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gvlm import bpe, engine

REPO_ROOT = Path(__file__).parent.parent
CORPUS_PATH = REPO_ROOT / "data" / "corpus.txt"


def pytest_collection_modifyitems(items):
    """Run the acceptance gate after the fast suites."""
    items.sort(key=lambda item: item.fspath.basename == "test_acceptance.py")


@pytest.fixture(autouse=True)
def _restore_engine_state():
    dtype = engine.dtype_name()
    backend = engine.backend_name()
    yield
    engine.set_dtype(dtype)
    if engine.backend_name() != backend:
        engine.use_backend(backend)


@pytest.fixture
def fp64():
    with engine.using_dtype("fp64"):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def corpus_bytes() -> bytes:
    return CORPUS_PATH.read_bytes()


@pytest.fixture(scope="session")
def bpe_table(corpus_bytes):
    return bpe.train_bpe(corpus_bytes, 1024)


@pytest.fixture(scope="session")
def corpus_ids(corpus_bytes, bpe_table) -> np.ndarray:
    return np.asarray(bpe.encode(corpus_bytes, bpe_table), dtype=np.int64)
