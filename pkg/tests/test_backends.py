"""Compiled kernels vs pure-numpy fallback: same bits, different speed."""
import numpy as np
import pytest

from gvlm import engine
from gvlm.engine import backend_numpy
from gvlm.model import LmConfig
from gvlm.training import train

try:
    from gvlm.engine import backend_ext
except ImportError:
    backend_ext = None

needs_ext = pytest.mark.skipif(backend_ext is None, reason="compiled kernels not built")


@needs_ext
@pytest.mark.parametrize("dtype", [np.float32, np.float64])
class TestKernelParity:
    def test_matmul2(self, dtype, rng):
        a = (rng.standard_normal((33, 17)) * 7).astype(dtype)
        b = (rng.standard_normal((17, 29)) * 3).astype(dtype)
        assert backend_ext.matmul2(a, b).tobytes() == backend_numpy.matmul2(a, b).tobytes()

    def test_matmul3(self, dtype, rng):
        a = rng.standard_normal((5, 8, 13)).astype(dtype)
        b = rng.standard_normal((5, 13, 7)).astype(dtype)
        assert backend_ext.matmul3(a, b).tobytes() == backend_numpy.matmul3(a, b).tobytes()

    def test_matmul_tn(self, dtype, rng):
        a = rng.standard_normal((21, 6)).astype(dtype)
        g = rng.standard_normal((21, 11)).astype(dtype)
        assert backend_ext.matmul2_tn(a, g).tobytes() == backend_numpy.matmul2_tn(a, g).tobytes()
        a3 = rng.standard_normal((4, 9, 5)).astype(dtype)
        g3 = rng.standard_normal((4, 9, 8)).astype(dtype)
        assert backend_ext.matmul3_tn(a3, g3).tobytes() == backend_numpy.matmul3_tn(a3, g3).tobytes()

    def test_reductions(self, dtype, rng):
        a = (rng.standard_normal((19, 257)) * 100).astype(dtype)
        assert backend_ext.rowsum(a).tobytes() == backend_numpy.rowsum(a).tobytes()
        assert backend_ext.colsum(a).tobytes() == backend_numpy.colsum(a).tobytes()
        flat = np.ascontiguousarray(a.reshape(-1))
        assert backend_ext.vecsum(flat) == backend_numpy.vecsum(flat)

    def test_scatter_add(self, dtype, rng):
        idx = rng.integers(0, 6, size=40)
        src = rng.standard_normal((40, 3)).astype(dtype)
        out_a = np.zeros((6, 3), dtype=dtype)
        out_b = np.zeros((6, 3), dtype=dtype)
        backend_ext.scatter_add_rows(out_a, idx, src)
        backend_numpy.scatter_add_rows(out_b, idx, src)
        assert out_a.tobytes() == out_b.tobytes()


@needs_ext
def test_training_loss_trace_is_backend_independent(rng):
    """Whole training steps produce bit-identical traces on either backend."""
    ids = rng.integers(0, 64, size=600)
    config = LmConfig(d=16, n_layers=1, n_heads=2, seq_len=32, vocab=64, head_kind="grouped")

    def run():
        result = train(config, ids, steps=3, seed=5, batch_size=2)
        return [(r.loss, r.loss_group, r.loss_token) for r in result.trace]

    engine.use_backend("ext")
    trace_ext = run()
    engine.use_backend("numpy")
    trace_np = run()
    assert trace_ext == trace_np


def test_matmul_zero_inner_extent():
    a = engine.tensor(np.ones((3, 0)))
    b = engine.tensor(np.ones((0, 4)))
    assert np.array_equal(engine.matmul(a, b).data, np.zeros((3, 4)))


def test_backend_name_and_forcing():
    assert engine.backend_name() in ("ext", "numpy")
    engine.use_backend("numpy")
    assert engine.backend_name() == "numpy"
