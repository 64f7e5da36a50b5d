"""Pure-numpy backend with the same ascending-summation contract as the
compiled kernels.

`np.cumsum` is a strict sequential left-to-right accumulation and
`np.add.at` applies updates in index order, so every function here is
bit-identical to its compiled counterpart (verified by tests). The only
cost is speed: matmul runs a Python loop over the inner dimension.
"""
import numpy as np

name = "numpy"


def matmul2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n), dtype=a.dtype)
    for p in range(k):
        out += a[:, p : p + 1] * b[p]
    return out


def matmul3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    nb, m, k = a.shape
    n = b.shape[2]
    out = np.zeros((nb, m, n), dtype=a.dtype)
    for p in range(k):
        out += a[:, :, p : p + 1] * b[:, p : p + 1, :]
    return out


def matmul2_tn(a: np.ndarray, g: np.ndarray) -> np.ndarray:
    r = a.shape[0]
    out = np.zeros((a.shape[1], g.shape[1]), dtype=a.dtype)
    for p in range(r):
        out += a[p][:, None] * g[p]
    return out


def matmul3_tn(a: np.ndarray, g: np.ndarray) -> np.ndarray:
    r = a.shape[1]
    out = np.zeros((a.shape[0], a.shape[2], g.shape[2]), dtype=a.dtype)
    for p in range(r):
        out += a[:, p, :, None] * g[:, p, None, :]
    return out


def rowsum(a: np.ndarray) -> np.ndarray:
    """Ascending-order row sums with a double accumulator (cumsum is a strict
    sequential scan, so this matches the compiled kernel bit-for-bit)."""
    if a.shape[1] == 0:
        return np.zeros(a.shape[0], dtype=a.dtype)
    return np.cumsum(a, axis=1, dtype=np.float64)[:, -1].astype(a.dtype)


def colsum(a: np.ndarray) -> np.ndarray:
    if a.shape[0] == 0:
        return np.zeros(a.shape[1], dtype=a.dtype)
    return np.cumsum(a, axis=0, dtype=np.float64)[-1].astype(a.dtype)


def vecsum(a: np.ndarray):
    if a.size == 0:
        return a.dtype.type(0)
    return a.dtype.type(np.cumsum(a, dtype=np.float64)[-1])


def scatter_add_rows(out: np.ndarray, idx: np.ndarray, src: np.ndarray) -> None:
    np.add.at(out, idx, src)
