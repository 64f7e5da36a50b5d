"""Wrapper around the compiled kernel module.

Raises ImportError at import time if the extension was not built; the
engine then falls back to :mod:`gvlm.engine.backend_numpy`.
"""
import numpy as np

from . import _kernels

name = "ext"


def matmul2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.empty((a.shape[0], b.shape[1]), dtype=a.dtype)
    _kernels.matmul2(a, b, out)
    return out


def matmul3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.empty((a.shape[0], a.shape[1], b.shape[2]), dtype=a.dtype)
    _kernels.matmul3(a, b, out)
    return out


def matmul2_tn(a: np.ndarray, g: np.ndarray) -> np.ndarray:
    out = np.empty((a.shape[1], g.shape[1]), dtype=a.dtype)
    _kernels.matmul2_tn(a, g, out)
    return out


def matmul3_tn(a: np.ndarray, g: np.ndarray) -> np.ndarray:
    out = np.empty((a.shape[0], a.shape[2], g.shape[2]), dtype=a.dtype)
    _kernels.matmul3_tn(a, g, out)
    return out


def rowsum(a: np.ndarray) -> np.ndarray:
    out = np.empty(a.shape[0], dtype=a.dtype)
    _kernels.rowsum(a, out)
    return out


def colsum(a: np.ndarray) -> np.ndarray:
    out = np.empty(a.shape[1], dtype=a.dtype)
    work = np.empty(a.shape[1], dtype=np.float64)
    _kernels.colsum(a, work, out)
    return out


def vecsum(a: np.ndarray):
    return a.dtype.type(_kernels.vecsum(a))


def scatter_add_rows(out: np.ndarray, idx: np.ndarray, src: np.ndarray) -> None:
    _kernels.scatter_add_rows(out, np.ascontiguousarray(idx, dtype=np.int64), src)
