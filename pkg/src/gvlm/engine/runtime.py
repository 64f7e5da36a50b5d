"""Process-wide engine state: precision, backend, grad mode, alloc hook.

Precision is a run-level switch (fp32 for training, fp64 for verification),
never a per-tensor attribute. The backend is chosen once at import (the
compiled kernels when available, the numpy fallback otherwise) and can be
overridden with the ``GVLM_BACKEND`` environment variable or swapped at
runtime for benchmarking. Both backends implement the same fixed
ascending-index summation order, so swapping never changes results.
"""
import contextlib
import os

import numpy as np

from ..errors import ConfigError

_DTYPES = {"fp32": np.float32, "fp64": np.float64}

_dtype_name = "fp32"
_grad_enabled = True
_alloc_hook = None  # set by the element meter while measuring


def _load_backend(forced: str | None):
    from . import backend_numpy

    if forced == "numpy":
        return backend_numpy
    try:
        from . import backend_ext

        return backend_ext
    except ImportError:
        if forced == "ext":
            raise ConfigError("GVLM_BACKEND=ext but the compiled kernels are not built")
        return backend_numpy


backend = _load_backend(os.environ.get("GVLM_BACKEND"))


def backend_name() -> str:
    return backend.name


def use_backend(which: str) -> None:
    """Swap the kernel backend ('ext' or 'numpy'). Not thread-safe."""
    global backend
    if which not in ("ext", "numpy"):
        raise ConfigError(f"unknown backend {which!r}")
    backend = _load_backend(which)
    if backend.name != which:
        raise ConfigError("compiled kernels are not available")


def set_dtype(name: str) -> None:
    global _dtype_name
    if name not in _DTYPES:
        raise ConfigError(f"dtype must be fp32 or fp64, got {name!r}")
    _dtype_name = name


def dtype_name() -> str:
    return _dtype_name


def active_dtype():
    return _DTYPES[_dtype_name]


@contextlib.contextmanager
def using_dtype(name: str):
    prev = _dtype_name
    set_dtype(name)
    try:
        yield
    finally:
        set_dtype(prev)


def grad_enabled() -> bool:
    return _grad_enabled


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def set_alloc_hook(hook) -> None:
    global _alloc_hook
    _alloc_hook = hook


def alloc_hook():
    return _alloc_hook
