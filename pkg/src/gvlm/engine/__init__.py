"""Tensor engine: deterministic numerics behind one import point."""
from .runtime import (
    backend_name,
    use_backend,
    set_dtype,
    dtype_name,
    active_dtype,
    using_dtype,
    no_grad,
    grad_enabled,
)
from .tensor import (
    Tensor,
    tensor,
    zeros,
    ones,
    zero_grads,
    matmul,
    add,
    mul,
    concat,
    narrow,
    reshape,
    transpose,
    gather_rows,
    softmax,
    cross_entropy,
    layer_norm,
    gelu,
    relu,
    sum_all,
    backward,
    set_finite_checks,
)
from .serialize import write_tensor, read_tensor, save_container, load_container

__all__ = [
    "Tensor", "tensor", "zeros", "ones", "zero_grads",
    "matmul", "add", "mul", "concat", "narrow", "reshape", "transpose",
    "gather_rows", "softmax", "cross_entropy", "layer_norm", "gelu", "relu",
    "sum_all", "backward", "set_finite_checks",
    "backend_name", "use_backend", "set_dtype", "dtype_name", "active_dtype",
    "using_dtype", "no_grad", "grad_enabled",
    "write_tensor", "read_tensor", "save_container", "load_container",
]
