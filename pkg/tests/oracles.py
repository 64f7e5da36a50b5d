"""Independent reference implementations the tests check against.

These deliberately avoid the engine's code paths: scalar Python loops,
brute-force constructions, and central finite differences.
"""
import numpy as np

from gvlm import engine


def matmul_triple_loop(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Naive i,j,k loops, k ascending, accumulating in the input dtype."""
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n), dtype=a.dtype)
    for i in range(m):
        for j in range(n):
            acc = a.dtype.type(0)
            for p in range(k):
                acc = acc + a[i, p] * b[p, j]
            out[i, j] = acc
    return out


def elementwise_scalar_loop(a: np.ndarray, b: np.ndarray, kind: str) -> np.ndarray:
    out = np.empty_like(a)
    flat_a, flat_b, flat_o = a.reshape(-1), np.broadcast_to(b, a.shape).reshape(-1), out.reshape(-1)
    for i in range(flat_a.size):
        flat_o[i] = flat_a[i] + flat_b[i] if kind == "add" else flat_a[i] * flat_b[i]
    return out


def softmax_reference(x: np.ndarray) -> np.ndarray:
    """Direct e^x / sum e^x evaluation in fp64."""
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(x - x.max())
    return e / e.sum()


def two_softmax_product(h: np.ndarray, group_proj: np.ndarray, shared: np.ndarray,
                        scale: np.ndarray, shift: np.ndarray) -> np.ndarray:
    """Brute-force vocabulary distribution: materialise the group softmax and
    every per-group token softmax by hand, then multiply and concatenate."""
    p_group = softmax_reference(h @ group_proj)
    pieces = []
    for g in range(group_proj.shape[1]):
        logits_g = scale[g] * (h @ shared) + shift[g]
        pieces.append(p_group[g] * softmax_reference(logits_g))
    return np.concatenate(pieces)


def fd_gradient(build_loss, param, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of build_loss() wrt every param element."""
    flat = param.data.reshape(-1)
    grad = np.zeros(flat.size, dtype=np.float64)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        lp = build_loss().item()
        flat[i] = orig - eps
        lm = build_loss().item()
        flat[i] = orig
        grad[i] = (lp - lm) / (2.0 * eps)
    return grad.reshape(param.data.shape)


def assert_grads_match(build_loss, params, eps: float = 1e-5, tol: float = 1e-4):
    """Backprop through one fresh graph, then check every parameter against
    central differences at fp64. `params` is a list of (name, Tensor)."""
    loss = build_loss()
    engine.zero_grads(t for _, t in params)
    engine.backward(loss)
    analytic = {name: t.grad.copy() if t.grad is not None else None for name, t in params}
    for name, t in params:
        ad = analytic[name]
        assert ad is not None, f"{name}: no gradient reached this parameter"
        fd = fd_gradient(build_loss, t, eps=eps)
        denom = np.maximum(np.maximum(np.abs(ad), np.abs(fd)), 1e-6)
        rel = np.abs(ad - fd) / denom
        worst = float(rel.max())
        assert worst < tol, f"{name}: max rel err {worst:.3g} (ad={ad.reshape(-1)[rel.argmax()]}, fd={fd.reshape(-1)[rel.argmax()]})"
