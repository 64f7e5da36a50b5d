"""Analytic memory/FLOP formulas and their measured counterparts.

The analytic side is exact integer arithmetic. The measured side replaces
GPU telemetry with an element-accounting meter: a high-water mark of live
engine-tensor elements, which is hardware-independent and stricter than
allocator statistics. Ratios between head kinds are the meaningful output;
absolute GB figures from specific GPUs are not reproducible here.
"""
from __future__ import annotations

import platform
import time
import weakref
from dataclasses import dataclass

import numpy as np

from . import engine
from .engine import runtime
from .errors import ContractError, InputError
from .grouping import GroupPartition
from .heads import DenseHead, GroupedHead, init_dense_params, init_grouped_params
from .model import LmConfig
from .training import Adam, clip_global_norm, sample_batch, train


def logits_bytes(b: int, s: int, v: int, dtype_bytes: int) -> int:
    """Bytes of the [batch, seq, vocab] logits tensor a dense head materialises."""
    for name, val in (("b", b), ("s", s), ("v", v), ("dtype_bytes", dtype_bytes)):
        if val < 1:
            raise InputError(f"{name} must be positive, got {val}")
    return b * s * v * dtype_bytes


def grouped_activation_bytes(b: int, s: int, group_size: int, num_groups: int, dtype_bytes: int) -> int:
    """Bytes of the [b, s, S] and [b, s, G] tensors the grouped head materialises."""
    for name, val in (("b", b), ("s", s), ("S", group_size), ("G", num_groups), ("dtype_bytes", dtype_bytes)):
        if val < 1:
            raise InputError(f"{name} must be positive, got {val}")
    return b * s * (group_size + num_groups) * dtype_bytes


def head_flops_dense(d: int, v: int) -> int:
    """Per-token head cost: multiply-add = 2 flops, plus the bias add."""
    return 2 * d * v + v


def head_flops_grouped(d: int, group_size: int, num_groups: int) -> int:
    """Per-token: group projection + shared linear + scale and shift."""
    return 2 * d * num_groups + 2 * d * group_size + 2 * group_size


def environment_descriptor() -> str:
    host = platform.processor() or platform.machine()
    return (
        f"dtype={engine.dtype_name()} backend={engine.backend_name()} "
        f"workers=1 host={host}/{platform.system().lower()}"
    )


# -- element meter ---------------------------------------------------------------

_meter_active = False


class ElementMeter:
    """High-water mark of live engine-tensor elements inside a `with` block.

    Counts owning buffers only (views are free) and never touches the
    numbers themselves, so metered and unmetered runs are bit-identical.
    Meters do not nest.
    """

    def __init__(self):
        self.live = 0
        self.peak = 0
        self._closed = False

    def __enter__(self):
        global _meter_active
        if _meter_active:
            raise ContractError("element meters do not nest")
        _meter_active = True
        runtime.set_alloc_hook(self._on_alloc)
        return self

    def __exit__(self, *exc):
        global _meter_active
        runtime.set_alloc_hook(None)
        _meter_active = False
        self._closed = True
        return False

    def _on_alloc(self, arr: np.ndarray) -> None:
        n = arr.size
        self.live += n
        if self.live > self.peak:
            self.peak = self.live
        weakref.finalize(arr, self._on_free, n)

    def _on_free(self, n: int) -> None:
        if not self._closed:
            self.live -= n


def element_meter(run) -> int:
    """Run the closure under a fresh meter; return peak live elements."""
    with ElementMeter() as m:
        run()
    return m.peak


# -- measured runs -----------------------------------------------------------------


def head_training_peak(head_kind: str, b: int, s: int, v: int, d: int,
                       group_size: int | None = None, seed: int = 0) -> int:
    """Peak live elements of one head-only training step (loss + backward).

    Hidden states and weights are allocated outside the metered region, so
    the number reflects activations and gradients of the head itself.
    """
    rng = np.random.default_rng(seed)
    h = engine.tensor(rng.normal(0.0, 1.0, (b * s, d)), requires_grad=True)
    labels = rng.integers(0, v, size=b * s)
    if head_kind == "grouped":
        part = GroupPartition.auto(v) if group_size is None else GroupPartition.from_group_size(v, group_size)
        head = GroupedHead(init_grouped_params(d, part, rng), part)
    elif head_kind == "dense":
        head = DenseHead(init_dense_params(d, v, rng))
    else:
        raise InputError(f"unknown head kind {head_kind!r}")

    def run():
        _, _, loss = head.train_loss(h, labels)
        engine.backward(loss)
        engine.zero_grads([h] + [t for _, t in head.named_params()])

    return element_meter(run)


def throughput_bench(
    d: int,
    v: int,
    seq: int = 128,
    batch: int = 2,
    n_layers: int = 2,
    n_heads: int = 2,
    trials: int = 5,
    seed: int = 0,
) -> dict[str, float]:
    """Tokens/second of one optimised training step per head kind.

    Median of `trials` timed steps after one warmup step, full forward +
    backward + clip + Adam on synthetic data.
    """
    results: dict[str, float] = {}
    rng = np.random.default_rng(seed)
    ids = rng.integers(0, v, size=seq * (batch + 4) + 2)
    for head_kind in ("dense", "grouped"):
        config = LmConfig(d=d, n_layers=n_layers, n_heads=n_heads, seq_len=seq,
                          vocab=v, head_kind=head_kind)
        engine.set_dtype(config.dtype)
        from .model import TransformerLM

        model = TransformerLM(config, seed)
        params = model.parameters()
        opt = Adam(params)
        batch_rng = np.random.default_rng(seed + 1)

        def one_step():
            x, y = sample_batch(batch_rng, ids, batch, seq)
            h = model.forward(x)
            flat = engine.reshape(h, (batch * seq, d))
            _, _, loss = model.head.train_loss(flat, y.reshape(-1))
            engine.zero_grads(t for _, t in params)
            engine.backward(loss)
            clip_global_norm(params)
            opt.step()

        one_step()  # warmup
        times = []
        for _ in range(trials):
            t0 = time.perf_counter()
            one_step()
            times.append(time.perf_counter() - t0)
        results[head_kind] = batch * seq / float(np.median(times))
    return results


def backend_bench(d: int = 64, v: int = 1024, seq: int = 64, batch: int = 4,
                  steps: int = 3, seed: int = 0) -> dict[str, float]:
    """Tokens/second of the same grouped training steps on each backend."""
    results: dict[str, float] = {}
    available = ["ext", "numpy"] if engine.backend_name() == "ext" else ["numpy"]
    original = engine.backend_name()
    try:
        for name in available:
            engine.use_backend(name)
            config = LmConfig(d=d, n_layers=1, n_heads=2, seq_len=seq, vocab=v, head_kind="grouped")
            rng = np.random.default_rng(seed)
            ids = rng.integers(0, v, size=seq * (batch + 4) + 2)
            t0 = time.perf_counter()
            train(config, ids, steps=steps, seed=seed, batch_size=batch)
            results[name] = steps * batch * seq / (time.perf_counter() - t0)
    finally:
        engine.use_backend(original)
    return results


# -- report -------------------------------------------------------------------------


@dataclass
class CostReport:
    """Analytic plus measured costs for one (b, s, v, d, S, G, dtype) point."""

    b: int
    s: int
    v: int
    d: int
    group_size: int
    num_groups: int
    dtype_bytes: int
    logits_bytes: int
    grouped_bytes: int
    head_flops_dense: int
    head_flops_grouped: int
    measured_peak_dense: int | None = None
    measured_peak_grouped: int | None = None
    tokens_per_s_dense: float | None = None
    tokens_per_s_grouped: float | None = None
    environment: str = ""

    CSV_HEADER = (
        "b,s,v,d,group_size,num_groups,dtype_bytes,logits_bytes,grouped_bytes,"
        "head_flops_dense,head_flops_grouped,measured_peak_dense,"
        "measured_peak_grouped,tokens_per_s_dense,tokens_per_s_grouped,environment"
    )

    @classmethod
    def analytic(cls, b: int, s: int, v: int, d: int, group_size: int,
                 num_groups: int, dtype_bytes: int) -> "CostReport":
        return cls(
            b=b, s=s, v=v, d=d, group_size=group_size, num_groups=num_groups,
            dtype_bytes=dtype_bytes,
            logits_bytes=logits_bytes(b, s, v, dtype_bytes),
            grouped_bytes=grouped_activation_bytes(b, s, group_size, num_groups, dtype_bytes),
            head_flops_dense=head_flops_dense(d, v),
            head_flops_grouped=head_flops_grouped(d, group_size, num_groups),
            environment=environment_descriptor(),
        )

    def csv_row(self) -> str:
        def fmt(x):
            if x is None:
                return ""
            if isinstance(x, float):
                return f"{x:.2f}"
            return str(x)

        return ",".join(
            fmt(x)
            for x in (
                self.b, self.s, self.v, self.d, self.group_size, self.num_groups,
                self.dtype_bytes, self.logits_bytes, self.grouped_bytes,
                self.head_flops_dense, self.head_flops_grouped,
                self.measured_peak_dense, self.measured_peak_grouped,
                self.tokens_per_s_dense, self.tokens_per_s_grouped,
                self.environment,
            )
        )

    def table(self) -> str:
        lines = [
            f"config              b={self.b} s={self.s} v={self.v} d={self.d} "
            f"S={self.group_size} G={self.num_groups} dtype_bytes={self.dtype_bytes}",
            f"logits tensor       {self.logits_bytes:,} B",
            f"grouped activations {self.grouped_bytes:,} B "
            f"({self.logits_bytes / self.grouped_bytes:.1f}x smaller)",
            f"head flops/token    dense {self.head_flops_dense:,} | "
            f"grouped {self.head_flops_grouped:,} "
            f"({self.head_flops_dense / self.head_flops_grouped:.1f}x fewer)",
        ]
        if self.measured_peak_dense is not None and self.measured_peak_grouped is not None:
            lines.append(
                f"measured peak elems dense {self.measured_peak_dense:,} | "
                f"grouped {self.measured_peak_grouped:,} "
                f"({self.measured_peak_dense / self.measured_peak_grouped:.1f}x)"
            )
        if self.tokens_per_s_dense is not None and self.tokens_per_s_grouped is not None:
            lines.append(
                f"tokens/s            dense {self.tokens_per_s_dense:,.0f} | "
                f"grouped {self.tokens_per_s_grouped:,.0f} "
                f"({self.tokens_per_s_grouped / self.tokens_per_s_dense:.2f}x)"
            )
        lines.append(f"environment         {self.environment}")
        return "\n".join(lines)
