"""Vocabulary heads: the two-level grouped head and the dense baseline.

The grouped head trains on two objectives, which group the next token is
in (over G logits) and which slot within that group (over S logits), so
the largest activations it ever materialises are [rows, G] and [rows, S].
At inference the full vocabulary distribution is reconstructed as
``P(id) = P(group) * P(slot | group)``.

Padded slots (when G*S > v) are masked with a large negative pre-softmax
additive constant; after exponentiation they underflow to exactly zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import engine
from .engine import runtime
from .engine.tensor import Tensor
from .errors import InputError, NumericError
from .grouping import GroupPartition

PAD_LOGIT = -1e30  # large-negative instead of -inf: keeps fp32 NaN-free


@dataclass
class GroupedHeadParams:
    """W_g [d,G] group predictor, W_s [d,S] shared linear, and per-group
    scale/shift rows W_P, W_Q [G,S]."""

    group_proj: Tensor
    shared: Tensor
    scale: Tensor
    shift: Tensor

    def named(self) -> list[tuple[str, Tensor]]:
        return [
            ("head.group_proj", self.group_proj),
            ("head.shared", self.shared),
            ("head.scale", self.scale),
            ("head.shift", self.shift),
        ]

    @property
    def param_count(self) -> int:
        return sum(t.size for _, t in self.named())


@dataclass
class DenseHeadParams:
    weight: Tensor  # [d, v]
    bias: Tensor  # [v]

    def named(self) -> list[tuple[str, Tensor]]:
        return [("head.weight", self.weight), ("head.bias", self.bias)]

    @property
    def param_count(self) -> int:
        return self.weight.size + self.bias.size


def init_grouped_params(d: int, partition: GroupPartition, rng: np.random.Generator) -> GroupedHeadParams:
    """Normal(0, 0.02) projections; scale starts at one and shift at zero so
    the head begins as the plain shared linear (no inter-group noise)."""
    g, s = partition.num_groups, partition.group_size
    return GroupedHeadParams(
        group_proj=Tensor(rng.normal(0.0, 0.02, (d, g)), requires_grad=True),
        shared=Tensor(rng.normal(0.0, 0.02, (d, s)), requires_grad=True),
        scale=engine.ones((g, s), requires_grad=True),
        shift=engine.zeros((g, s), requires_grad=True),
    )


def init_dense_params(d: int, v: int, rng: np.random.Generator) -> DenseHeadParams:
    return DenseHeadParams(
        weight=Tensor(rng.normal(0.0, 0.02, (d, v)), requires_grad=True),
        bias=engine.zeros(v, requires_grad=True),
    )


def apply_linears_fast(h: Tensor, groups: np.ndarray, params: GroupedHeadParams) -> Tensor:
    """Row i -> scale[groups[i]] * (h_i @ shared) + shift[groups[i]].

    One shared matmul plus two row gathers; differentiable through all four
    weight blocks.
    """
    groups = np.asarray(groups, dtype=np.int64)
    shared_out = engine.matmul(h, params.shared)
    scale_rows = engine.gather_rows(params.scale, groups)
    shift_rows = engine.gather_rows(params.shift, groups)
    return engine.add(engine.mul(shared_out, scale_rows), shift_rows)


def build_per_group_linears(params: GroupedHeadParams) -> list[tuple[np.ndarray, np.ndarray]]:
    """Fold scale/shift into one dense linear per group: column j of W_i is
    shared[:, j] * scale[i, j], bias is shift[i]."""
    shared = params.shared.data
    return [
        (np.ascontiguousarray(shared * params.scale.data[i]), params.shift.data[i].copy())
        for i in range(params.scale.data.shape[0])
    ]


def apply_linears_slow(
    h: np.ndarray, groups: np.ndarray, per_group_linears: list[tuple[np.ndarray, np.ndarray]]
) -> np.ndarray:
    """Reference oracle: loop over groups, apply that group's linear to the
    masked rows. Numerically the folded product sums in a different order
    than the fast path, so agreement is to rounding, not bit-exact."""
    groups = np.asarray(groups, dtype=np.int64)
    s = per_group_linears[0][0].shape[1]
    out = np.zeros((h.shape[0], s), dtype=h.dtype)
    for i, (w, b) in enumerate(per_group_linears):
        mask = groups == i
        if mask.any():
            rows = np.ascontiguousarray(h[mask])
            out[mask] = runtime.backend.matmul2(rows, w.astype(h.dtype)) + b.astype(h.dtype)
    return out


def _softmax_rows_np(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=1, keepdims=True)
    e = np.exp(x - m)
    return e / runtime.backend.rowsum(e)[:, None]


def _row_nll_np(logits: np.ndarray, targets: np.ndarray) -> np.ndarray:
    m = logits.max(axis=1, keepdims=True)
    denom = runtime.backend.rowsum(np.exp(logits - m))
    rows = np.arange(logits.shape[0])
    return np.log(denom) - (logits[rows, targets] - m[:, 0])


class GroupedHead:
    """Grouped parameters bound to their partition, with the training-loss
    and distribution-reconstruction entry points."""

    kind = "grouped"

    def __init__(self, params: GroupedHeadParams, partition: GroupPartition):
        if params.group_proj.data.shape[1] != partition.num_groups:
            raise InputError("params/partition disagree on group count")
        if params.shared.data.shape[1] != partition.group_size:
            raise InputError("params/partition disagree on group size")
        self.params = params
        self.partition = partition
        self._mask = (
            Tensor(partition.pad_mask(dtype=np.float64, fill=PAD_LOGIT))
            if partition.n_padded
            else None
        )

    @property
    def d(self) -> int:
        return self.params.group_proj.data.shape[0]

    def named_params(self):
        return self.params.named()

    def _masked_token_logits(self, h: Tensor, groups: np.ndarray) -> Tensor:
        logits = apply_linears_fast(h, groups, self.params)
        if self._mask is not None:
            logits = engine.add(logits, engine.gather_rows(self._mask, groups))
        return logits

    def train_loss(self, h: Tensor, labels) -> tuple[Tensor, Tensor, Tensor]:
        """(L_group, L_token, L) for hidden rows [r, d] and label ids [r].

        The true group of each label is known, so only the [r, S] in-group
        logits and the [r, G] group logits are materialised, never [r, v].
        """
        labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        groups, slots = self.partition.token_to_group(labels)
        group_logits = engine.matmul(h, self.params.group_proj)
        loss_group = engine.cross_entropy(group_logits, groups)
        loss_token = engine.cross_entropy(self._masked_token_logits(h, groups), slots)
        loss = engine.add(loss_group, loss_token)
        if not np.isfinite(loss.data):
            raise NumericError("grouped head loss is not finite")
        return loss_group, loss_token, loss

    def inference_distribution(self, h) -> Tensor:
        """Full vocabulary distribution for a single hidden state [d]."""
        hd = h.data if isinstance(h, Tensor) else np.asarray(h)
        if not np.all(np.isfinite(hd)):
            raise NumericError("hidden state contains non-finite values")
        ht = h if isinstance(h, Tensor) else Tensor(hd)
        row = engine.reshape(ht, (1, self.d))
        p_group = engine.reshape(engine.softmax(engine.matmul(row, self.params.group_proj)), (-1,))
        shared_out = engine.reshape(engine.matmul(row, self.params.shared), (-1,))
        logits = engine.add(engine.mul(self.params.scale, shared_out), self.params.shift)
        if self._mask is not None:
            logits = engine.add(logits, self._mask)
        p_token = engine.softmax(logits, axis=-1)  # [G, S]
        # per-row multiply by p_group via a transpose round-trip
        combined = engine.transpose(
            engine.mul(engine.transpose(p_token, (1, 0)), p_group), (1, 0)
        )
        flat = engine.reshape(combined, (-1,))
        if self.partition.n_padded:
            flat = engine.narrow(flat, 0, 0, self.partition.v)
        return flat

    def full_distribution(self, h: Tensor) -> np.ndarray:
        """[r, v] distributions computed one S-wide group block at a time,
        so peak extra memory stays at r*(S+G) plus the output itself."""
        part = self.partition
        with engine.no_grad():
            hd = h.data if isinstance(h, Tensor) else np.asarray(h)
            p_group = _softmax_rows_np(runtime.backend.matmul2(hd, self.params.group_proj.data))
            shared_out = runtime.backend.matmul2(hd, self.params.shared.data)
            out = np.empty((hd.shape[0], part.v), dtype=hd.dtype)
            mask = part.pad_mask(dtype=hd.dtype, fill=PAD_LOGIT) if part.n_padded else None
            for g in range(part.num_groups):
                logits = shared_out * self.params.scale.data[g] + self.params.shift.data[g]
                if mask is not None:
                    logits = logits + mask[g]
                block = _softmax_rows_np(logits) * p_group[:, g : g + 1]
                lo = g * part.group_size
                hi = min(part.v, lo + part.group_size)
                out[:, lo:hi] = block[:, : hi - lo]
        return out

    def nll_terms(self, h: Tensor, labels) -> np.ndarray:
        """Per-row -log P(label) = -log P(group) - log P(slot | group)."""
        labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        groups, slots = self.partition.token_to_group(labels)
        with engine.no_grad():
            hd = h.data if isinstance(h, Tensor) else np.asarray(h)
            group_logits = runtime.backend.matmul2(hd, self.params.group_proj.data)
            token_logits = runtime.backend.matmul2(hd, self.params.shared.data)
            token_logits = token_logits * self.params.scale.data[groups] + self.params.shift.data[groups]
            if self.partition.n_padded:
                token_logits = token_logits + self.partition.pad_mask(hd.dtype, PAD_LOGIT)[groups]
            return _row_nll_np(group_logits, groups) + _row_nll_np(token_logits, slots)


class DenseHead:
    """Plain full-softmax baseline: softmax(h @ W + b) over all v logits."""

    kind = "dense"

    def __init__(self, params: DenseHeadParams):
        self.params = params

    @property
    def d(self) -> int:
        return self.params.weight.data.shape[0]

    @property
    def v(self) -> int:
        return self.params.weight.data.shape[1]

    def named_params(self):
        return self.params.named()

    def train_loss(self, h: Tensor, labels) -> tuple[Tensor, Tensor, Tensor]:
        """Returns (None, None, loss)-style triple with equal entries so the
        trainer can treat both heads uniformly; materialises [r, v]."""
        labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        logits = engine.add(engine.matmul(h, self.params.weight), self.params.bias)
        loss = engine.cross_entropy(logits, labels)
        if not np.isfinite(loss.data):
            raise NumericError("dense head loss is not finite")
        return None, None, loss

    def inference_distribution(self, h) -> Tensor:
        hd = h.data if isinstance(h, Tensor) else np.asarray(h)
        if not np.all(np.isfinite(hd)):
            raise NumericError("hidden state contains non-finite values")
        ht = h if isinstance(h, Tensor) else Tensor(hd)
        row = engine.reshape(ht, (1, self.d))
        logits = engine.add(engine.matmul(row, self.params.weight), self.params.bias)
        return engine.reshape(engine.softmax(logits), (-1,))

    def full_distribution(self, h: Tensor) -> np.ndarray:
        with engine.no_grad():
            hd = h.data if isinstance(h, Tensor) else np.asarray(h)
            logits = runtime.backend.matmul2(hd, self.params.weight.data) + self.params.bias.data
            return _softmax_rows_np(logits)

    def nll_terms(self, h: Tensor, labels) -> np.ndarray:
        labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        with engine.no_grad():
            hd = h.data if isinstance(h, Tensor) else np.asarray(h)
            logits = runtime.backend.matmul2(hd, self.params.weight.data) + self.params.bias.data
            return _row_nll_np(logits, labels)


def save_head(path, params: GroupedHeadParams, partition: GroupPartition) -> None:
    manifest = f"head-v1 {params.group_proj.data.shape[0]} {partition.num_groups} {partition.group_size} {partition.v}"
    engine.save_container(
        path, [manifest], {name.split(".", 1)[1]: t.data for name, t in params.named()}
    )


def load_head(path) -> tuple[GroupedHeadParams, GroupPartition]:
    manifest, tensors = engine.load_container(path)
    fields = manifest[0].split()
    if fields[0] != "head-v1":
        raise InputError(f"{path}: not a head-v1 container")
    _, g, s, v = (int(x) for x in fields[1:5])
    partition = GroupPartition(v=v, num_groups=g, group_size=s)
    params = GroupedHeadParams(
        group_proj=Tensor(tensors["group_proj"], requires_grad=True),
        shared=Tensor(tensors["shared"], requires_grad=True),
        scale=Tensor(tensors["scale"], requires_grad=True),
        shift=Tensor(tensors["shift"], requires_grad=True),
    )
    return params, partition
