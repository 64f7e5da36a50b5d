"""Desk-scale decoder-only transformer that produces the hidden states
consumed by either vocabulary head.

Pre-norm blocks, learned positional embeddings, GELU MLP of width 4d,
causal masking via a large-negative additive matrix. The body never

applies a head itself; callers take the [b, s, d] hidden states and feed
whichever head the run is configured with.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from . import engine
from .engine.tensor import Tensor
from .errors import ConfigError, InputError
from .grouping import GroupPartition
from .heads import (
    DenseHead,
    GroupedHead,
    init_dense_params,
    init_grouped_params,
    PAD_LOGIT,
)

HEAD_KINDS = ("dense", "grouped")


@dataclass
class LmConfig:
    d: int = 64
    n_layers: int = 4
    n_heads: int = 2
    seq_len: int = 256
    vocab: int = 1024
    head_kind: str = "grouped"
    group_size: int | None = None  # None: auto S = ceil(sqrt(v))
    dtype: str = "fp32"

    def __post_init__(self):
        if self.d % self.n_heads != 0:
            raise ConfigError(f"hidden size {self.d} not divisible by {self.n_heads} heads")
        if self.seq_len < 2:
            raise ConfigError("seq_len must be at least 2")
        if self.head_kind not in HEAD_KINDS:
            raise ConfigError(f"head_kind must be one of {HEAD_KINDS}")
        if self.vocab < 2:
            raise ConfigError("vocab must be at least 2")
        if self.dtype not in ("fp32", "fp64"):
            raise ConfigError("dtype must be fp32 or fp64")

    def partition(self) -> GroupPartition | None:
        if self.head_kind != "grouped":
            return None
        if self.group_size is None:
            return GroupPartition.auto(self.vocab)
        return GroupPartition.from_group_size(self.vocab, self.group_size)

    def as_dict(self) -> dict:
        return asdict(self)


def _normal(rng: np.random.Generator, shape) -> Tensor:
    return Tensor(rng.normal(0.0, 0.02, shape), requires_grad=True)


class TransformerLM:
    """GPT-2-flavoured body plus one configured head.

    Body weights are drawn from a seed stream independent of the head's, so
    two models with equal seeds but different head kinds share bit-identical
    body weights.
    """

    def __init__(self, config: LmConfig, seed: int):
        self.config = config
        self.seed = seed
        body_ss, head_ss = np.random.SeedSequence(seed).spawn(2)
        rng = np.random.default_rng(body_ss)
        c = config
        self._body: list[tuple[str, Tensor]] = []

        def param(name: str, t: Tensor) -> Tensor:
            self._body.append((name, t))
            return t

        self.wte = param("wte", _normal(rng, (c.vocab, c.d)))
        self.wpe = param("wpe", _normal(rng, (c.seq_len, c.d)))
        self.layers = []
        for i in range(c.n_layers):
            lw = {
                "ln1_g": param(f"layer{i}.ln1_g", engine.ones(c.d, requires_grad=True)),
                "ln1_b": param(f"layer{i}.ln1_b", engine.zeros(c.d, requires_grad=True)),
                "qkv_w": param(f"layer{i}.qkv_w", _normal(rng, (c.d, 3 * c.d))),
                "qkv_b": param(f"layer{i}.qkv_b", engine.zeros(3 * c.d, requires_grad=True)),
                "proj_w": param(f"layer{i}.proj_w", _normal(rng, (c.d, c.d))),
                "proj_b": param(f"layer{i}.proj_b", engine.zeros(c.d, requires_grad=True)),
                "ln2_g": param(f"layer{i}.ln2_g", engine.ones(c.d, requires_grad=True)),
                "ln2_b": param(f"layer{i}.ln2_b", engine.zeros(c.d, requires_grad=True)),
                "fc_w": param(f"layer{i}.fc_w", _normal(rng, (c.d, 4 * c.d))),
                "fc_b": param(f"layer{i}.fc_b", engine.zeros(4 * c.d, requires_grad=True)),
                "fc2_w": param(f"layer{i}.fc2_w", _normal(rng, (4 * c.d, c.d))),
                "fc2_b": param(f"layer{i}.fc2_b", engine.zeros(c.d, requires_grad=True)),
            }
            self.layers.append(lw)
        if c.n_layers:
            self.lnf_g = param("lnf_g", engine.ones(c.d, requires_grad=True))
            self.lnf_b = param("lnf_b", engine.zeros(c.d, requires_grad=True))

        head_rng = np.random.default_rng(head_ss)
        part = c.partition()
        if c.head_kind == "grouped":
            self.head = GroupedHead(init_grouped_params(c.d, part, head_rng), part)
        else:
            self.head = DenseHead(init_dense_params(c.d, c.vocab, head_rng))
        self._causal_base = None

    def parameters(self) -> list[tuple[str, Tensor]]:
        return self._body + self.head.named_params()

    def _causal_mask(self, s: int) -> Tensor:
        if self._causal_base is None or self._causal_base.shape[0] < s:
            base = np.zeros((self.config.seq_len, self.config.seq_len), dtype=np.float64)
            base[np.triu_indices(self.config.seq_len, k=1)] = PAD_LOGIT
            self._causal_base = base
        return Tensor(self._causal_base[:s, :s])

    def forward(self, tokens: np.ndarray) -> Tensor:
        """[b, s] token ids -> [b, s, d] hidden states."""
        tokens = np.asarray(tokens, dtype=np.int64)
        if tokens.ndim != 2:
            raise InputError(f"tokens must be [batch, seq], got shape {tokens.shape}")
        b, s = tokens.shape
        c = self.config
        if s > c.seq_len:
            raise InputError(f"sequence length {s} exceeds configured {c.seq_len}")
        if tokens.size and (tokens.min() < 0 or tokens.max() >= c.vocab):
            raise InputError(f"token ids must lie in [0, {c.vocab})")

        x = engine.add(engine.gather_rows(self.wte, tokens), engine.gather_rows(self.wpe, np.arange(s)))
        if not c.n_layers:
            return x
        nh, dh = c.n_heads, c.d // c.n_heads
        mask = self._causal_mask(s)
        inv_sqrt_dh = 1.0 / math.sqrt(dh)

        def split_heads(t: Tensor) -> Tensor:
            t = engine.reshape(t, (b, s, nh, dh))
            return engine.reshape(engine.transpose(t, (0, 2, 1, 3)), (b * nh, s, dh))

        for lw in self.layers:
            h1 = engine.layer_norm(x, lw["ln1_g"], lw["ln1_b"])
            qkv = engine.add(engine.matmul(engine.reshape(h1, (b * s, c.d)), lw["qkv_w"]), lw["qkv_b"])
            # scale q instead of the s*s score matrix: same math, smaller array
            q = engine.mul(split_heads(engine.narrow(qkv, 1, 0, c.d)), inv_sqrt_dh)
            k = split_heads(engine.narrow(qkv, 1, c.d, c.d))
            v = split_heads(engine.narrow(qkv, 1, 2 * c.d, c.d))
            scores = engine.matmul(q, engine.transpose(k, (0, 2, 1)))
            att = engine.softmax(engine.add(scores, mask), axis=-1)
            o = engine.matmul(att, v)  # [b*nh, s, dh]
            o = engine.transpose(engine.reshape(o, (b, nh, s, dh)), (0, 2, 1, 3))
            o = engine.add(engine.matmul(engine.reshape(o, (b * s, c.d)), lw["proj_w"]), lw["proj_b"])
            x = engine.add(x, engine.reshape(o, (b, s, c.d)))

            h2 = engine.layer_norm(x, lw["ln2_g"], lw["ln2_b"])
            m = engine.add(engine.matmul(engine.reshape(h2, (b * s, c.d)), lw["fc_w"]), lw["fc_b"])
            m = engine.add(engine.matmul(engine.gelu(m), lw["fc2_w"]), lw["fc2_b"])
            x = engine.add(x, engine.reshape(m, (b, s, c.d)))

        return engine.layer_norm(x, self.lnf_g, self.lnf_b)

    def load_state(self, tensors: dict[str, np.ndarray]) -> None:
        for name, t in self.parameters():
            if name not in tensors:
                raise ConfigError(f"checkpoint is missing tensor {name!r}")
            if tuple(tensors[name].shape) != t.data.shape:
                raise ConfigError(
                    f"checkpoint tensor {name!r} has shape {tensors[name].shape}, expected {t.data.shape}"
                )
            t.data = np.ascontiguousarray(tensors[name], dtype=t.data.dtype)
