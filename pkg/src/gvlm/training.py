"""Training loop, evaluation, and sampling around the transformer.

Batching, init, and optimiser state are all driven by explicit seeds, so a
run is reproducible bit-for-bit: same seed, same op sequence, same trace.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import engine
from .engine.tensor import Tensor
from .errors import ConfigError, InputError, TrainingDiverged
from .model import LmConfig, TransformerLM

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
GRAD_CLIP = 1.0
DEFAULT_LR = 3e-4


class Adam:
    """Standard bias-corrected Adam over named parameters, fixed order."""

    def __init__(self, params, lr: float = DEFAULT_LR, betas=ADAM_BETAS, eps: float = ADAM_EPS):
        self.params = list(params)
        self.lr, self.betas, self.eps = lr, betas, eps
        self.t = 0
        self._m = [np.zeros_like(t.data) for _, t in self.params]
        self._v = [np.zeros_like(t.data) for _, t in self.params]

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.betas
        corr1 = 1.0 - b1**self.t
        corr2 = 1.0 - b2**self.t
        for (_, p), m, v in zip(self.params, self._m, self._v):
            if p.grad is None:
                continue
            g = p.grad
            m += (1.0 - b1) * (g - m)
            v += (1.0 - b2) * (g * g - v)
            p.data -= (self.lr / corr1) * m / (np.sqrt(v / corr2) + self.eps)


def clip_global_norm(params, max_norm: float = GRAD_CLIP) -> float:
    total = 0.0
    for _, p in params:
        if p.grad is not None:
            g = np.ascontiguousarray(p.grad.reshape(-1))
            total += float(engine.runtime.backend.vecsum(g * g))
    norm = math.sqrt(total)
    if norm > max_norm and norm > 0:
        scale = max_norm / norm
        for _, p in params:
            if p.grad is not None:
                p.grad *= p.grad.dtype.type(scale)
    return norm


@dataclass
class TraceRow:
    step: int
    loss: float
    loss_group: float | None
    loss_token: float | None


@dataclass
class TrainResult:
    model: TransformerLM
    trace: list[TraceRow] = field(default_factory=list)


def sample_batch(rng: np.random.Generator, ids: np.ndarray, batch: int, seq: int):
    hi = len(ids) - seq - 1
    offsets = rng.integers(0, hi + 1, size=batch)
    x = np.stack([ids[o : o + seq] for o in offsets])
    y = np.stack([ids[o + 1 : o + seq + 1] for o in offsets])
    return x, y


def train(
    config: LmConfig,
    ids: np.ndarray,
    steps: int,
    lr: float = DEFAULT_LR,
    seed: int = 0,
    batch_size: int = 16,
    on_step=None,
) -> TrainResult:
    """Adam training for `steps` minibatches sampled by seed.

    Raises :class:`TrainingDiverged` with the step number if the loss stops
    being finite.
    """
    ids = np.asarray(ids, dtype=np.int64)
    if len(ids) <= config.seq_len + 1:
        raise InputError(f"corpus of {len(ids)} tokens is shorter than one training window")
    if ids.min() < 0 or ids.max() >= config.vocab:
        raise ConfigError(f"corpus ids exceed configured vocab {config.vocab}")
    engine.set_dtype(config.dtype)
    model = TransformerLM(config, seed)
    params = model.parameters()
    opt = Adam(params, lr=lr)
    batch_rng = np.random.default_rng(np.random.SeedSequence([seed, 0xBA7C]))
    result = TrainResult(model=model)
    b, s = batch_size, config.seq_len

    for step in range(steps):
        x, y = sample_batch(batch_rng, ids, b, s)
        h = model.forward(x)
        flat = engine.reshape(h, (b * s, config.d))
        try:
            lg, lt, loss = model.head.train_loss(flat, y.reshape(-1))
        except ArithmeticError as exc:
            raise TrainingDiverged(step, f"step {step}: {exc}") from exc
        loss_val = loss.item()
        if not math.isfinite(loss_val):
            raise TrainingDiverged(step)
        engine.zero_grads(t for _, t in params)
        engine.backward(loss)
        clip_global_norm(params)
        opt.step()
        row = TraceRow(
            step=step,
            loss=loss_val,
            loss_group=lg.item() if lg is not None else None,
            loss_token=lt.item() if lt is not None else None,
        )
        result.trace.append(row)
        if on_step is not None:
            on_step(row)
    return result


def evaluate(model: TransformerLM, val_ids: np.ndarray, batch_windows: int = 8) -> float:
    """Mean NLL in nats/token over non-overlapping windows of the val ids."""
    val_ids = np.asarray(val_ids, dtype=np.int64)
    c = model.config
    if val_ids.max() >= c.vocab or val_ids.min() < 0:
        raise ConfigError(f"validation ids exceed configured vocab {c.vocab}")
    s = c.seq_len
    n_windows = (len(val_ids) - 1) // s
    if n_windows < 1:
        raise InputError("validation stream is shorter than one window")
    total, count = 0.0, 0
    with engine.no_grad():
        for start in range(0, n_windows, batch_windows):
            rows = range(start, min(start + batch_windows, n_windows))
            x = np.stack([val_ids[w * s : w * s + s] for w in rows])
            y = np.stack([val_ids[w * s + 1 : w * s + s + 1] for w in rows])
            h = model.forward(x)
            flat = engine.reshape(h, (x.shape[0] * s, c.d))
            terms = model.head.nll_terms(flat, y.reshape(-1))
            total += float(engine.runtime.backend.vecsum(np.ascontiguousarray(terms)))
            count += terms.size
    return total / count


def unigram_nll(train_ids: np.ndarray, val_ids: np.ndarray, vocab: int, alpha: float = 1.0) -> float:
    """NLL of predicting val tokens from add-alpha smoothed train frequencies."""
    counts = np.bincount(np.asarray(train_ids), minlength=vocab).astype(np.float64) + alpha
    logp = np.log(counts / counts.sum())
    return float(-logp[np.asarray(val_ids)].mean())


def generate(
    model: TransformerLM,
    prompt_ids,
    max_new: int,
    top_k: int | None = None,
    temperature: float = 1.0,
    seed: int = 0,
) -> list[int]:
    """Prompt plus `max_new` sampled ids. temperature 0 means greedy."""
    if top_k is not None and top_k < 1:
        raise InputError(f"top_k must be >= 1, got {top_k}")
    if temperature < 0:
        raise InputError("temperature must be >= 0")
    c = model.config
    ids = [int(i) for i in prompt_ids]
    if not ids:
        raise InputError("prompt must contain at least one token id")
    rng = np.random.default_rng(seed)
    with engine.no_grad():
        for _ in range(max_new):
            ctx = np.asarray([ids[-c.seq_len :]], dtype=np.int64)
            h = model.forward(ctx)
            last = h.data[0, -1]
            p = model.head.inference_distribution(last).data.astype(np.float64)
            ids.append(_sample_from(p, rng, top_k, temperature))
    return ids


def _sample_from(p: np.ndarray, rng, top_k, temperature) -> int:
    if temperature == 0.0:
        return int(np.argmax(p))
    if temperature != 1.0:
        p = np.power(p, 1.0 / temperature)
    if top_k is not None and top_k < len(p):
        cutoff = np.partition(p, -top_k)[-top_k]
        p = np.where(p >= cutoff, p, 0.0)
    p = p / p.sum()
    return int(rng.choice(len(p), p=p))


# -- checkpoints and id streams -------------------------------------------------


def save_checkpoint(path, model: TransformerLM, step: int, lr: float = DEFAULT_LR) -> None:
    c = model.config
    manifest = [
        "lm-v1",
        f"d = {c.d}",
        f"n_layers = {c.n_layers}",
        f"n_heads = {c.n_heads}",
        f"seq_len = {c.seq_len}",
        f"vocab = {c.vocab}",
        f"head_kind = {c.head_kind}",
        f"group_size = {'auto' if c.group_size is None else c.group_size}",
        f"dtype = {c.dtype}",
        f"step = {step}",
        f"seed = {model.seed}",
        f"lr = {lr!r}",
        f"adam_betas = {ADAM_BETAS[0]!r} {ADAM_BETAS[1]!r}",
        f"adam_eps = {ADAM_EPS!r}",
        f"grad_clip = {GRAD_CLIP!r}",
    ]
    engine.save_container(path, manifest, {name: t.data for name, t in model.parameters()})


def load_checkpoint(path) -> tuple[TransformerLM, dict]:
    manifest, tensors = engine.load_container(path)
    if not manifest or manifest[0] != "lm-v1":
        raise ConfigError(f"{path}: not an lm-v1 checkpoint")
    kv = {}
    for line in manifest[1:]:
        key, _, value = line.partition(" = ")
        kv[key.strip()] = value.strip()
    config = LmConfig(
        d=int(kv["d"]),
        n_layers=int(kv["n_layers"]),
        n_heads=int(kv["n_heads"]),
        seq_len=int(kv["seq_len"]),
        vocab=int(kv["vocab"]),
        head_kind=kv["head_kind"],
        group_size=None if kv["group_size"] == "auto" else int(kv["group_size"]),
        dtype=kv["dtype"],
    )
    engine.set_dtype(config.dtype)
    model = TransformerLM(config, seed=int(kv["seed"]))
    model.load_state(tensors)
    return model, kv


def save_ids(path, ids) -> None:
    ids = np.asarray(ids, dtype=np.uint32)
    with open(path, "wb") as f:
        f.write(f"gvid1 {len(ids)}\n".encode())
        f.write(ids.astype("<u4").tobytes())


def load_ids(path) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.readline().split()
        if len(header) != 2 or header[0] != b"gvid1":
            raise InputError(f"{path}: not a gvid1 id stream")
        n = int(header[1])
        return np.frombuffer(f.read(4 * n), dtype="<u4").astype(np.int64)
