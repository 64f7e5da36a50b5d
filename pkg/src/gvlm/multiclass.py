"""Synthetic large-label-space classification in feature-vector form.

Every label is a combination of eight styled attributes; the mixed-radix
index over the attribute options gives 184320 distinct labels. Samples are
the concatenated one-hot blocks of their attributes, each block scaled by a
per-attribute signal strength, plus gaussian noise. Grouping of labels is
arbitrary with respect to the attributes, which is exactly the regime the
grouped head is claimed to survive.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import engine
from .engine import runtime
from .engine.tensor import Tensor
from .errors import IndexRangeError, InputError
from .grouping import GroupPartition
from .heads import (
    DenseHead,
    GroupedHead,
    _softmax_rows_np,
    init_dense_params,
    init_grouped_params,
    PAD_LOGIT,
)
from .training import Adam, clip_global_norm

ATTRIBUTES: list[tuple[str, int]] = [
    ("shape", 8),
    ("pattern", 4),
    ("rotation", 6),
    ("color", 12),
    ("size", 5),
    ("texture", 2),
    ("opacity", 4),
    ("border", 2),
]
RADICES = [n for _, n in ATTRIBUTES]
TOTAL_LABELS = int(np.prod(RADICES))  # 184320
FEATURE_DIM = sum(RADICES)  # 43
# earlier attributes carry a stronger signal; purely a determinism choice
SIGNAL_STRENGTHS = np.linspace(1.5, 0.5, len(ATTRIBUTES))


def label_index(attrs) -> int:
    """Attribute tuple -> id, first attribute most significant."""
    attrs = tuple(int(a) for a in attrs)
    if len(attrs) != len(RADICES):
        raise InputError(f"expected {len(RADICES)} attributes, got {len(attrs)}")
    idx = 0
    for a, radix, (name, _) in zip(attrs, RADICES, ATTRIBUTES):
        if not 0 <= a < radix:
            raise InputError(f"{name} option {a} outside [0, {radix})")
        idx = idx * radix + a
    return idx


def label_attributes(idx: int) -> tuple[int, ...]:
    if not 0 <= idx < TOTAL_LABELS:
        raise IndexRangeError(f"label {idx} outside [0, {TOTAL_LABELS})")
    out = []
    for radix in reversed(RADICES):
        out.append(idx % radix)
        idx //= radix
    return tuple(reversed(out))


def base_vector(label: int) -> np.ndarray:
    """Noise-free feature vector of a label: scaled one-hot per attribute."""
    vec = np.zeros(FEATURE_DIM, dtype=np.float64)
    off = 0
    for a, radix, strength in zip(label_attributes(label), RADICES, SIGNAL_STRENGTHS):
        vec[off + a] = strength
        off += radix
    return vec


def generate_dataset(n_labels: int, n_per_label: int, noise_sigma: float, seed: int = 0):
    """(features [n, 43], labels [n]) for the first `n_labels` label ids.

    Per-label child seeds keep generation deterministic regardless of how
    labels would be sharded across workers.
    """
    if noise_sigma < 0:
        raise InputError(f"noise sigma must be >= 0, got {noise_sigma}")
    if not 1 <= n_labels <= TOTAL_LABELS:
        raise InputError(f"n_labels must be in [1, {TOTAL_LABELS}]")
    if n_per_label < 1:
        raise InputError("n_per_label must be >= 1")
    seeds = np.random.SeedSequence(seed).spawn(n_labels)
    features = np.empty((n_labels * n_per_label, FEATURE_DIM), dtype=np.float64)
    labels = np.repeat(np.arange(n_labels, dtype=np.int64), n_per_label)
    for lab in range(n_labels):
        base = base_vector(lab)
        rng = np.random.default_rng(seeds[lab])
        block = base + noise_sigma * rng.standard_normal((n_per_label, FEATURE_DIM))
        features[lab * n_per_label : (lab + 1) * n_per_label] = block
    return features, labels


def split_last_per_label(features, labels, n_per_label: int):
    """Hold out the last sample of every label for validation."""
    idx = np.arange(len(labels))
    val_mask = (idx % n_per_label) == n_per_label - 1
    return (
        (features[~val_mask], labels[~val_mask]),
        (features[val_mask], labels[val_mask]),
    )


def save_dataset(path, features, labels, noise_sigma: float, seed: int) -> None:
    n_labels = int(labels.max()) + 1 if len(labels) else 0
    header = f"smc-v1 {features.shape[1]} {n_labels} {len(labels)} {noise_sigma!r} {seed}"
    engine.save_container(
        path, [header],
        {"labels": labels.astype(np.float64), "features": np.asarray(features, dtype=np.float64)},
    )


def load_dataset(path):
    manifest, tensors = engine.load_container(path)
    fields = manifest[0].split()
    if fields[0] != "smc-v1":
        raise InputError(f"{path}: not an smc-v1 dataset")
    return tensors["features"], tensors["labels"].astype(np.int64)


@dataclass
class EpochRow:
    epoch: int
    train_loss: float
    val_accuracy: float
    group_accuracy: float | None  # grouped head only


class MlpClassifier:
    """Two ReLU hidden layers of width 512 feeding a dense or grouped head."""

    def __init__(self, head_kind: str, n_labels: int, width: int = 512, seed: int = 0):
        enc_ss, head_ss = np.random.SeedSequence([seed, 0xC1A55]).spawn(2)
        rng = np.random.default_rng(enc_ss)
        scale1 = 1.0 / np.sqrt(FEATURE_DIM)
        scale2 = 1.0 / np.sqrt(width)
        self.w1 = Tensor(rng.normal(0.0, scale1, (FEATURE_DIM, width)), requires_grad=True)
        self.b1 = engine.zeros(width, requires_grad=True)
        self.w2 = Tensor(rng.normal(0.0, scale2, (width, width)), requires_grad=True)
        self.b2 = engine.zeros(width, requires_grad=True)
        self.n_labels = n_labels
        head_rng = np.random.default_rng(head_ss)
        if head_kind == "grouped":
            part = GroupPartition.auto(n_labels)
            self.head = GroupedHead(init_grouped_params(width, part, head_rng), part)
        elif head_kind == "dense":
            self.head = DenseHead(init_dense_params(width, n_labels, head_rng))
        else:
            raise InputError(f"unknown head kind {head_kind!r}")

    def encode(self, x: Tensor) -> Tensor:
        h = engine.relu(engine.add(engine.matmul(x, self.w1), self.b1))
        return engine.relu(engine.add(engine.matmul(h, self.w2), self.b2))

    def parameters(self):
        enc = [("enc.w1", self.w1), ("enc.b1", self.b1), ("enc.w2", self.w2), ("enc.b2", self.b2)]
        return enc + self.head.named_params()

    def predict(self, features: np.ndarray, chunk: int = 512):
        """(predicted ids, predicted groups or None), two-step decode for the
        grouped head: argmax group first, then argmax slot within it."""
        preds, groups = [], []
        grouped = isinstance(self.head, GroupedHead)
        with engine.no_grad():
            for lo in range(0, len(features), chunk):
                x = Tensor(features[lo : lo + chunk])
                h = self.encode(x).data
                if grouped:
                    part = self.head.partition
                    p = self.head.params
                    g = runtime.backend.matmul2(h, p.group_proj.data).argmax(axis=1)
                    token_logits = runtime.backend.matmul2(h, p.shared.data)
                    token_logits = token_logits * p.scale.data[g] + p.shift.data[g]
                    if part.n_padded:
                        token_logits = token_logits + part.pad_mask(h.dtype, PAD_LOGIT)[g]
                    t = token_logits.argmax(axis=1)
                    preds.append(g * part.group_size + t)
                    groups.append(g)
                else:
                    logits = runtime.backend.matmul2(h, self.head.params.weight.data)
                    preds.append((logits + self.head.params.bias.data).argmax(axis=1))
        preds = np.concatenate(preds)
        return preds, (np.concatenate(groups) if grouped else None)


def train_classifier(
    head_kind: str,
    train_set,
    val_set,
    n_labels: int,
    epochs: int,
    seed: int = 0,
    batch_size: int = 64,
    lr: float = 1e-3,
    on_epoch=None,
) -> tuple[MlpClassifier, list[EpochRow]]:
    """Adam training with per-epoch validation accuracy logging.

    For the grouped head also logs group-prediction accuracy, which is
    always >= token accuracy under the two-step decode.
    """
    x_train, y_train = train_set
    x_val, y_val = val_set
    model = MlpClassifier(head_kind, n_labels, seed=seed)
    params = model.parameters()
    opt = Adam(params, lr=lr)
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5C1A]))
    trace: list[EpochRow] = []
    grouped = isinstance(model.head, GroupedHead)

    for epoch in range(epochs):
        order = shuffle_rng.permutation(len(y_train))
        losses = []
        for lo in range(0, len(order), batch_size):
            sel = order[lo : lo + batch_size]
            x = Tensor(x_train[sel])
            h = model.encode(x)
            _, _, loss = model.head.train_loss(h, y_train[sel])
            losses.append(loss.item())
            engine.zero_grads(t for _, t in params)
            engine.backward(loss)
            clip_global_norm(params)
            opt.step()
        preds, pred_groups = model.predict(x_val)
        val_acc = float((preds == y_val).mean())
        group_acc = None
        if grouped:
            true_groups = y_val // model.head.partition.group_size
            group_acc = float((pred_groups == true_groups).mean())
        row = EpochRow(epoch=epoch, train_loss=float(np.mean(losses)),
                       val_accuracy=val_acc, group_accuracy=group_acc)
        trace.append(row)
        if on_epoch is not None:
            on_epoch(row)
    return model, trace
