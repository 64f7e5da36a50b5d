"""Partition of token ids into G contiguous groups of S tokens each.

The floor-formula bounds give groups whose sizes differ by at most one.
The head's weight blocks need a single group size, so the working layout
pads the vocabulary up to ``G * S`` and flags ids in ``[v, G*S)`` as
padding: they can never be labels and receive probability zero at
inference. `group_bounds` keeps the unpadded reference partition for
comparison.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import IndexRangeError, InputError


def group_bounds(v: int, num_groups: int, g: int) -> tuple[int, int]:
    """Unpadded [start, end] id range of group g: floor(v*g/G) .. floor(v*(g+1)/G)-1."""
    if not 1 <= num_groups <= v:
        raise InputError(f"need 1 <= G <= v, got G={num_groups}, v={v}")
    if not 0 <= g < num_groups:
        raise IndexRangeError(f"group {g} outside [0, {num_groups})")
    return (v * g) // num_groups, (v * (g + 1)) // num_groups - 1


def optimal_group_size(v: int) -> tuple[int, int]:
    """(G, S) minimising S + G subject to G*S >= v: S = ceil(sqrt(v)).

    Ceiling on both factors trades ~0.4% extra padded vocab for never
    dropping a token.
    """
    if v < 1:
        raise InputError(f"vocab size must be positive, got {v}")
    s = math.isqrt(v)
    if s * s < v:
        s += 1
    g = -(-v // s)
    return g, s


@dataclass(frozen=True)
class GroupPartition:
    """Uniform padded layout: id <-> (group, slot) with g = id // S, t = id % S."""

    v: int
    num_groups: int
    group_size: int

    def __post_init__(self):
        if self.v < 1:
            raise InputError(f"vocab size must be positive, got {self.v}")
        if self.num_groups < 1 or self.group_size < 1:
            raise InputError("group count and size must be positive")
        if self.num_groups * self.group_size < self.v:
            raise InputError(
                f"G*S = {self.num_groups * self.group_size} cannot cover v = {self.v}"
            )
        if (self.num_groups - 1) * self.group_size >= self.v:
            # an all-padding group would soak up probability mass it can
            # never hand back; every group must hold a real token
            raise InputError(
                f"G={self.num_groups}, S={self.group_size} leaves the last group "
                f"entirely padded for v={self.v}"
            )

    @classmethod
    def from_group_count(cls, v: int, num_groups: int) -> "GroupPartition":
        """Equal-size layout with about `num_groups` groups: S = ceil(v/G),
        then trailing groups that would be pure padding are dropped."""
        if not 1 <= num_groups <= v:
            raise InputError(f"need 1 <= G <= v, got G={num_groups}, v={v}")
        group_size = -(-v // num_groups)
        return cls(v=v, num_groups=-(-v // group_size), group_size=group_size)

    @classmethod
    def from_group_size(cls, v: int, group_size: int) -> "GroupPartition":
        if not 1 <= group_size <= v:
            raise InputError(f"need 1 <= S <= v, got S={group_size}, v={v}")
        return cls(v=v, num_groups=-(-v // group_size), group_size=group_size)

    @classmethod
    def auto(cls, v: int) -> "GroupPartition":
        g, s = optimal_group_size(v)
        return cls(v=v, num_groups=g, group_size=s)

    @property
    def padded_v(self) -> int:
        return self.num_groups * self.group_size

    @property
    def n_padded(self) -> int:
        return self.padded_v - self.v

    def token_to_group(self, token_id):
        """id -> (group, slot). Accepts scalars or integer arrays."""
        ids = np.asarray(token_id)
        if ids.size and (ids.min() < 0 or ids.max() >= self.v):
            bad = int(ids.flat[int(np.argmax((ids < 0) | (ids >= self.v)))])
            raise IndexRangeError(f"token id {bad} outside [0, {self.v})")
        g = ids // self.group_size
        t = ids % self.group_size
        if np.isscalar(token_id) or ids.ndim == 0:
            return int(g), int(t)
        return g.astype(np.int64), t.astype(np.int64)

    def group_to_token(self, g, t):
        """(group, slot) -> id; padded slots are rejected."""
        gid = np.asarray(g) * self.group_size + np.asarray(t)
        if (np.asarray(g) < 0).any() or (np.asarray(g) >= self.num_groups).any():
            raise IndexRangeError(f"group index outside [0, {self.num_groups})")
        if (np.asarray(t) < 0).any() or (np.asarray(t) >= self.group_size).any():
            raise IndexRangeError(f"slot index outside [0, {self.group_size})")
        if (gid >= self.v).any():
            bad = int(np.asarray(gid).flat[int(np.argmax(gid >= self.v))])
            raise IndexRangeError(f"(group, slot) names padded id {bad} >= v = {self.v}")
        if np.isscalar(g) and np.isscalar(t):
            return int(gid)
        return gid.astype(np.int64)

    def is_padded(self, token_id: int) -> bool:
        return self.v <= token_id < self.padded_v

    def pad_mask(self, dtype=np.float32, fill: float = -1e30) -> np.ndarray:
        """[G, S] additive pre-softmax mask: `fill` on padded slots, 0 elsewhere."""
        mask = np.zeros((self.num_groups, self.group_size), dtype=dtype)
        if self.n_padded:
            mask.reshape(-1)[self.v :] = fill
        return mask
