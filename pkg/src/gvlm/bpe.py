"""Byte-pair encoding over raw bytes.

Ids are ordered by creation time: base alphabet bytes first (ascending),
then one id per merge in the order merges were learned, then a reserved
unknown id at the very end. Earlier creation is a proxy for higher
frequency, which is what makes contiguous id ranges a useful grouping.

Training is word-scoped: the corpus is pre-split on whitespace and merges
never cross a split boundary. Whitespace bytes keep their byte-level ids so
decode(encode(s)) == s.
"""
from __future__ import annotations

import heapq
import re
from dataclasses import dataclass, field

from .errors import IndexRangeError, InputError

UNKNOWN_BYTES = b"\xef\xbf\xbd"  # U+FFFD replacement character

_WS_SPLIT = re.compile(rb"(\s+)")


@dataclass
class MergeTable:
    """Ordered merge rules plus the vocabulary they induce."""

    alphabet: list[int]  # byte values present in the training corpus, ascending
    merges: list[tuple[int, int]]  # (left_id, right_id); merge k creates id |alphabet|+k

    vocab: list[bytes] = field(init=False, repr=False)
    byte_to_id: dict[int, int] = field(init=False, repr=False)
    ranks: dict[tuple[int, int], int] = field(init=False, repr=False)

    def __post_init__(self):
        n = len(self.alphabet)
        vocab = [bytes([b]) for b in self.alphabet]
        for k, (l, r) in enumerate(self.merges):
            if l >= n + k or r >= n + k:
                raise InputError(f"merge {k} references undefined id ({l},{r})")
            vocab.append(vocab[l] + vocab[r])
        vocab.append(UNKNOWN_BYTES)
        self.vocab = vocab
        self.byte_to_id = {b: i for i, b in enumerate(self.alphabet)}
        self.ranks = {pair: k for k, pair in enumerate(self.merges)}

    @property
    def v(self) -> int:
        return len(self.vocab)

    @property
    def unknown_id(self) -> int:
        return self.v - 1

    def token_bytes(self, token_id: int) -> bytes:
        if not 0 <= token_id < self.v:
            raise IndexRangeError(f"token id {token_id} outside [0, {self.v})")
        return self.vocab[token_id]

    def save(self, path) -> None:
        with open(path, "w", encoding="ascii") as f:
            f.write(f"bpe-v1 {len(self.alphabet)} {len(self.merges)}\n")
            for l, r in self.merges:
                f.write(f"{l} {r}\n")
            for b in self.alphabet:
                f.write(f"{b:02x}\n")

    @classmethod
    def load(cls, path) -> "MergeTable":
        with open(path, "r", encoding="ascii") as f:
            header = f.readline().split()
            if len(header) != 3 or header[0] != "bpe-v1":
                raise InputError(f"{path}: not a bpe-v1 table")
            n_alpha, n_merges = int(header[1]), int(header[2])
            merges = []
            for _ in range(n_merges):
                l, r = f.readline().split()
                merges.append((int(l), int(r)))
            alphabet = [int(f.readline().strip(), 16) for _ in range(n_alpha)]
        return cls(alphabet=alphabet, merges=merges)


def _pair_counts(tokens: list[int]) -> dict[tuple[int, int], int]:
    """Count mergeable adjacent pairs.

    A run of L identical tokens supports only L // 2 simultaneous merges, so
    identical pairs are counted per run rather than per adjacency.
    """
    counts: dict[tuple[int, int], int] = {}
    i, n = 0, len(tokens)
    while i < n - 1:
        a = tokens[i]
        if tokens[i + 1] == a:
            j = i
            while j + 1 < n and tokens[j + 1] == a:
                j += 1
            pair = (a, a)
            counts[pair] = counts.get(pair, 0) + (j - i + 1) // 2
            i = j
        else:
            pair = (a, tokens[i + 1])
            counts[pair] = counts.get(pair, 0) + 1
            i += 1
    return counts


def _merge_word(tokens: list[int], pair: tuple[int, int], new_id: int) -> list[int]:
    """Replace non-overlapping occurrences of pair, left to right."""
    out: list[int] = []
    i, n = 0, len(tokens)
    l, r = pair
    while i < n:
        if i < n - 1 and tokens[i] == l and tokens[i + 1] == r:
            out.append(new_id)
            i += 2
        else:
            out.append(tokens[i])
            i += 1
    return out


def train_bpe(corpus: bytes, target_vocab: int, min_pair_count: int = 2) -> MergeTable:
    """Greedy most-frequent-pair merging until the vocab budget is spent or
    no pair occurs at least `min_pair_count` times.

    Vocabulary layout: |alphabet| byte ids, then merge ids in creation
    order, then one reserved unknown id, so the merge budget is
    ``target_vocab - |alphabet| - 1``. Ties on frequency go to the
    lexicographically smallest (left_id, right_id).
    """
    if not corpus:
        raise InputError("cannot train BPE on an empty corpus")
    alphabet = sorted(set(corpus))
    if target_vocab < len(alphabet):
        raise InputError(
            f"target vocab {target_vocab} below the {len(alphabet)} distinct corpus bytes"
        )
    byte_to_id = {b: i for i, b in enumerate(alphabet)}
    budget = max(0, target_vocab - len(alphabet) - 1)

    # unique whitespace-delimited words with occurrence counts
    word_counts: dict[bytes, int] = {}
    for segment in _WS_SPLIT.split(corpus):
        if segment and not segment.isspace():
            word_counts[segment] = word_counts.get(segment, 0) + 1
    words = [[byte_to_id[b] for b in w] for w in word_counts]
    wcounts = list(word_counts.values())

    pair_counts: dict[tuple[int, int], int] = {}
    pair_where: dict[tuple[int, int], set[int]] = {}
    heap: list[tuple[int, int, int]] = []

    def bump(pair: tuple[int, int], delta: int) -> None:
        c = pair_counts.get(pair, 0) + delta
        if c <= 0:
            pair_counts.pop(pair, None)
        else:
            pair_counts[pair] = c
            if delta > 0:
                heapq.heappush(heap, (-c, pair[0], pair[1]))

    for wi, w in enumerate(words):
        for pair, k in _pair_counts(w).items():
            bump(pair, k * wcounts[wi])
            pair_where.setdefault(pair, set()).add(wi)

    merges: list[tuple[int, int]] = []
    while len(merges) < budget and heap:
        negc, l, r = heapq.heappop(heap)
        pair = (l, r)
        if pair_counts.get(pair, 0) != -negc:
            continue  # stale entry
        if -negc < min_pair_count:
            break
        new_id = len(alphabet) + len(merges)
        merges.append(pair)
        for wi in sorted(pair_where.get(pair, ())):
            old = _pair_counts(words[wi])
            words[wi] = _merge_word(words[wi], pair, new_id)
            new = _pair_counts(words[wi])
            for p, k in old.items():
                d = new.get(p, 0) - k
                if d:
                    bump(p, d * wcounts[wi])
                if p not in new:
                    pair_where[p].discard(wi)
            for p, k in new.items():
                if p not in old:
                    bump(p, k * wcounts[wi])
                    pair_where.setdefault(p, set()).add(wi)
    return MergeTable(alphabet=alphabet, merges=merges)


def _encode_word(word: bytes, table: MergeTable) -> list[int]:
    unk = table.unknown_id
    toks = [table.byte_to_id.get(b, unk) for b in word]
    ranks = table.ranks
    base = len(table.alphabet)
    while len(toks) >= 2:
        best_rank = None
        for i in range(len(toks) - 1):
            rank = ranks.get((toks[i], toks[i + 1]))
            if rank is not None and (best_rank is None or rank < best_rank):
                best_rank = rank
        if best_rank is None:
            break
        toks = _merge_word(toks, table.merges[best_rank], base + best_rank)
    return toks


def encode(data: bytes, table: MergeTable) -> list[int]:
    """Apply merges exhaustively, lowest-rank merge first at each step.

    Unknown bytes map to the reserved id (placed after all merge ids);
    whitespace keeps byte-level ids so decoding reproduces the input.
    """
    out: list[int] = []
    cache: dict[bytes, list[int]] = {}
    unk = table.unknown_id
    for segment in _WS_SPLIT.split(data):
        if not segment:
            continue
        if segment.isspace():
            out.extend(table.byte_to_id.get(b, unk) for b in segment)
        else:
            ids = cache.get(segment)
            if ids is None:
                ids = _encode_word(segment, table)
                cache[segment] = ids
            out.extend(ids)
    return out


def decode(ids, table: MergeTable) -> bytes:
    v = table.v
    pieces = []
    for i in ids:
        if not 0 <= i < v:
            raise IndexRangeError(f"token id {i} outside [0, {v})")
        pieces.append(table.vocab[i])
    return b"".join(pieces)
