"""Bounded-degree sparsification with ferromagnetic copy chains.

Every logical node ``i`` becomes a chain of ``C + 1`` physical nodes: the
source (physical index ``i``) followed by ``C`` copies (physical indices
``n + i*C .. n + i*C + C - 1``).  Consecutive chain members are joined by a
copy edge of weight ``w0``.  The problem edges of ``i`` are handed out in
ascending neighbor order, filling the source first and then each copy in
turn, with per-position capacity

* source: ``k - 1`` (``k`` when there are no copies)
* middle copies: ``k - 2``
* last copy: ``k - 1``

so no physical node exceeds degree ``k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from . import rng as _rng
from .ising import DimensionError, IsingModel, as_spins, format_model, parse_model


class InvalidBoundError(ValueError):
    pass


def chain_capacity(copies, k):
    """Number of problem edges a chain of ``copies + 1`` nodes can host."""
    if copies == 0:
        return k
    return 2 * (k - 1) + (copies - 1) * (k - 2)


def required_copies(max_degree, k):
    """Smallest copy count ``C`` whose chain hosts ``max_degree`` edges."""
    if k < 3:
        raise InvalidBoundError(f"degree bound must be >= 3, got {k}")
    if max_degree <= k:
        return 0
    # capacity(C) = 2(k-1) + (C-1)(k-2) >= d
    return 1 + max(0, math.ceil((max_degree - 2 * (k - 1)) / (k - 2)))


def degree_bound_for_copies(max_degree, chain_length):
    """Smallest ``k`` for which sparsify yields chains of ``chain_length`` nodes."""
    if chain_length < 1:
        raise InvalidBoundError("chain length must be >= 1")
    for k in range(3, max(max_degree, 3) + 1):
        if required_copies(max_degree, k) == chain_length - 1:
            return k
    if chain_length == 1:
        return max(max_degree, 3)
    raise InvalidBoundError(
        f"no degree bound gives {chain_length} nodes per chain for max degree {max_degree}"
    )


@dataclass(frozen=True, eq=False)
class SparseEmbedding:
    physical: IsingModel
    logical_n: int
    copy_map: tuple
    w0: float
    k: int

    @property
    def copies(self):
        return len(self.copy_map[0]) - 1 if self.copy_map else 0

    @property
    def copy_edges(self):
        return [(c[a], c[a + 1]) for c in self.copy_map for a in range(len(c) - 1)]

    @property
    def n_copy_edges(self):
        return sum(len(c) - 1 for c in self.copy_map)

    def owner(self):
        """Logical node of every physical node."""
        out = np.empty(self.physical.n, dtype=np.int64)
        for i, chain in enumerate(self.copy_map):
            out[list(chain)] = i
        return out


def sparsify(dense, k, w0):
    """Rewrite ``dense`` so that every physical node has degree <= ``k``."""
    if w0 <= 0:
        raise ValueError("copy edge strength w0 must be positive")
    C = required_copies(dense.max_degree(), k)
    n = dense.n
    copy_map = tuple(
        (i,) + tuple(n + i * C + c for c in range(C)) for i in range(n)
    )
    if C == 0:
        return SparseEmbedding(dense, n, copy_map, float(w0), int(k))

    host = {}
    for i in range(n):
        nbrs, _ = dense.neighbors(i)
        chain = copy_map[i]
        caps = [k - 1] + [k - 2] * (C - 1) + [k - 1]
        pos, used = 0, 0
        for j in sorted(nbrs.tolist()):
            while used >= caps[pos]:
                pos, used = pos + 1, 0
            host[(i, j)] = chain[pos]
            used += 1

    edges = {}
    for i, j, w in zip(dense.rows.tolist(), dense.cols.tolist(), dense.weights.tolist()):
        edges[(host[(i, j)], host[(j, i)])] = w
    for chain in copy_map:
        for a, b in zip(chain, chain[1:]):
            edges[(a, b)] = float(w0)
    h = np.zeros(n * (C + 1))
    h[:n] = dense.h
    return SparseEmbedding(IsingModel(n * (C + 1), edges, h), n, copy_map, float(w0), int(k))


def logical_model(embedding):
    """Recover the dense model by merging each chain back into one node."""
    owner = embedding.owner()
    copy = set(embedding.copy_edges)
    edges = {}
    p = embedding.physical
    for a, b, w in zip(p.rows.tolist(), p.cols.tolist(), p.weights.tolist()):
        if (a, b) in copy or (b, a) in copy:
            continue
        edges[(int(owner[a]), int(owner[b]))] = w
    h = np.zeros(embedding.logical_n)
    np.add.at(h, owner, p.h)
    return IsingModel(embedding.logical_n, edges, h)


def embed_state(embedding, logical):
    """Physical state in which every copy carries its logical spin."""
    s = as_spins(logical, embedding.logical_n)
    return s[embedding.owner()]


class DecodeKind(str, Enum):
    COIN_FLIP = "coin_flip"
    MAJORITY_VOTE = "majority_vote"


@dataclass(frozen=True)
class DecodePolicy:
    """How disagreeing copies are resolved.

    Majority vote falls back to a coin flip on ties.  Coin flips for sample
    ``s`` and logical node ``i`` use ``uniform(seed, s, i, DECODE) < 1/2``.
    """

    kind: DecodeKind = DecodeKind.COIN_FLIP
    seed: int = 0

    @classmethod
    def for_copies(cls, chain_length, seed=0):
        kind = DecodeKind.COIN_FLIP if chain_length <= 2 else DecodeKind.MAJORITY_VOTE
        return cls(kind, seed)


def _chain_matrix(embedding):
    lengths = {len(c) for c in embedding.copy_map}
    if len(lengths) != 1:
        raise ValueError("embedding chains have unequal length")
    return np.array(embedding.copy_map, dtype=np.int64)


def decode_many(embedding, physical, policy, first_draw=0):
    """Decode rows of ``physical``; row ``r`` uses coin-flip counter ``first_draw + r``."""
    phys = np.asarray(physical)
    if phys.ndim != 2 or phys.shape[1] != embedding.physical.n:
        raise DimensionError(
            f"physical states must have shape (k, {embedding.physical.n}), got {phys.shape}"
        )
    chains = _chain_matrix(embedding)
    vals = phys[:, chains].astype(np.int64)  # (samples, logical, chain)
    total = vals.sum(axis=2)
    L = chains.shape[1]
    out = np.where(total > 0, 1, -1).astype(np.int8)
    if policy.kind == DecodeKind.COIN_FLIP:
        undecided = np.abs(total) != L
    else:
        undecided = total == 0
    if undecided.any():
        rows, cols = np.nonzero(undecided)
        coins = _rng.uniform_pairs(policy.seed, rows + first_draw, cols, _rng.DECODE)
        out[rows, cols] = np.where(coins < 0.5, 1, -1)
    return out


def decode(embedding, physical, policy=DecodePolicy(), draw=0):
    phys = as_spins(physical, embedding.physical.n)
    return decode_many(embedding, phys[None, :], policy, first_draw=draw)[0]


def chain_breaks(embedding, physical):
    """Boolean ``(samples, logical)`` mask of non-unanimous chains."""
    phys = np.asarray(physical)
    if phys.ndim == 1:
        phys = phys[None, :]
    if phys.shape[1] != embedding.physical.n:
        raise DimensionError("physical state length does not match embedding")
    chains = _chain_matrix(embedding)
    vals = phys[:, chains].astype(np.int64)
    return np.abs(vals.sum(axis=2)) != chains.shape[1]


def chain_break_fraction(embedding, physical):
    """Fraction of logical nodes whose copies disagree (averaged over rows)."""
    return float(chain_breaks(embedding, physical).mean())


# --- embedding file format ---------------------------------------------------


def format_embedding(embedding):
    text = format_model(embedding.physical)
    lines = [f"copy {i} " + " ".join(map(str, c)) for i, c in enumerate(embedding.copy_map)]
    lines.append(f"meta w0 {embedding.w0!r} k {embedding.k}")
    return text + "\n".join(lines) + "\n"


def parse_embedding(text):
    physical, extra = parse_model(text)
    chains = {}
    w0 = k = None
    for tok in extra:
        if tok[0] == "copy":
            chains[int(tok[1])] = tuple(int(t) for t in tok[2:])
        elif tok[0] == "meta":
            kv = dict(zip(tok[1::2], tok[2::2]))
            w0, k = float(kv["w0"]), int(kv["k"])
        else:
            raise ValueError(f"unknown record {tok[0]!r}")
    if w0 is None:
        raise ValueError("missing meta line")
    copy_map = tuple(chains[i] for i in range(len(chains)))
    return SparseEmbedding(physical, len(copy_map), copy_map, w0, k)


def save_embedding(embedding, path):
    Path(path).write_text(format_embedding(embedding))


def load_embedding(path):
    return parse_embedding(Path(path).read_text())
