"""Ising models, energies, Max-Cut instances and exhaustive oracles.

Energy convention::

    E(m) = -sum_{i<j} J_ij m_i m_j - sum_i h_i m_i,   m_i in {-1, +1}

Spin states are plain ``int8`` numpy arrays.  When a state has to be
identified with an integer (enumeration, histograms) bit ``i`` of the
index is 1 iff ``m_i = +1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from . import rng as _rng

BRUTE_FORCE_MAX_N = 24


class DimensionError(ValueError):
    pass


class CapacityError(ValueError):
    """Problem too large for an exhaustive oracle."""


class DegenerateInputError(ValueError):
    pass


class IsingModel:
    """Undirected weighted graph ``J`` plus biases ``h``.

    Couplings are kept as canonical ``(i, j)`` pairs with ``i < j`` in three
    parallel arrays (``rows``, ``cols``, ``weights``) sorted row-major, and
    mirrored into a CSR adjacency for O(degree) neighbor sums.  Instances
    are immutable; all arrays are flagged read-only.
    """

    __slots__ = ("n", "rows", "cols", "weights", "h", "indptr", "indices", "adj_w", "_lookup")

    def __init__(self, n, couplings=None, h=None):
        n = int(n)
        if n < 1:
            raise ValueError("model needs at least one node")
        acc = {}
        for (i, j), w in dict(couplings or {}).items():
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-coupling on node {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise IndexError(f"edge ({i}, {j}) outside 0..{n - 1}")
            key = (i, j) if i < j else (j, i)
            acc[key] = acc.get(key, 0.0) + float(w)
        acc = {k: w for k, w in acc.items() if w != 0.0}
        keys = sorted(acc)
        self.n = n
        self.rows = _frozen(np.array([k[0] for k in keys], dtype=np.int64))
        self.cols = _frozen(np.array([k[1] for k in keys], dtype=np.int64))
        self.weights = _frozen(np.array([acc[k] for k in keys], dtype=np.float64))
        hv = np.zeros(n) if h is None else np.array(h, dtype=np.float64)
        if hv.shape != (n,):
            raise DimensionError(f"bias vector has shape {hv.shape}, expected ({n},)")
        self.h = _frozen(hv)
        self._lookup = dict(zip(keys, (acc[k] for k in keys)))
        self._build_csr()

    def _build_csr(self):
        n = self.n
        src = np.concatenate([self.rows, self.cols])
        dst = np.concatenate([self.cols, self.rows])
        w = np.concatenate([self.weights, self.weights])
        order = np.lexsort((dst, src))
        counts = np.bincount(src, minlength=n)
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        self.indptr = _frozen(indptr)
        self.indices = _frozen(dst[order].astype(np.int64))
        self.adj_w = _frozen(w[order])

    @classmethod
    def from_dense(cls, J, h=None):
        J = np.asarray(J, dtype=np.float64)
        if J.ndim != 2 or J.shape[0] != J.shape[1]:
            raise DimensionError("J must be square")
        if not np.allclose(J, J.T):
            raise ValueError("J must be symmetric")
        if np.any(np.diag(J) != 0):
            raise ValueError("J must have a zero diagonal")
        i, j = np.nonzero(np.triu(J, 1))
        return cls(J.shape[0], {(a, b): J[a, b] for a, b in zip(i.tolist(), j.tolist())}, h)

    @property
    def n_edges(self):
        return len(self.weights)

    @property
    def couplings(self):
        return dict(self._lookup)

    def coupling(self, i, j):
        if i == j:
            return 0.0
        return self._lookup.get((i, j) if i < j else (j, i), 0.0)

    def neighbors(self, i):
        s, e = self.indptr[i], self.indptr[i + 1]
        return self.indices[s:e], self.adj_w[s:e]

    def degrees(self):
        return np.diff(self.indptr)

    def max_degree(self):
        return int(self.degrees().max()) if self.n else 0

    def dense(self):
        J = np.zeros((self.n, self.n))
        J[self.rows, self.cols] = self.weights
        J[self.cols, self.rows] = self.weights
        return J

    def with_biases(self, h):
        return IsingModel(self.n, self._lookup, h)

    def __eq__(self, other):
        if not isinstance(other, IsingModel):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.cols, other.cols)
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.h, other.h)
        )

    __hash__ = None

    def __repr__(self):
        return f"IsingModel(n={self.n}, edges={self.n_edges})"


def _frozen(a):
    a.setflags(write=False)
    return a


def as_spins(state, n=None):
    """Validate and convert to an ``int8`` array of +-1 values."""
    s = np.asarray(state)
    if s.ndim != 1:
        raise DimensionError("a spin state is one-dimensional")
    if n is not None and s.shape[0] != n:
        raise DimensionError(f"state has {s.shape[0]} spins, model has {n}")
    if not np.all((s == 1) | (s == -1)):
        raise ValueError("spin values must be +1 or -1")
    return s.astype(np.int8)


def state_to_string(state):
    return "".join("+" if v > 0 else "-" for v in state)


def string_to_state(text):
    try:
        return np.array([{"+": 1, "-": -1}[c] for c in text.strip()], dtype=np.int8)
    except KeyError as exc:
        raise ValueError(f"bad spin character {exc.args[0]!r}") from None


def index_to_states(idx, n):
    """Rows of spins for integer state indices (bit i set <=> m_i = +1)."""
    idx = np.asarray(idx, dtype=np.int64)
    bits = (idx[..., None] >> np.arange(n)) & 1
    return (2 * bits - 1).astype(np.int8)


def states_to_index(states):
    states = np.asarray(states)
    return ((states > 0).astype(np.int64) << np.arange(states.shape[-1])).sum(axis=-1)


def energy(model, state):
    s = as_spins(state, model.n).astype(np.float64)
    return float(-np.dot(model.weights, s[model.rows] * s[model.cols]) - np.dot(model.h, s))


def energies(model, states):
    """Vectorised :func:`energy` over rows of ``states``."""
    s = np.asarray(states, dtype=np.float64)
    if s.ndim != 2 or s.shape[1] != model.n:
        raise DimensionError("states must have shape (k, n)")
    return -(s[:, model.rows] * s[:, model.cols]) @ model.weights - s @ model.h


def cut_value(model, state):
    """Sum over edges of ``J_ij (m_i m_j - 1) / 2``.

    With unit antiferromagnetic weights (``J = -1``) this is the number of
    cut edges.
    """
    s = as_spins(state, model.n).astype(np.float64)
    return float(np.dot(model.weights, s[model.rows] * s[model.cols] - 1.0) / 2.0)


def cut_values(model, states):
    s = np.asarray(states, dtype=np.float64)
    return ((s[:, model.rows] * s[:, model.cols]) - 1.0) @ model.weights / 2.0


def graph_density(model):
    if model.n < 2:
        raise DegenerateInputError("density needs at least two nodes")
    return 2.0 * model.n_edges / (model.n * (model.n - 1))


@dataclass(frozen=True)
class InstanceSpec:
    """Erdos-Renyi Max-Cut instance with unit weights ``W_ij = -J_ij = 1``."""

    n: int
    edge_probability: float = 0.75
    seed: int = 0
    weight: float = -1.0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if not 0.0 <= self.edge_probability <= 1.0:
            raise ValueError("edge_probability must lie in [0, 1]")


def generate_er_maxcut(spec):
    """Draw an ER(n, p) graph with ``J = -1`` on every edge and ``h = 0``.

    Pairs are visited row-major (``(0,1), (0,2), ..., (1,2), ...``); pair
    number ``t`` keeps its edge iff ``uniform(seed, t, 0, INIT) < p``.
    """
    n = spec.n
    iu, ju = np.triu_indices(n, 1)
    u = _rng.uniform_grid(spec.seed, np.arange(len(iu)), [0], _rng.INIT)[:, 0]
    keep = u < spec.edge_probability
    return IsingModel(n, {(a, b): spec.weight for a, b in zip(iu[keep].tolist(), ju[keep].tolist())})


# --- exhaustive oracles ------------------------------------------------------


@njit(cache=True, nogil=True)
def _gray_energies(n, indptr, indices, adj_w, h, out):
    # start at all -1 (index 0), flip bit g at step t along the Gray code
    m = -np.ones(n)
    field = np.zeros(n)
    e = 0.0
    for i in range(n):
        acc = h[i]
        for p in range(indptr[i], indptr[i + 1]):
            acc += adj_w[p] * m[indices[p]]
        field[i] = acc
    for i in range(n):
        e -= 0.5 * (field[i] - h[i]) * m[i] + h[i] * m[i]
    out[0] = e
    idx = 0
    for t in range(1, 1 << n):
        g = 0
        while not (t >> g) & 1:
            g += 1
        e += 2.0 * m[g] * field[g]
        m[g] = -m[g]
        for p in range(indptr[g], indptr[g + 1]):
            field[indices[p]] += 2.0 * adj_w[p] * m[g]
        idx ^= 1 << g
        out[idx] = e


def all_energies(model, limit=BRUTE_FORCE_MAX_N):
    """Energy of every one of the ``2**n`` states, indexed by state index."""
    if model.n > limit:
        raise CapacityError(f"exhaustive enumeration limited to n <= {limit}, got {model.n}")
    out = np.empty(1 << model.n)
    _gray_energies(model.n, model.indptr, model.indices, model.adj_w, np.asarray(model.h), out)
    return out


def _argmin_set(model, values, sign):
    # candidates by incremental energies, then exact re-evaluation
    scale = 1.0 + np.abs(model.weights).sum() + np.abs(model.h).sum()
    best = values.min() if sign > 0 else values.max()
    cand = np.flatnonzero(np.abs(values - best) <= 1e-9 * scale)
    states = index_to_states(cand, model.n)
    exact = energies(model, states) if sign > 0 else cut_values(model, states)
    target = exact.min() if sign > 0 else exact.max()
    keep = np.abs(exact - target) <= 1e-12 * scale
    return float(target), states[keep]


def brute_force_ground(model):
    """Exact minimum energy and every state attaining it (``n <= 24``)."""
    return _argmin_set(model, all_energies(model), +1)


def brute_force_max_cut(model):
    """Exact maximum cut and every maximising state (``n <= 24``).

    Uses ``cut = -(E + sum_ij J_ij) / 2``, valid when ``h = 0``; biases
    are ignored.
    """
    unbiased = model if not np.any(model.h) else model.with_biases(None)
    cuts = -(all_energies(unbiased) + unbiased.weights.sum()) / 2.0
    return _argmin_set(unbiased, cuts, -1)


# --- instance file format ----------------------------------------------------


def format_model(model, comment=None):
    lines = []
    if comment:
        lines += [f"# {c}" for c in comment.splitlines()]
    lines.append(f"ising {model.n}")
    for i, v in enumerate(model.h):
        if v != 0.0:
            lines.append(f"h {i} {float(v)!r}")
    for i, j, w in zip(model.rows.tolist(), model.cols.tolist(), model.weights.tolist()):
        lines.append(f"e {i} {j} {w!r}")
    return "\n".join(lines) + "\n"


def parse_model(text):
    """Parse the text instance format.

    Returns ``(model, extra)`` where ``extra`` holds the token lists of
    every line the core format does not know (``copy``, ``port``, ...).
    """
    n = None
    h = {}
    edges = {}
    extra = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] == "ising":
                n = int(tok[1])
            elif tok[0] == "h":
                h[int(tok[1])] = float(tok[2])
            elif tok[0] == "e":
                i, j = int(tok[1]), int(tok[2])
                if i >= j:
                    raise ValueError("edge indices must satisfy i < j")
                edges[(i, j)] = float(tok[3])
            else:
                extra.append(tok)
        except (IndexError, ValueError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    if n is None:
        raise ValueError("missing 'ising <n>' header")
    hv = np.zeros(n)
    for i, v in h.items():
        hv[i] = v
    return IsingModel(n, edges, hv), extra


def save_model(model, path, comment=None):
    Path(path).write_text(format_model(model, comment))


def load_model(path):
    model, _ = parse_model(Path(path).read_text())
    return model
