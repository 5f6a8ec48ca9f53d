"""Invertible-logic Ising networks and the invertible multiplier.

Logical 1 is spin +1, logical 0 is spin -1.

Gate Hamiltonians are not hard-coded: :func:`derive_gate` searches the
integer grid ``|w| <= max_weight`` for biases and couplings whose ground
states are exactly the gate's truth table.  Linear equality constraints
(all truth-table rows at one energy) are solved for a subset of the
parameters, so only the free ones are enumerated; every grid point is
still covered.  Among all valid parameter vectors the first one is
returned in lexicographic order over ``(h_0..h_{n-1}, J_01, J_02, ...)``
with grid values ranked ``0, 1, -1, 2, -2, ...``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import lcm
from pathlib import Path

import numpy as np

from .ising import IsingModel, format_model, index_to_states, parse_model


class InfeasibleError(ValueError):
    pass


class WidthOverflowError(ValueError):
    """Value does not fit the available bit width."""


def _truth_table(name):
    if name == "AND":
        rows = [(a, b, a & b) for a in (0, 1) for b in (0, 1)]
        ports = ("A", "B", "C")
    elif name == "COPY":
        rows = [(0, 0), (1, 1)]
        ports = ("X", "Y")
    elif name == "FULL_ADDER":
        rows = []
        for a, b, c in itertools.product((0, 1), repeat=3):
            s = a + b + c
            rows.append((a, b, c, s & 1, s >> 1))
        ports = ("A", "B", "CIN", "S", "COUT")
    else:
        raise ValueError(f"unknown gate {name!r}")
    return ports, np.array([[2 * v - 1 for v in r] for r in rows], dtype=np.int8)


@dataclass(frozen=True, eq=False)
class GateLibraryEntry:
    name: str
    ports: tuple
    h: tuple
    J: dict
    ground_set: np.ndarray = field(repr=False)

    @property
    def n_spins(self):
        return len(self.ports)

    def model(self):
        return IsingModel(self.n_spins, self.J, np.array(self.h, dtype=float))


def _feature_matrix(n):
    """Rows: states; columns: -m_i then -m_i m_j, so E = features @ params."""
    states = index_to_states(np.arange(1 << n), n).astype(np.int64)
    pairs = list(itertools.combinations(range(n), 2))
    cols = [-states[:, i] for i in range(n)] + [-states[:, i] * states[:, j] for i, j in pairs]
    return states, pairs, np.stack(cols, axis=1)


def _rref(rows):
    """Reduced row echelon form over the rationals; returns (matrix, pivots)."""
    M = [[Fraction(int(v)) for v in r] for r in rows]
    pivots = []
    r = 0
    ncols = len(M[0]) if M else 0
    for c in range(ncols):
        p = next((i for i in range(r, len(M)) if M[i][c] != 0), None)
        if p is None:
            continue
        M[r], M[p] = M[p], M[r]
        piv = M[r][c]
        M[r] = [v / piv for v in M[r]]
        for i in range(len(M)):
            if i != r and M[i][c] != 0:
                f = M[i][c]
                M[i] = [a - f * b for a, b in zip(M[i], M[r])]
        pivots.append(c)
        r += 1
        if r == len(M):
            break
    return M[:r], pivots


def _rank_key(values):
    # 0, 1, -1, 2, -2, ...
    return 2 * np.abs(values) - (values > 0)


@lru_cache(maxsize=None)
def derive_gate(name, max_weight=2):
    """Smallest-first integer Hamiltonian whose ground set is the truth table."""
    if max_weight < 0:
        raise ValueError("max_weight must be non-negative")
    ports, truth = _truth_table(name)
    n = len(ports)
    states, pairs, F = _feature_matrix(n)
    idx = ((truth > 0).astype(np.int64) << np.arange(n)).sum(axis=1)
    in_truth = np.zeros(1 << n, dtype=bool)
    in_truth[idx] = True

    # equal energy on every truth-table row
    eq = F[idx[1:]] - F[idx[0]]
    R, pivots = _rref(eq.tolist())
    P = F.shape[1]
    free = [c for c in range(P) if c not in pivots]
    # pivot value = -sum_f R[row][f] * free_value
    den = lcm(*[v.denominator for row in R for v in row]) if R else 1
    dep = np.array([[-int(row[f] * den) for f in free] for row in R], dtype=np.int64).reshape(len(R), len(free))

    grid = np.arange(-max_weight, max_weight + 1, dtype=np.int64)
    sols = []
    # chunk over the first free parameter to bound memory
    rest = len(free) - 1
    for first in grid:
        if rest > 0:
            mesh = np.array(np.meshgrid(*([grid] * rest), indexing="ij")).reshape(rest, -1).T
            cand = np.column_stack([np.full(len(mesh), first), mesh])
        else:
            cand = np.array([[first]], dtype=np.int64)
        scaled = cand @ dep.T if len(R) else np.zeros((len(cand), 0), dtype=np.int64)
        ok = np.all(scaled % den == 0, axis=1)
        depv = scaled // den
        ok &= np.all(np.abs(depv) <= max_weight, axis=1)
        if not ok.any():
            continue
        cand, depv = cand[ok], depv[ok]
        params = np.empty((len(cand), P), dtype=np.int64)
        params[:, free] = cand
        params[:, pivots] = depv
        E = params @ F.T
        e0 = E[:, idx[0]]
        good = np.all(E[:, ~in_truth] > e0[:, None], axis=1)
        if good.any():
            sols.append(params[good])
    if not sols:
        raise InfeasibleError(f"no {name} Hamiltonian with |w| <= {max_weight}")
    sols = np.concatenate(sols)
    keys = _rank_key(sols)
    best = sols[np.lexsort(keys.T[::-1])[0]]
    h = tuple(int(v) for v in best[:n])
    J = {pr: int(v) for pr, v in zip(pairs, best[n:]) if v != 0}
    return GateLibraryEntry(name, ports, h, J, truth)


def default_library(max_weight=2):
    return {name: derive_gate(name, max_weight) for name in ("AND", "FULL_ADDER", "COPY")}


# --- circuits ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CircuitNet:
    """A composed invertible circuit.

    ``model`` is the sum of all gate Hamiltonians over the global spins
    (constant inputs already absorbed).  ``clamps`` fixes spins to +-1;
    clamped spins are dropped from :meth:`reduced`.
    """

    model: IsingModel
    gates: tuple
    ports: dict
    clamps: dict

    def clamp(self, values):
        merged = dict(self.clamps)
        merged.update({int(k): int(v) for k, v in values.items()})
        for v in merged.values():
            if v not in (-1, 1):
                raise ValueError("clamp values must be +1 or -1")
        return CircuitNet(self.model, self.gates, self.ports, merged)

    def unclamp(self, spins):
        spins = set(int(s) for s in spins)
        return CircuitNet(self.model, self.gates, self.ports,
                          {k: v for k, v in self.clamps.items() if k not in spins})

    def free_spins(self):
        return np.array([i for i in range(self.model.n) if i not in self.clamps], dtype=np.int64)

    def reduced(self):
        """Model over free spins with clamped neighbors folded into biases.

        Returns ``(model, free_index, offset)`` where ``offset`` is the
        constant energy contributed by clamped-clamped couplings and clamped
        biases, so ``E_full(s) = E_reduced(s[free]) + offset``.
        """
        free = self.free_spins()
        pos = {int(v): a for a, v in enumerate(free)}
        h = np.array([self.model.h[v] for v in free], dtype=float)
        edges = {}
        offset = 0.0
        for v, val in self.clamps.items():
            offset -= self.model.h[v] * val
        for i, j, w in zip(self.model.rows.tolist(), self.model.cols.tolist(), self.model.weights.tolist()):
            ci, cj = i in self.clamps, j in self.clamps
            if ci and cj:
                offset -= w * self.clamps[i] * self.clamps[j]
            elif ci:
                h[pos[j]] += w * self.clamps[i]
            elif cj:
                h[pos[i]] += w * self.clamps[j]
            else:
                edges[(pos[i], pos[j])] = w
        return IsingModel(len(free), edges, h), free, offset

    def expand(self, free_state):
        """Full-length state from a state over the free spins."""
        full = np.empty(self.model.n, dtype=np.int8)
        for k, v in self.clamps.items():
            full[k] = v
        full[self.free_spins()] = free_state
        return full

    def read_port(self, state, port):
        bits = [(int(state[i]) + 1) // 2 for i in self.ports[port]]
        return sum(b << k for k, b in enumerate(bits))


class _Builder:
    def __init__(self):
        self.n = 0
        self.h = []
        self.edges = {}
        self.gates = []

    def spin(self):
        self.h.append(0.0)
        self.n += 1
        return self.n - 1

    def add_gate(self, entry, binding):
        # a ("const", v) binding is folded into the neighbours' biases
        const = {p: b[1] for p, b in enumerate(binding) if isinstance(b, tuple)}
        for p, b in enumerate(binding):
            if p in const:
                continue
            self.h[b] += entry.h[p]
        for (a, b), w in entry.J.items():
            if a in const and b in const:
                continue
            if a in const:
                self.h[binding[b]] += w * const[a]
            elif b in const:
                self.h[binding[a]] += w * const[b]
            else:
                key = tuple(sorted((binding[a], binding[b])))
                self.edges[key] = self.edges.get(key, 0.0) + w
        self.gates.append((entry.name, tuple(binding)))

    def model(self):
        return IsingModel(self.n, self.edges, np.array(self.h))


def _fanout(b, copy_gate, spin, uses, max_fanout):
    """Representatives of ``spin`` for each of ``uses`` consumers.

    Consumers are split into balanced groups of at most ``max_fanout``;
    each extra group gets a buffer spin chained to the previous one.
    """
    groups = -(-uses // max_fanout)
    reps = [spin]
    for _ in range(groups - 1):
        nxt = b.spin()
        b.add_gate(copy_gate, (reps[-1], nxt))
        reps.append(nxt)
    bounds = np.linspace(0, uses, groups + 1).round().astype(int)
    out = []
    for g in range(groups):
        out += [reps[g]] * int(bounds[g + 1] - bounds[g])
    return out, reps


def build_multiplier(n_bits, library=None, max_fanout=5):
    """Array multiplier ``F = p * q`` for ``n_bits``-bit factors.

    Partial products ``p_i AND q_j`` are summed row by row with ripple-carry
    adders; two-input positions use a full adder whose carry-in is the
    constant logical 0.  A factor bit drives at most ``max_fanout`` AND
    gates; beyond that it is buffered through COPY gates, which keeps every
    bias at most ``max_fanout`` in magnitude.  The LSBs of ``p`` and ``q``
    (with their buffers) are clamped to 1.
    """
    if n_bits < 2:
        raise ValueError("n_bits must be >= 2")
    if max_fanout < 1:
        raise ValueError("max_fanout must be >= 1")
    lib = library or default_library()
    AND, FA, COPY = lib["AND"], lib["FULL_ADDER"], lib["COPY"]
    zero = ("const", -1)
    b = _Builder()
    p = [b.spin() for _ in range(n_bits)]
    q = [b.spin() for _ in range(n_bits)]
    p_use, q_use, lsb = [], [], []
    for bits, uses in ((p, p_use), (q, q_use)):
        for k, spin in enumerate(bits):
            out, reps = _fanout(b, COPY, spin, n_bits, max_fanout)
            uses.append(out)
            if k == 0:
                lsb += reps
    pp = {}
    for j in range(n_bits):
        for i in range(n_bits):
            out = b.spin()
            b.add_gate(AND, (p_use[i][j], q_use[j][i], out))
            pp[i, j] = out

    acc = {i: pp[i, 0] for i in range(n_bits)}
    for j in range(1, n_bits):
        carry = None
        for i in range(n_bits):
            wgt = i + j
            ins = [x for x in (pp[i, j], acc.get(wgt), carry) if x is not None]
            if len(ins) == 1:
                acc[wgt], carry = ins[0], None
                continue
            s, c = b.spin(), b.spin()
            a0, a1 = ins[0], ins[1]
            a2 = ins[2] if len(ins) == 3 else zero
            b.add_gate(FA, (a0, a1, a2, s, c))
            acc[wgt], carry = s, c
        if carry is not None:
            acc[n_bits + j] = carry
    F = [acc[w] for w in range(2 * n_bits)]
    ports = {"p": tuple(p), "q": tuple(q), "F": tuple(F)}
    return CircuitNet(b.model(), tuple(b.gates), ports, {s: 1 for s in lsb})


def clamp_output(net, semiprime):
    width = len(net.ports["F"])
    if semiprime < 0 or semiprime >= 1 << width:
        raise WidthOverflowError(f"{semiprime} does not fit in {width} output bits")
    return net.clamp({s: 1 if (semiprime >> k) & 1 else -1 for k, s in enumerate(net.ports["F"])})


def unclamp_output(net):
    return net.unclamp(net.ports["F"])


def pbit_count(n_bits, formulation):
    """p-bits for factoring two ``n_bits`` numbers.

    ``"dense"``: factor bits without the two fixed LSBs.  ``"invertible"``:
    spins of the built multiplier.
    """
    if n_bits < 2:
        raise ValueError("n_bits must be >= 2")
    if formulation == "dense":
        return 2 * (n_bits - 1)
    if formulation == "invertible":
        return build_multiplier(n_bits).model.n
    raise ValueError(f"unknown formulation {formulation!r}")


def distinct_weights(model):
    vals = np.concatenate([np.abs(model.weights), np.abs(model.h)])
    return sorted(set(vals[vals != 0].tolist()))


# --- netlist export ----------------------------------------------------------


def format_netlist(net):
    lines = [format_model(net.model).rstrip("\n")]
    for name in ("p", "q", "F"):
        lines.append(f"port {name} " + " ".join(map(str, net.ports[name])))
    for k in sorted(net.clamps):
        lines.append(f"clamp {k} {net.clamps[k]:+d}")
    return "\n".join(lines) + "\n"


def parse_netlist(text):
    model, extra = parse_model(text)
    ports, clamps = {}, {}
    for tok in extra:
        if tok[0] == "port":
            ports[tok[1]] = tuple(int(t) for t in tok[2:])
        elif tok[0] == "clamp":
            clamps[int(tok[1])] = int(tok[2])
        else:
            raise ValueError(f"unknown record {tok[0]!r}")
    return CircuitNet(model, (), ports, clamps)


def save_netlist(net, path):
    Path(path).write_text(format_netlist(net))
