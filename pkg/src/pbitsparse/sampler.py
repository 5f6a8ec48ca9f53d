"""Gibbs sampling, chromatic sweeps and simulated annealing for p-bits.

A p-bit update sets ``m_i = +1`` with probability ``(1 + tanh(beta I_i)) / 2``
where ``I_i = sum_j J_ij m_j + h_i``.  The uniform consumed by node ``i`` in
sweep ``t`` is ``uniform(seed, t, i, UPDATE)`` (see :mod:`pbitsparse.rng`),
so sequential and chromatic kernels draw the same number for the same cell.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

import numpy as np
from numba import njit

from . import rng as _rng
from .ising import DimensionError, as_spins, energies, state_to_string


class ColoringError(ValueError):
    pass


# --- coloring ----------------------------------------------------------------


@dataclass(frozen=True)
class SweepPlan:
    """Color classes in update order; nodes inside a class share no edge."""

    colors: tuple

    def __post_init__(self):
        object.__setattr__(self, "colors", tuple(tuple(int(v) for v in c) for c in self.colors))

    @property
    def n_colors(self):
        return len(self.colors)

    def check(self, model):
        seen = np.zeros(model.n, dtype=bool)
        label = np.full(model.n, -1)
        for c, nodes in enumerate(self.colors):
            for v in nodes:
                if not 0 <= v < model.n or seen[v]:
                    raise ColoringError(f"node {v} missing, repeated or out of range")
                seen[v] = True
                label[v] = c
        if not seen.all():
            raise ColoringError("color classes do not cover every node")
        clash = label[model.rows] == label[model.cols]
        if clash.any():
            e = int(np.flatnonzero(clash)[0])
            raise ColoringError(f"edge ({model.rows[e]}, {model.cols[e]}) inside one color class")

    @classmethod
    def sequential(cls, n):
        return cls((tuple(range(n)),))


def color_graph(model):
    """Greedy coloring, largest degree first (ties by node index)."""
    deg = model.degrees()
    order = sorted(range(model.n), key=lambda v: (-deg[v], v))
    color = np.full(model.n, -1, dtype=np.int64)
    for v in order:
        nbrs, _ = model.neighbors(v)
        taken = set(color[nbrs].tolist())
        c = 0
        while c in taken:
            c += 1
        color[v] = c
    k = int(color.max()) + 1 if model.n else 0
    return SweepPlan(tuple(tuple(np.flatnonzero(color == c).tolist()) for c in range(k)))


# --- fixed point -------------------------------------------------------------


@dataclass(frozen=True)
class FixedPointSpec:
    """Signed fixed point: 1 sign bit, ``integer_bits``, ``fraction_bits``."""

    integer_bits: int = 6
    fraction_bits: int = 3

    @property
    def step(self):
        return 2.0 ** -self.fraction_bits

    @property
    def max_value(self):
        return 2.0**self.integer_bits - self.step


def quantize_values(x, spec=FixedPointSpec()):
    """Round to the grid (ties away from zero) and clamp.  Returns ``(q, n_clamped)``."""
    x = np.asarray(x, dtype=np.float64)
    scaled = x / spec.step
    q = np.sign(scaled) * np.floor(np.abs(scaled) + 0.5) * spec.step
    over = np.abs(q) > spec.max_value
    q = np.where(over, np.sign(q) * spec.max_value, q)
    return q, int(over.sum())


@dataclass(frozen=True)
class QuantizedCouplings:
    weights: np.ndarray  # aligned with model.rows / model.cols
    h: np.ndarray
    clamped: int


def quantize_weights(model, beta, spec=FixedPointSpec()):
    w, cw = quantize_values(beta * model.weights, spec)
    h, ch = quantize_values(beta * model.h, spec)
    return QuantizedCouplings(w, h, cw + ch)


def _scaled(model, beta, fixed_point):
    w = beta * np.asarray(model.adj_w)
    h = beta * np.asarray(model.h)
    if fixed_point is not None:
        w, _ = quantize_values(w, fixed_point)
        h, _ = quantize_values(h, fixed_point)
    return np.ascontiguousarray(w), np.ascontiguousarray(h)


# --- kernels -----------------------------------------------------------------


@njit(cache=True, nogil=True)
def _sweeps(indptr, indices, w, h, state, class_ptr, class_nodes, simultaneous,
            k0, k1, sweep0, nsweeps, record_from, rec):
    buf = np.empty(class_nodes.shape[0], dtype=np.int8)
    nrec = 0
    for t in range(nsweeps):
        step = sweep0 + t
        for c in range(class_ptr.shape[0] - 1):
            a, b = class_ptr[c], class_ptr[c + 1]
            for q in range(a, b):
                i = class_nodes[q]
                acc = h[i]
                for p in range(indptr[i], indptr[i + 1]):
                    acc += w[p] * state[indices[p]]
                u = _rng.uniform(k0, k1, step, i, 1)
                v = np.int8(1) if u < 0.5 * (1.0 + np.tanh(acc)) else np.int8(-1)
                if simultaneous:
                    buf[q] = v
                else:
                    state[i] = v
            if simultaneous:
                for q in range(a, b):
                    state[class_nodes[q]] = buf[q]
        if t >= record_from:
            rec[nrec, :] = state
            nrec += 1


def _plan_arrays(plan):
    ptr = np.zeros(plan.n_colors + 1, dtype=np.int64)
    np.cumsum([len(c) for c in plan.colors], out=ptr[1:])
    nodes = np.array([v for c in plan.colors for v in c], dtype=np.int64)
    return ptr, nodes


def run_sweeps(model, state, beta, nsweeps, streams, plan=None, fixed_point=None, record=0):
    """Advance ``state`` in place by ``nsweeps`` sweeps at inverse temperature ``beta``.

    ``plan=None`` selects sequential index-order updates.  The states after
    the last ``record`` sweeps are returned as an ``(record, n)`` array.
    """
    if plan is None:
        ptr = np.array([0, model.n], dtype=np.int64)
        nodes = np.arange(model.n, dtype=np.int64)
        simultaneous = False
    else:
        plan.check(model)
        ptr, nodes = _plan_arrays(plan)
        simultaneous = True
    record = min(int(record), int(nsweeps))
    rec = np.empty((record, model.n), dtype=np.int8)
    w, h = _scaled(model, beta, fixed_point)
    k0, k1 = streams.key
    _sweeps(model.indptr, model.indices, w, h, state, ptr, nodes, simultaneous,
            k0, k1, np.uint64(streams.sweep), int(nsweeps), int(nsweeps) - record, rec)
    streams.sweep += int(nsweeps)
    return rec


def _working_copy(model, state):
    return np.array(as_spins(state, model.n), dtype=np.int8)


def gibbs_sweep_sequential(model, state, beta, streams, fixed_point=None):
    """One sweep visiting nodes ``0..n-1`` in order; returns the new state."""
    s = _working_copy(model, state)
    run_sweeps(model, s, beta, 1, streams, None, fixed_point)
    return s


def gibbs_sweep_chromatic(model, state, beta, plan, streams, fixed_point=None):
    """One sweep updating each color class at once from the pre-class state."""
    s = _working_copy(model, state)
    run_sweeps(model, s, beta, 1, streams, plan, fixed_point)
    return s


def local_field(model, state, i):
    """``I_i = sum_j J_ij m_j + h_i``."""
    if not 0 <= i < model.n:
        raise IndexError(f"node {i} out of range")
    s = as_spins(state, model.n)
    nbrs, w = model.neighbors(i)
    return float(np.dot(w, s[nbrs]) + model.h[i])


def sample(model, beta, nsweeps, streams, plan=None, init=None, burn_in=0, fixed_point=None):
    """Fixed-temperature chain; returns the state after every post-burn-in sweep."""
    s = streams.random_spins(model.n) if init is None else _working_copy(model, init)
    if burn_in:
        run_sweeps(model, s, beta, burn_in, streams, plan, fixed_point)
    return run_sweeps(model, s, beta, nsweeps, streams, plan, fixed_point, record=nsweeps)


# --- annealing ---------------------------------------------------------------


@dataclass(frozen=True)
class AnnealSchedule:
    betas: tuple
    sweeps_per_beta: int
    readout_tail: int = 1

    def __post_init__(self):
        betas = tuple(float(b) for b in self.betas)
        object.__setattr__(self, "betas", betas)
        if not betas:
            raise ValueError("schedule needs at least one beta")
        if any(b1 <= b0 for b0, b1 in zip(betas, betas[1:])):
            raise ValueError("betas must be strictly increasing")
        if self.sweeps_per_beta < 1:
            raise ValueError("sweeps_per_beta must be >= 1")
        if not 1 <= self.readout_tail <= self.sweeps_per_beta:
            raise ValueError("readout_tail must lie in [1, sweeps_per_beta]")

    @property
    def total_sweeps(self):
        return len(self.betas) * self.sweeps_per_beta

    @classmethod
    def linear(cls, beta_start, beta_stop, steps, sweeps_per_beta, readout_tail=1):
        return cls(tuple(np.linspace(beta_start, beta_stop, steps)), sweeps_per_beta, readout_tail)


def reference_schedule(sweeps_per_beta=100_000, readout_tail=100):
    """beta = 0.125, 0.25, ..., 1.0."""
    return AnnealSchedule(tuple(0.125 * k for k in range(1, 9)), sweeps_per_beta, readout_tail)


@dataclass
class AnnealResult:
    best_state: np.ndarray
    best_energy: float
    tail_states: np.ndarray
    tail_energies: np.ndarray
    trajectory: list = field(default_factory=list)


def simulated_anneal(model, schedule, streams, plan=None, fixed_point=None, init=None,
                     trajectory_stride=None):
    """Anneal from a uniformly random state (unless ``init`` is given).

    The state after each of the last ``readout_tail`` sweeps at the final
    beta is kept; the lowest-energy one (first on ties) is the answer.
    ``trajectory_stride`` additionally records ``(sweep, beta, energy, state)``
    every that many sweeps.
    """
    s = streams.random_spins(model.n) if init is None else _working_copy(model, init)
    traj = []
    tail = None
    last = len(schedule.betas) - 1
    for b, beta in enumerate(schedule.betas):
        rec_n = schedule.readout_tail if b == last else 0
        if trajectory_stride:
            done = 0
            while done < schedule.sweeps_per_beta:
                chunk = min(trajectory_stride, schedule.sweeps_per_beta - done)
                keep = max(0, rec_n - (schedule.sweeps_per_beta - done - chunk))
                rec = run_sweeps(model, s, beta, chunk, streams, plan, fixed_point, record=keep)
                if keep:
                    tail = rec if tail is None else np.concatenate([tail, rec])
                done += chunk
                traj.append((streams.sweep, beta, float(energies(model, s[None, :])[0]), state_to_string(s)))
        else:
            rec = run_sweeps(model, s, beta, schedule.sweeps_per_beta, streams, plan, fixed_point, record=rec_n)
            if rec_n:
                tail = rec
    tail_e = energies(model, tail)
    best = int(np.argmin(tail_e))
    return AnnealResult(tail[best].copy(), float(tail_e[best]), tail, tail_e, traj)


def write_trajectory(path, trajectory):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sweep", "beta", "energy", "state"])
        for row in trajectory:
            w.writerow([row[0], repr(row[1]), repr(row[2]), row[3]])


# --- cost model --------------------------------------------------------------


class Topology(str, Enum):
    ALL_TO_ALL = "all_to_all"
    SPARSE = "sparse"


def sweep_cost(model, plan, topology, reference_n=100):
    """Clock cycles per Monte Carlo sweep and relative sweep frequency.

    All-to-all hardware updates one p-bit per cycle through an adder whose
    delay grows like N, so frequency falls as ``(reference_n / N)**2``.
    A colored sparse graph updates a whole class per cycle at fixed
    frequency.  The frequency is an exact :class:`~fractions.Fraction`.
    """
    topology = Topology(topology)
    if topology is Topology.ALL_TO_ALL:
        n = model.n
        return n, Fraction(reference_n, n) ** 2
    if plan is None:
        raise ValueError("sparse cost needs a coloring")
    return plan.n_colors, Fraction(1)
