"""Evaluation metrics and finite-size-scaling collapse."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .ising import CapacityError, all_energies, energies, index_to_states, state_to_string
from .sparsify import decode_many

BOLTZMANN_MAX_N = 20
PARISI_CONSTANT = 0.7632


class NoOverlapError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Distribution:
    """Probabilities over the ``2**n`` spin states, indexed as in :mod:`ising`."""

    n: int
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.shape != (1 << self.n,):
            raise ValueError(f"expected {1 << self.n} probabilities, got {p.shape}")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must be non-negative and sum to 1")
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_counts(cls, n, counts):
        counts = np.asarray(counts, dtype=np.float64)
        return cls(n, counts / counts.sum())

    def to_csv(self, path, include_zero=True):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["state", "probability"])
            for idx, pr in enumerate(self.probs):
                if include_zero or pr > 0:
                    w.writerow([state_to_string(index_to_states(idx, self.n)), repr(float(pr))])


def boltzmann_exact(model, beta):
    """``exp(-beta E) / Z`` over every state (``n <= 20``)."""
    if model.n > BOLTZMANN_MAX_N:
        raise CapacityError(f"exact Boltzmann limited to n <= {BOLTZMANN_MAX_N}")
    logw = -beta * all_energies(model)
    logw -= logw.max()
    w = np.exp(logw)
    return Distribution(model.n, w / math.fsum(w))


def empirical(states):
    states = np.asarray(states)
    if len(states) == 0:
        raise ValueError("no samples")
    n = states.shape[1]
    idx = ((states > 0).astype(np.int64) << np.arange(n)).sum(axis=1)
    return Distribution.from_counts(n, np.bincount(idx, minlength=1 << n))


def reduced_empirical(samples, embedding, policy, first_draw=0):
    """Histogram of decoded logical states."""
    samples = np.asarray(samples)
    if len(samples) == 0:
        raise ValueError("no samples")
    return empirical(decode_many(embedding, samples, policy, first_draw))


def kl_divergence(p_emp, p_exact):
    """``sum p_emp ln(p_emp / p_exact)``; empty bins of ``p_emp`` contribute 0."""
    if p_emp.n != p_exact.n:
        raise ValueError("distributions live on different state spaces")
    p, q = p_emp.probs, p_exact.probs
    nz = p > 0
    if np.any(q[nz] <= 0):
        raise ValueError("reference distribution vanishes where the empirical one does not")
    return max(0.0, float(np.sum(p[nz] * np.log(p[nz] / q[nz]))))


def success_probability(best_cuts, optimum, tol=1e-9):
    cuts = np.asarray(best_cuts, dtype=np.float64)
    if cuts.size == 0:
        raise ValueError("no trials")
    return float(np.mean(np.abs(cuts - optimum) <= tol))


def approximation_ratio(best_cuts, optimum):
    cuts = np.asarray(best_cuts, dtype=np.float64)
    if cuts.size == 0:
        raise ValueError("no trials")
    if optimum == 0:
        raise ValueError("optimum cut is zero")
    return float(np.mean(cuts / optimum))


def mean_stderr(values):
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        return float(v.mean()), 0.0
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def residual_from_energies(trial_energies, e_gs, n):
    """``(mean(E) - E_gs) / n`` and its standard error."""
    m, se = mean_stderr(np.asarray(trial_energies, dtype=np.float64) - e_gs)
    return m / n, se / n


def residual_energy(model, states, e_gs):
    """Residual energy per spin of logical ``states`` (rows) on ``model``."""
    return residual_from_energies(energies(model, np.atleast_2d(states)), e_gs, model.n)


def maxcut_expectation(n, p):
    """``(p/4) n^2 + P* sqrt(p/4) n^(3/2)`` for dense ER graphs."""
    if n < 2 or not 0.0 < p <= 1.0:
        raise ValueError("need n >= 2 and p in (0, 1]")
    return p / 4.0 * n * n + PARISI_CONSTANT * math.sqrt(p / 4.0) * n**1.5


# --- finite-size scaling -----------------------------------------------------


@dataclass
class ResidualCurve:
    n: int
    t: np.ndarray
    rho: np.ndarray
    stderr: np.ndarray = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.float64)
        self.rho = np.asarray(self.rho, dtype=np.float64)
        self.stderr = (np.zeros_like(self.rho) if self.stderr is None
                       else np.asarray(self.stderr, dtype=np.float64))
        if not (self.t.shape == self.rho.shape == self.stderr.shape):
            raise ValueError("t, rho and stderr must have equal length")
        if np.any(np.diff(self.t) <= 0) or np.any(self.t <= 0):
            raise ValueError("sweep counts must be positive and strictly increasing")

    @property
    def negative_points(self):
        return np.flatnonzero(self.rho < 0)


@dataclass
class CollapseResult:
    b: float
    mu: float
    quality: float
    curves_used: list
    points: list = field(default_factory=list)
    history: list = field(default_factory=list)


def _rescaled(curves, mu, b):
    out = []
    for c in curves:
        s = c.n**b
        out.append((np.log(c.t) - mu * math.log(c.n), c.rho * s, c.stderr * s))
    return out


def collapse_quality(curves, mu, b):
    """Mean normalised squared deviation from the other curves.

    Each point is compared with every other curve whose rescaled range
    brackets it, using linear interpolation (in log x) between that curve's
    two bracketing points.  Deviations are divided by ``dy^2 + dY^2``
    when both errors are available, otherwise left unnormalised.  Returns
    ``(quality, n_pairs)``; ``inf`` when no point overlaps another curve.
    """
    data = _rescaled(curves, mu, b)
    total, pairs = 0.0, 0
    for k, (xk, yk, ek) in enumerate(data):
        for m, (xm, ym, em) in enumerate(data):
            if m == k:
                continue
            inside = (xk >= xm[0]) & (xk <= xm[-1])
            if not inside.any():
                continue
            x = xk[inside]
            Y = np.interp(x, xm, ym)
            dY = np.interp(x, xm, em)
            var = ek[inside] ** 2 + dY**2
            d2 = (yk[inside] - Y) ** 2
            d2 = np.where(var > 0, d2 / np.where(var > 0, var, 1.0), d2)
            total += math.fsum(d2)
            pairs += int(inside.sum())
    if pairs == 0:
        return math.inf, 0
    return total / pairs, pairs


def fss_collapse(curves, b_fixed=-0.5, bracket=(0.0, 8.0), grid=161, tol=1e-4):
    """Fit ``mu`` in ``rho N^b ~ F(t N^-mu)`` with ``b`` held fixed.

    A grid scan over ``bracket`` locates the basin, then golden-section
    search refines inside the neighbouring grid cells.
    """
    sizes = sorted({c.n for c in curves})
    if len(sizes) < 3:
        raise ValueError("collapse needs curves for at least three sizes")
    lo, hi = bracket
    if not hi > lo:
        raise ValueError("empty bracket")
    history = []
    best_q, best_mu = math.inf, None

    def q(mu):
        nonlocal best_q, best_mu
        val = collapse_quality(curves, mu, b_fixed)[0]
        if val < best_q:
            best_q, best_mu = val, mu
        history.append(best_q)
        return val

    mus = np.linspace(lo, hi, grid)
    vals = [q(m) for m in mus]
    if not np.isfinite(best_q):
        raise NoOverlapError("no pair of curves overlaps for any mu in the bracket")
    i = int(np.argmin(vals))
    a, c = mus[max(i - 1, 0)], mus[min(i + 1, grid - 1)]
    invphi = (math.sqrt(5) - 1) / 2
    x1, x2 = c - invphi * (c - a), a + invphi * (c - a)
    f1, f2 = q(x1), q(x2)
    while c - a > tol:
        if f1 <= f2:
            c, x2, f2 = x2, x1, f1
            x1 = c - invphi * (c - a)
            f1 = q(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (c - a)
            f2 = q(x2)
    pts = []
    for cv, (x, y, e) in zip(curves, _rescaled(curves, best_mu, b_fixed)):
        pts += [(cv.n, float(np.exp(xx)), float(yy), float(ee)) for xx, yy, ee in zip(x, y, e)]
    return CollapseResult(b_fixed, float(best_mu), float(best_q), sizes, pts, history)
