"""Experiment configs and runners that write CSV tables.

Every runner is a pure function of its :class:`ExperimentConfig`: all
randomness is drawn from per-trial seeds derived from ``config.seed``, and
results are reduced in task order, so the output bytes do not depend on
``workers``.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import platform
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from . import __version__
from . import rng as _rng
from .analysis import (
    ResidualCurve,
    approximation_ratio,
    boltzmann_exact,
    fss_collapse,
    kl_divergence,
    mean_stderr,
    reduced_empirical,
    residual_from_energies,
    success_probability,
)
from .invlogic import build_multiplier, clamp_output, derive_gate, distinct_weights
from .ising import (
    InstanceSpec,
    IsingModel,
    brute_force_ground,
    brute_force_max_cut,
    cut_values,
    energies,
    generate_er_maxcut,
    graph_density,
)
from .sampler import AnnealSchedule, Topology, color_graph, sample, simulated_anneal, sweep_cost
from .sparsify import (
    DecodeKind,
    DecodePolicy,
    chain_break_fraction,
    decode_many,
    degree_bound_for_copies,
    sparsify,
)

KINDS = ("boltzmann_fa", "w0_sweep", "maxcut_grid", "residual_fss", "factor", "cost_model")
# fields that do not change results and are left out of the hash
UNHASHED = ("output", "workers")


class ConfigError(ValueError):
    pass


def _w0_default():
    return [0.5 * k for k in range(1, 17)]


@dataclass
class ExperimentConfig:
    kind: str = "w0_sweep"
    seed: int = 0
    output: str = "results.csv"
    workers: int = 1
    input: str = field(default=None, metadata={"type": str})
    # instance
    n: int = 16
    edge_probability: float = 0.75
    instance_seed: int = 0
    instances: int = 1
    trials: int = 100
    # sparsification
    k: int = field(default=None, metadata={"type": int})
    copies: int = 2
    w0: float = 4.0
    w0_grid: list = field(default_factory=_w0_default)
    decode: str = field(default=None, metadata={"type": str})
    # anneal schedule (linear in beta)
    beta_start: float = 0.125
    beta_stop: float = 1.0
    beta_steps: int = 8
    sweeps_per_beta: int = 1000
    readout_tail: int = 100
    # fixed-beta sampling
    beta: float = 1.0
    sweeps: int = 1_000_000
    burn_in: int = 1000
    chains: int = 5
    # finite-size scaling
    dense_sizes: list = field(default_factory=lambda: [16, 20, 24])
    sparse_sizes: list = field(default_factory=lambda: [12, 16, 20])
    copies_list: list = field(default_factory=lambda: [2])
    t_grid: list = field(default_factory=lambda: [8 * 2**j for j in range(8)])
    b: float = -0.5
    bracket: list = field(default_factory=lambda: [-2.0, 8.0])
    synthetic: bool = False
    synthetic_mu: float = 3.0
    # factoring
    semiprime: int = 35
    n_bits: int = 3
    max_fanout: int = 5
    # cost model
    n_grid: list = field(default_factory=lambda: list(range(70, 131, 10)))
    reference_n: int = 100
    # ratio of desk-scale sweeps to the published runs
    scale_factor: float = 0.01

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        kind = data.get("kind", cls.kind)
        merged = dict(KIND_DEFAULTS.get(kind, {}))
        merged.update(data)
        cfg = cls(**merged)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path, overrides=None):
        try:
            data = json.loads(Path(path).read_text()) if path else {}
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        data.update(overrides or {})
        return cls.from_dict(data)

    def to_dict(self):
        return dataclasses.asdict(self)

    @property
    def hash(self):
        d = {k: v for k, v in self.to_dict().items() if k not in UNHASHED}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def schedule(self, sweeps_per_beta=None, readout_tail=None):
        return AnnealSchedule.linear(
            self.beta_start, self.beta_stop, self.beta_steps,
            sweeps_per_beta or self.sweeps_per_beta,
            readout_tail or self.readout_tail,
        )

    def validate(self):
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.kind in KINDS, f"kind must be one of {', '.join(KINDS)}")
        need(isinstance(self.seed, int) and not isinstance(self.seed, bool), "seed must be an explicit integer")
        need(self.workers >= 1, "workers must be >= 1")
        need(self.trials >= 1 and self.instances >= 1, "trials and instances must be >= 1")
        need(self.copies >= 1, "copies (nodes per logical spin) must be >= 1")
        need(0.0 <= self.edge_probability <= 1.0, "edge_probability must lie in [0, 1]")
        need(self.decode in (None, "coin_flip", "majority_vote"), "decode must be coin_flip or majority_vote")
        need(self.beta_steps >= 1 and self.sweeps_per_beta >= 1, "schedule needs >= 1 step and sweep")
        need(self.beta_start > 0 and (self.beta_stop > self.beta_start or self.beta_steps == 1),
             "beta_stop must exceed beta_start > 0")
        need(1 <= self.readout_tail <= self.sweeps_per_beta, "readout_tail must lie in [1, sweeps_per_beta]")
        if self.kind in ("boltzmann_fa", "w0_sweep", "maxcut_grid"):
            need(len(self.w0_grid) > 0, "w0_grid must not be empty")
            need(all(w > 0 for w in self.w0_grid), "w0 values must be positive")
        if self.kind in ("boltzmann_fa", "w0_sweep"):
            need(self.sweeps >= 1 and self.chains >= 1, "sweeps and chains must be >= 1")
        if self.kind == "residual_fss":
            need(len(self.t_grid) > 0, "t_grid must not be empty")
            need(all(t > 0 and t % self.beta_steps == 0 for t in self.t_grid),
                 "every t_a must be a positive multiple of beta_steps")
            need(list(self.t_grid) == sorted(set(self.t_grid)), "t_grid must be strictly increasing")
            if self.synthetic or self.dense_sizes:
                need(len(set(self.dense_sizes)) >= 3, "need at least three dense sizes")
            if not self.synthetic and self.copies_list:
                need(len(set(self.sparse_sizes)) >= 3, "need at least three sparse sizes")
                need(all(c >= 2 for c in self.copies_list), "sparse copies must be >= 2")
            need(len(self.bracket) == 2 and self.bracket[1] > self.bracket[0], "bracket must be [lo, hi]")
        if self.kind == "factor":
            need(self.n_bits >= 2, "n_bits must be >= 2")
        if self.kind == "cost_model":
            need(len(self.n_grid) > 0 and all(v >= 2 for v in self.n_grid), "n_grid must hold sizes >= 2")
            need(self.k is None or self.k >= 3, "k must be >= 3")


KIND_DEFAULTS = {
    "boltzmann_fa": {"k": 3, "w0_grid": [4.0], "sweeps": 1_000_000, "scale_factor": 1.0},
    "w0_sweep": {"w0_grid": [1.0, 2.0, 3.0, 4.0, 4.5, 5.0, 6.0, 7.5], "scale_factor": 1.0},
    "maxcut_grid": {"n": 16, "trials": 100},
    "residual_fss": {"beta_start": 0.375, "beta_stop": 3.0, "instances": 20, "trials": 50,
                     "w0": 4.0, "readout_tail": 1},
    "factor": {"beta_start": 0.25, "beta_stop": 2.0, "trials": 20},
    "cost_model": {"k": 51},
}


# --- plumbing ----------------------------------------------------------------


def parallel_map(fn, tasks, workers=1):
    """``[fn(t) for t in tasks]``, optionally on a thread pool (order kept)."""
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def meta_lines(config):
    return [
        f"kind={config.kind}",
        f"config_hash={config.hash}",
        f"seed={config.seed}",
        f"version=pbitsparse-{__version__} numpy-{np.__version__} numba-{numba.__version__} "
        f"python-{platform.python_version()}",
        f"rng={_rng.ALGORITHM}",
        f"scale_factor={config.scale_factor!r}",
        "config=" + json.dumps({k: v for k, v in config.to_dict().items() if k not in UNHASHED},
                               sort_keys=True, separators=(",", ":")),
    ]


def write_table(path, config, header, rows):
    """CSV with a ``# meta`` block; ``seed`` and ``config_hash`` are appended to each row."""
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True)
    with open(path, "w", newline="") as fh:
        for line in meta_lines(config):
            fh.write(f"# meta {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(header) + ["seed", "config_hash"])
        for r in rows:
            w.writerow([_fmt(v) for v in r] + [config.seed, config.hash])
    return path


def read_table(path):
    """Rows of a table written by :func:`write_table` as dicts of strings."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def sibling(path, suffix):
    p = Path(path)
    return p.with_name(f"{p.stem}_{suffix}{p.suffix or '.csv'}")


def _policy(config, chain_length, seed):
    if config.decode is None:
        return DecodePolicy.for_copies(chain_length, seed)
    return DecodePolicy(DecodeKind(config.decode), seed)


# --- Boltzmann fidelity of the sparsified full adder -------------------------


def run_boltzmann_fa(config):
    """KL and copy-conflict fraction of the sparsified full adder per W0."""
    logical = derive_gate("FULL_ADDER").model()
    exact = boltzmann_exact(logical, config.beta)
    k = config.k or 3

    def chain(task):
        wi, c = task
        emb = sparsify(logical, k, config.w0_grid[wi])
        st = _rng.Streams(_rng.derive_seed(config.seed, 1, wi, c))
        samples = sample(emb.physical, config.beta, config.sweeps, st, burn_in=config.burn_in)
        pol = _policy(config, len(emb.copy_map[0]), _rng.derive_seed(config.seed, 2, wi, c))
        emp = reduced_empirical(samples, emb, pol)
        return kl_divergence(emp, exact), chain_break_fraction(emb, samples), emb.physical.n

    tasks = [(wi, c) for wi in range(len(config.w0_grid)) for c in range(config.chains)]
    res = parallel_map(chain, tasks, config.workers)
    rows = []
    for wi, w0 in enumerate(config.w0_grid):
        part = res[wi * config.chains:(wi + 1) * config.chains]
        kl, kl_se = mean_stderr([r[0] for r in part])
        cf, cf_se = mean_stderr([r[1] for r in part])
        rows.append((float(w0), kl, kl_se, cf, cf_se, part[0][2], config.chains, config.sweeps))
    header = ["W0", "kl", "kl_stderr", "conflict_fraction", "conflict_stderr",
              "physical_n", "chains", "sweeps"]
    return header, rows


# --- Max-Cut success versus W0 -----------------------------------------------


def maxcut_trial_cuts(dense, config, w0=None, label=0):
    """Best logical cut found by each of ``config.trials`` anneals."""
    sched = config.schedule()
    if config.copies == 1:
        model, plan, emb = dense, None, None
    else:
        k = config.k or degree_bound_for_copies(dense.max_degree(), config.copies)
        emb = sparsify(dense, k, w0)
        model, plan = emb.physical, color_graph(emb.physical)

    def trial(t):
        st = _rng.Streams(_rng.derive_seed(config.seed, 1, t))
        res = simulated_anneal(model, sched, st, plan=plan)
        tail = res.tail_states
        if emb is not None:
            pol = _policy(config, len(emb.copy_map[0]), _rng.derive_seed(config.seed, 2, label, t))
            tail = decode_many(emb, tail, pol)
        return float(cut_values(dense, tail).max())

    return np.array(parallel_map(trial, range(config.trials), config.workers))


def run_maxcut_grid(config):
    dense = generate_er_maxcut(InstanceSpec(config.n, config.edge_probability, config.instance_seed))
    optimum = brute_force_max_cut(dense)[0]
    grid = [None] if config.copies == 1 else list(config.w0_grid)
    rows = []
    for wi, w0 in enumerate(grid):
        cuts = maxcut_trial_cuts(dense, config, w0, wi)
        succ = success_probability(cuts, optimum)
        ratio = approximation_ratio(cuts, optimum)
        ratio_se = mean_stderr(cuts / optimum)[1]
        succ_se = math.sqrt(succ * (1 - succ) / len(cuts))
        rows.append(("dense" if w0 is None else "sparse", 0.0 if w0 is None else float(w0),
                     succ, succ_se, ratio, ratio_se, optimum, config.trials))
    header = ["topology", "W0", "success_prob", "success_stderr", "approx_ratio",
              "approx_stderr", "optimum", "trials"]
    return header, rows


def run_w0_sweep(config):
    """W0 table: full-adder KL for ``w0_sweep``/``boltzmann_fa``, Max-Cut otherwise."""
    if config.kind == "maxcut_grid":
        return run_maxcut_grid(config)
    if config.kind in ("w0_sweep", "boltzmann_fa"):
        return run_boltzmann_fa(config)
    raise ConfigError(f"w0-sweep cannot run kind {config.kind!r}")


# --- residual energy and finite-size scaling ---------------------------------


def synthetic_scaling_function(x):
    return 1.0 / (1.0 + np.sqrt(x))


def synthetic_curves(sizes, t_grid, mu, b=-0.5, rel_err=0.01):
    """``rho = N^-b G(t N^-mu)`` with a 1% error bar on every point."""
    t = np.asarray(t_grid, dtype=float)
    out = []
    for n in sizes:
        rho = n ** (-b) * synthetic_scaling_function(t * float(n) ** (-mu))
        out.append(ResidualCurve(n, t, rho, rel_err * rho))
    return out


@dataclass
class _FssInstance:
    topology: str
    copies: int
    n: int
    index: int
    dense: IsingModel
    e_gs: float
    model: IsingModel = None
    plan: object = None
    embedding: object = None


def _fss_instance(config, topology, copies, n, i):
    dense = generate_er_maxcut(InstanceSpec(n, config.edge_probability,
                                            _rng.derive_seed(config.instance_seed, n, i)))
    e_gs = brute_force_ground(dense)[0]
    inst = _FssInstance(topology, copies, n, i, dense, e_gs)
    if topology == "dense":
        inst.model = dense
    else:
        k = degree_bound_for_copies(dense.max_degree(), copies)
        inst.embedding = sparsify(dense, k, config.w0)
        inst.model = inst.embedding.physical
        inst.plan = color_graph(inst.model)
    return inst


def residual_curves(config, topology, copies, sizes):
    """Mean instantaneous residual energy per spin at every ``t_a``."""
    insts = parallel_map(lambda a: _fss_instance(config, topology, copies, *a),
                         [(n, i) for n in sizes for i in range(config.instances)], config.workers)
    tag = 0 if topology == "dense" else copies

    def run(task):
        inst, t, r = task
        base = _rng.derive_seed(config.seed, tag, inst.n, inst.index)
        sched = config.schedule(sweeps_per_beta=t // config.beta_steps, readout_tail=1)
        res = simulated_anneal(inst.model, sched, _rng.Streams(_rng.derive_seed(base, 1, t, r)),
                               plan=inst.plan)
        state = res.tail_states[-1:]
        if inst.embedding is not None:
            pol = _policy(config, copies, _rng.derive_seed(base, 2, t, r))
            state = decode_many(inst.embedding, state, pol)
        return float(energies(inst.dense, state)[0]) - inst.e_gs

    tasks = [(inst, t, r) for inst in insts for t in config.t_grid for r in range(config.trials)]
    gaps = parallel_map(run, tasks, config.workers)
    curves = []
    per_t = config.trials
    per_inst = len(config.t_grid) * per_t
    for si, n in enumerate(sizes):
        rho, se = [], []
        for ti in range(len(config.t_grid)):
            vals = [gaps[(si * config.instances + i) * per_inst + ti * per_t + r]
                    for i in range(config.instances) for r in range(per_t)]
            m, s = residual_from_energies(vals, 0.0, n)
            rho.append(m)
            se.append(s)
        curves.append(ResidualCurve(n, config.t_grid, rho, se))
    return curves


def run_residual_fss(config):
    """Residual-energy curves and their collapse, per topology.

    Returns ``(curve_header, curve_rows, collapse_header, collapse_rows, results)``
    where ``results`` maps ``(topology, copies)`` to a :class:`CollapseResult`.
    """
    groups = []
    if config.synthetic:
        groups.append(("synthetic", 1, synthetic_curves(config.dense_sizes, config.t_grid,
                                                        config.synthetic_mu, config.b)))
    else:
        if config.dense_sizes:
            groups.append(("dense", 1, residual_curves(config, "dense", 1, config.dense_sizes)))
        for c in config.copies_list:
            groups.append(("sparse", c, residual_curves(config, "sparse", c, config.sparse_sizes)))
    curve_rows, coll_rows, results = [], [], {}
    for topo, c, curves in groups:
        for cv in curves:
            for t, r, s in zip(cv.t, cv.rho, cv.stderr):
                curve_rows.append((topo, c, cv.n, int(t), r, s, bool(r < 0)))
        res = fss_collapse(curves, config.b, tuple(config.bracket))
        results[(topo, c)] = res
        for n, x, y, dy in res.points:
            coll_rows.append((topo, c, res.mu, res.b, res.quality, n, x, y, dy))
    curve_header = ["topology", "copies", "N", "t_a", "rho_E", "stderr", "negative"]
    coll_header = ["topology", "copies", "mu", "b", "quality", "N", "x", "y", "dy"]
    return curve_header, curve_rows, coll_header, coll_rows, results


# --- factoring ---------------------------------------------------------------


def run_factor(config):
    """Anneal the clamped multiplier; returns trial table, summary table."""
    net = build_multiplier(config.n_bits, max_fanout=config.max_fanout)
    clamped = clamp_output(net, config.semiprime)
    reduced, _, offset = clamped.reduced()
    sched = config.schedule()

    def trial(t):
        res = simulated_anneal(reduced, sched, _rng.Streams(_rng.derive_seed(config.seed, 1, t)))
        full = clamped.expand(res.best_state)
        p, q = clamped.read_port(full, "p"), clamped.read_port(full, "q")
        return p, q, res.best_energy + offset

    out = parallel_map(trial, range(config.trials), config.workers)
    rows = [(t, p, q, p * q, p * q == config.semiprime, e) for t, (p, q, e) in enumerate(out)]
    found = sorted({(p, q) for _, p, q, _, ok, _ in rows if ok})
    weights = distinct_weights(net.model)
    summary = [(
        config.semiprime, config.n_bits, config.trials,
        sum(r[4] for r in rows) / config.trials,
        ";".join(f"{p}x{q}" for p, q in found),
        net.model.n, graph_density(net.model), len(weights),
        ";".join(_fmt(w) for w in weights), max(weights),
    )]
    trial_header = ["trial", "p", "q", "product", "success", "energy"]
    summary_header = ["semiprime", "n_bits", "trials", "success_rate", "factors", "pbits",
                      "density", "distinct_weights", "weights", "max_weight"]
    return trial_header, rows, summary_header, summary


# --- hardware cost model -----------------------------------------------------


def complete_graph(n, weight=-1.0):
    return IsingModel(n, {(i, j): weight for i in range(n) for j in range(i + 1, n)})


def run_cost_model(config):
    """Cycles per sweep for all-to-all hardware and for sparsified ``K_N`` masters."""
    k = config.k or 51

    def row(n):
        master = complete_graph(n)
        dense_c, dense_f = sweep_cost(master, None, Topology.ALL_TO_ALL, config.reference_n)
        emb = sparsify(master, k, config.w0)
        plan = color_graph(emb.physical)
        sparse_c, sparse_f = sweep_cost(emb.physical, plan, Topology.SPARSE, config.reference_n)
        chain = len(emb.copy_map[0])
        return [
            (n, "all_to_all", n, 1, n - 1, dense_c, float(dense_f)),
            (n, "sparse", emb.physical.n, chain, emb.physical.max_degree(), sparse_c, float(sparse_f)),
        ]

    rows = [r for rows in parallel_map(row, config.n_grid, config.workers) for r in rows]
    header = ["N", "topology", "physical_n", "chain_length", "max_degree", "cycles_per_mcs",
              "relative_frequency"]
    return header, rows


# --- entry point used by the CLI ---------------------------------------------


def run_experiment(config):
    """Run ``config`` and write its CSV file(s); returns the written paths."""
    out = config.output
    if config.kind in ("boltzmann_fa", "w0_sweep", "maxcut_grid"):
        return [write_table(out, config, *run_w0_sweep(config))]
    if config.kind == "residual_fss":
        ch, cr, kh, kr, _ = run_residual_fss(config)
        return [write_table(out, config, ch, cr), write_table(sibling(out, "collapse"), config, kh, kr)]
    if config.kind == "factor":
        th, tr, sh, sr = run_factor(config)
        return [write_table(out, config, th, tr), write_table(sibling(out, "summary"), config, sh, sr)]
    if config.kind == "cost_model":
        return [write_table(out, config, *run_cost_model(config))]
    raise ConfigError(f"unknown kind {config.kind!r}")
