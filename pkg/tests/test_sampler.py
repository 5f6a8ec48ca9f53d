import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pbitsparse.analysis import boltzmann_exact, empirical
from pbitsparse.invlogic import derive_gate
from pbitsparse.ising import (
    InstanceSpec,
    IsingModel,
    brute_force_max_cut,
    cut_values,
    energies,
    generate_er_maxcut,
)
from pbitsparse.rng import Streams
from pbitsparse.sampler import (
    AnnealSchedule,
    ColoringError,
    FixedPointSpec,
    SweepPlan,
    Topology,
    color_graph,
    gibbs_sweep_chromatic,
    gibbs_sweep_sequential,
    local_field,
    reference_schedule,
    quantize_values,
    quantize_weights,
    run_sweeps,
    sample,
    simulated_anneal,
    sweep_cost,
    write_trajectory,
)
from pbitsparse.sparsify import DecodePolicy, decode_many, degree_bound_for_copies, sparsify
from test_ising import models


def path(n):
    return IsingModel(n, {(i, i + 1): 1.0 for i in range(n - 1)})


def complete(n):
    return IsingModel(n, {(i, j): -1.0 for i in range(n) for j in range(i + 1, n)})


def tv(p, q):
    return 0.5 * np.abs(p - q).sum()


# --- coloring ------------------------------------------------------------------


def test_coloring_examples():
    assert color_graph(path(6)).n_colors == 2
    assert color_graph(complete(7)).n_colors == 7
    emb = sparsify(derive_gate("FULL_ADDER").model(), 3, 1.0)
    plan = color_graph(emb.physical)
    plan.check(emb.physical)
    assert plan.n_colors <= 4


@given(models(max_n=10))
def test_coloring_is_proper_and_bounded(m):
    plan = color_graph(m)
    plan.check(m)
    assert plan.n_colors <= m.max_degree() + 1
    assert color_graph(m) == plan


def test_improper_plans_rejected():
    m = path(3)
    with pytest.raises(ColoringError):
        SweepPlan(((0, 1), (2,))).check(m)
    with pytest.raises(ColoringError):
        SweepPlan(((0,), (2,))).check(m)
    with pytest.raises(ColoringError):
        SweepPlan(((0, 2), (1, 1))).check(m)
    with pytest.raises(ColoringError):
        gibbs_sweep_chromatic(m, [1, 1, 1], 1.0, SweepPlan(((0, 1, 2),)), Streams(0))


# --- local field ---------------------------------------------------------------


def test_local_field_examples():
    assert local_field(IsingModel(1, {}, [0.5]), [1], 0) == 0.5
    assert local_field(IsingModel(2, {(0, 1): 1.0}), [1, -1], 0) == -1.0
    with pytest.raises(IndexError):
        local_field(path(2), [1, 1], 2)
    fa = derive_gate("FULL_ADDER").model()
    s = np.array([1, -1, 1, 1, -1])
    ref = fa.dense() @ s + fa.h
    assert [local_field(fa, s, i) for i in range(5)] == pytest.approx(ref.tolist())


# --- sequential sweeps ---------------------------------------------------------


def test_infinite_temperature_is_fair():
    out = sample(path(5), 0.0, 10_000, Streams(2))
    assert np.all(np.abs((out == 1).mean(axis=0) - 0.5) <= 0.02)


def test_isolated_spin_closed_form():
    out = sample(IsingModel(1, {}, [1.0]), 1.0, 100_000, Streams(3))
    assert (out == 1).mean() == pytest.approx((1 + math.tanh(1)) / 2, abs=0.01)


def test_full_adder_matches_boltzmann():
    fa = derive_gate("FULL_ADDER").model()
    out = sample(fa, 1.0, 1_000_000, Streams(4), burn_in=100)
    assert tv(empirical(out).probs, boltzmann_exact(fa, 1.0).probs) <= 0.02


def test_two_node_detailed_balance():
    m = IsingModel(2, {(0, 1): 0.7}, [0.3, -0.2])
    out = sample(m, 1.3, 1_000_000, Streams(5))
    assert tv(empirical(out).probs, boltzmann_exact(m, 1.3).probs) <= 0.01


def test_sequential_uses_updated_neighbours():
    # strong ferromagnet: node 1 follows node 0's fresh value within the sweep
    m = IsingModel(2, {(0, 1): 50.0}, [50.0, 0.0])
    s = gibbs_sweep_sequential(m, [-1, -1], 1.0, Streams(0))
    assert s.tolist() == [1, 1]
    c = gibbs_sweep_chromatic(m, [-1, -1], 1.0, color_graph(m), Streams(0))
    assert c.tolist() == [1, 1]


def test_streams_advance_and_determinism():
    m = generate_er_maxcut(InstanceSpec(12, 0.5, seed=0))
    a, b = Streams(9), Streams(9)
    x = sample(m, 0.5, 50, a)
    y = sample(m, 0.5, 50, b)
    assert np.array_equal(x, y)
    assert a.sweep == 50
    z = sample(m, 0.5, 50, a, init=x[-1])
    assert not np.array_equal(z, y)


# --- chromatic sweeps ----------------------------------------------------------


def test_edgeless_chromatic_equals_sequential():
    m = IsingModel(6, {}, [0.2, -0.1, 0.0, 0.5, -0.7, 1.0])
    state = np.ones(6, dtype=np.int8)
    plan = SweepPlan((tuple(range(6)),))
    for t in range(20):
        a = gibbs_sweep_sequential(m, state, 0.8, Streams(7, t))
        b = gibbs_sweep_chromatic(m, state, 0.8, plan, Streams(7, t))
        assert np.array_equal(a, b)
        state = a


@given(st.integers(0, 2**32), st.randoms(use_true_random=False))
def test_intra_class_order_irrelevant(seed, rnd):
    m = sparsify(generate_er_maxcut(InstanceSpec(8, 0.75, seed=seed % 97)), 4, 1.5).physical
    plan = color_graph(m)
    shuffled = SweepPlan(tuple(tuple(rnd.sample(c, len(c))) for c in plan.colors))
    init = Streams(seed).random_spins(m.n)
    a = init.copy()
    b = init.copy()
    run_sweeps(m, a, 0.9, 25, Streams(seed), plan)
    run_sweeps(m, b, 0.9, 25, Streams(seed), shuffled)
    assert np.array_equal(a, b)


def test_chromatic_samples_boltzmann():
    emb = sparsify(derive_gate("FULL_ADDER").model(), 3, 2.0)
    m = emb.physical
    plan = color_graph(m)
    out = sample(m, 1.0, 400_000, Streams(6), plan=plan, burn_in=100)
    assert tv(empirical(out).probs, boltzmann_exact(m, 1.0).probs) <= 0.03


def test_chromatic_and_sequential_success_agree():
    dense = generate_er_maxcut(InstanceSpec(20, 0.75, seed=2))
    opt = brute_force_max_cut(dense)[0]
    emb = sparsify(dense, degree_bound_for_copies(dense.max_degree(), 2), 4.0)
    plan = color_graph(emb.physical)
    sched = reference_schedule(sweeps_per_beta=2000, readout_tail=100)
    rates = []
    for pl in (None, plan):
        hits = 0
        for t in range(40):
            r = simulated_anneal(emb.physical, sched, Streams(100 + t), plan=pl)
            cuts = cut_values(dense, decode_many(emb, r.tail_states, DecodePolicy(seed=t)))
            hits += cuts.max() == opt
        rates.append(hits / 40)
    pooled = sum(rates) / 2
    sigma = math.sqrt(max(pooled * (1 - pooled), 1e-3) * 2 / 40)
    assert abs(rates[0] - rates[1]) <= 2 * sigma + 1e-12


# --- annealing -----------------------------------------------------------------


def test_schedule_validation_and_reference_values():
    s = reference_schedule()
    assert s.betas == tuple(0.125 * k for k in range(1, 9))
    assert s.sweeps_per_beta == 100_000 and s.readout_tail == 100
    assert s.total_sweeps == 800_000
    for bad in (dict(betas=(1.0, 0.5), sweeps_per_beta=1), dict(betas=(), sweeps_per_beta=1),
                dict(betas=(1.0,), sweeps_per_beta=0), dict(betas=(1.0,), sweeps_per_beta=2, readout_tail=3)):
        with pytest.raises(ValueError):
            AnnealSchedule(**bad)


def test_single_sweep_anneal_returns_that_state():
    m = generate_er_maxcut(InstanceSpec(10, 0.5, seed=1))
    res = simulated_anneal(m, AnnealSchedule((0.7,), 1, 1), Streams(3))
    st = Streams(3)
    s = st.random_spins(10)
    run_sweeps(m, s, 0.7, 1, st)
    assert np.array_equal(res.best_state, s)
    assert res.best_energy == energies(m, s[None, :])[0]
    assert res.tail_states.shape == (1, 10)


def test_anneal_best_is_tail_minimum_and_trajectory(tmp_path):
    m = generate_er_maxcut(InstanceSpec(12, 0.75, seed=1))
    sched = AnnealSchedule.linear(0.1, 1.0, 4, 100, 30)
    a = simulated_anneal(m, sched, Streams(8))
    b = simulated_anneal(m, sched, Streams(8), trajectory_stride=25)
    assert np.array_equal(a.tail_states, b.tail_states)
    assert a.tail_states.shape == (30, 12)
    assert a.best_energy == a.tail_energies.min()
    assert len(b.trajectory) == 16
    assert b.trajectory[-1][0] == 400
    write_trajectory(tmp_path / "t.csv", b.trajectory)
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert rows[0] == ["sweep", "beta", "energy", "state"] and len(rows) == 17
    assert float(rows[-1][2]) == energies(m, np.array([[1 if c == "+" else -1 for c in rows[-1][3]]]))[0]


# --- fixed point ---------------------------------------------------------------


def test_quantize_examples():
    q, c = quantize_values([1.0, 0.0625, -0.0625, 100.0, -100.0, 0.2])
    assert q.tolist() == [1.0, 0.125, -0.125, 63.875, -63.875, 0.25]
    assert c == 2
    spec = FixedPointSpec()
    assert spec.max_value == 63.875 and spec.step == 0.125


@given(st.lists(st.floats(-200, 200), min_size=1, max_size=20))
def test_quantize_idempotent_and_on_grid(xs):
    q, _ = quantize_values(xs)
    q2, c2 = quantize_values(q)
    assert np.array_equal(q, q2) and c2 == 0
    assert np.all(np.abs(q) <= 63.875)
    assert np.all((q * 8) == np.round(q * 8))
    inside = np.abs(xs) <= 63.875
    assert np.all(np.abs(q[inside] - np.asarray(xs)[inside]) <= 0.0625 + 1e-12)


def test_quantized_sweeps_use_grid_weights():
    m = IsingModel(3, {(0, 1): 0.0625, (1, 2): 1.3}, [0.3, 0.0, -0.01])
    qw = quantize_weights(m, 1.0)
    snapped = IsingModel(3, {(0, 1): qw.weights[0], (1, 2): qw.weights[1]}, qw.h)
    assert qw.clamped == 0
    a = sample(m, 1.0, 200, Streams(1), fixed_point=FixedPointSpec())
    b = sample(snapped, 1.0, 200, Streams(1))
    assert np.array_equal(a, b)
    assert quantize_weights(m, 1000.0).clamped == 2


# --- cost model ----------------------------------------------------------------


def test_cost_model():
    m = complete(100)
    assert sweep_cost(m, None, Topology.ALL_TO_ALL) == (100, 1)
    for n in (70, 85, 130):
        c1, f1 = sweep_cost(complete(n), None, "all_to_all")
        c2, f2 = sweep_cost(complete(2 * n), None, "all_to_all")
        assert c1 == n and c2 == 2 * n
        assert f2 / f1 == 0.25
    fa = sparsify(derive_gate("FULL_ADDER").model(), 3, 1.0).physical
    plan = SweepPlan(((0, 1), (2, 3), (4, 5, 6), (7, 8, 9)))
    assert sweep_cost(fa, plan, Topology.SPARSE) == (4, 1)
    with pytest.raises(ValueError):
        sweep_cost(fa, None, Topology.SPARSE)
