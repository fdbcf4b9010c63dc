import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from infopath.bnb import BnBConfig
from infopath.decomp import build_grid
from infopath.domain import InfeasibleQueryError, PlanQuery, SensingDomain, path_cost
from infopath.esip import (ESIPQuery, SplitSchedule, budget_splits, esip, esip_iterations,
                           recursive_esip, split_quanta)
from infopath.greedy import greedy_subset
from infopath.reward import GPModel, MutualInformation, SEKernel, residual

from oracles import cell_instance, cell_level_optimum

NO_SEED = BnBConfig(enabled=False, seed_with_heuristic=False)


def field_instance(seed, n=30, cost=1.0):
    rng = np.random.default_rng(seed)
    dom = SensingDomain.from_arrays(rng.uniform(0, 8, (n, 2)), cost)
    fn = MutualInformation(GPModel.for_domain(SEKernel(1.0, 1.5, 0.05), dom))
    return dom, fn, build_grid(dom, 2.0)


def test_split_examples():
    assert budget_splits(8, "exp_two_sided") == [0, 1, 2, 4, 6, 7, 8]
    assert budget_splits(8, "linear") == list(range(9))
    assert budget_splits(8, "exp_one_sided") == [0, 1, 2, 4, 8]
    for sch in SplitSchedule:
        assert budget_splits(0, sch) == [0]
    assert budget_splits(3, "linear", 0.5) == [0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0]
    with pytest.raises(ValueError):
        budget_splits(-1, "linear")


def test_schedule_aliases():
    assert SplitSchedule.parse("exp") is SplitSchedule.EXP_TWO_SIDED
    assert SplitSchedule.parse("exp1") is SplitSchedule.EXP_ONE_SIDED
    with pytest.raises(ValueError):
        SplitSchedule.parse("quadratic")


@settings(max_examples=60, deadline=None)
@given(n=st.integers(0, 200), sch=st.sampled_from(list(SplitSchedule)))
def test_split_invariants(n, sch):
    s = split_quanta(n, sch)
    assert s == sorted(set(s))
    assert s[0] == 0 and s[-1] == max(n, 0)
    assert set(s) <= set(range(n + 1)) | {0}
    if sch is not SplitSchedule.LINEAR:
        assert set(s) <= set(split_quanta(n, SplitSchedule.LINEAR))
    if sch is SplitSchedule.EXP_ONE_SIDED:
        assert set(s) <= set(split_quanta(n, SplitSchedule.EXP_TWO_SIDED))


def test_esip_query_guard():
    with pytest.raises(ValueError):
        ESIPQuery(0, 0, 0.0)


def test_far_cells_infeasible():
    dom = SensingDomain.from_arrays([(0.5, 0.5), (5.7, 0.5), (2.7, 0.5)])
    fn = MutualInformation(GPModel.for_domain(SEKernel(), dom))
    grid = build_grid(dom, 1.0)
    cs, ct = grid.cell_of[0], grid.cell_of[1]
    assert grid.d(cs, ct) == pytest.approx(5)
    assert recursive_esip(cs, ct, 3, (), 2, grid, dom, fn) is None
    assert recursive_esip(cs, ct, 3, (), 3, grid, dom, fn) is not None
    with pytest.raises(InfeasibleQueryError):
        esip(dom, fn, PlanQuery(0, 1, 7.0), grid)


def test_base_case_takes_whole_cell():
    inside = [(0.1, 0.1), (0.3, 0.8), (0.7, 0.4), (0.9, 0.9)]
    outside = [(x + 1.2, y) for x, y in inside] + [(x, y + 1.2) for x, y in inside]
    dom = SensingDomain.from_arrays(inside + outside, 1.0)
    fn = MutualInformation(GPModel.for_domain(SEKernel(1.0, 0.5, 0.05), dom))
    grid = build_grid(dom, 1.0)
    c = grid.cell_of[0]
    cp = recursive_esip(c, c, 10, (), 0, grid, dom, fn)
    assert set(cp.selected) == set(greedy_subset(fn, grid.cells[c].members, 10, dom))
    # every member is taken unless its gain has dropped to zero or below
    for v in set(grid.cells[c].members) - set(cp.selected):
        assert fn.gain(cp.selected, v) <= 0


def test_tiny_budget_single_cell_greedy():
    dom, fn, grid = field_instance(0)
    s = 0
    res = esip(dom, fn, PlanQuery(s, s, 1.5), grid, bnb=NO_SEED)
    c = grid.cell_of[s]
    expect = greedy_subset(residual(fn, {s}), set(grid.cells[c].members) - {s}, 1.0, dom)
    assert res.diagnostics["cells"] == (c,)
    assert list(res.selected) == expect


def test_iterations_schedule():
    dom, fn, grid = field_instance(1)
    cs = ct = 0
    its = esip_iterations(grid, cs, ct, 9.0)
    assert its == [(0, 0.0), (1, 4.0), (2, 8.0)]


def test_residual_consistency():
    dom, fn, grid = field_instance(2)
    R = {3, 4, 5}
    res = esip(dom, fn, PlanQuery(0, 1, 14.0), grid, R=R)
    assert res.reward == pytest.approx(residual(fn, R)(res.path.visited), abs=1e-12)


def _sensing_ok(res, grid, budget, delta=1.0):
    it = res.diagnostics["chosen_iter"]
    bt = dict(esip_iterations(grid, grid.cell_of[res.path.start], grid.cell_of[res.path.finish],
                              budget))[it]
    b_e = math.floor((budget - bt) / delta + 1e-9) * delta
    return res.diagnostics["cell_path"].spent_experimental <= b_e + 1e-9


@settings(max_examples=12, deadline=None)
@given(seed=st.integers(0, 10**6), budget=st.floats(4, 16))
def test_budgets_and_cost_bound(seed, budget):
    dom, fn, grid = field_instance(seed, n=20)
    rng = np.random.default_rng(seed)
    s, t = int(rng.integers(20)), int(rng.integers(20))
    if dom.travel(s, t) > budget or not esip_iterations(grid, grid.cell_of[s], grid.cell_of[t], budget):
        return
    for sch in SplitSchedule:
        res = esip(dom, fn, PlanQuery(s, t, budget), grid, schedule=sch)
        cp = res.diagnostics["cell_path"]
        assert _sensing_ok(res, grid, budget)
        assert cp.cells[0] == grid.cell_of[s] and cp.cells[-1] == grid.cell_of[t]
        assert res.path.start == s and res.path.finish == t
        assert res.cost == pytest.approx(path_cost(res.path, dom))
        assert res.cost <= res.diagnostics["cost_bound"] + 1e-9


@settings(max_examples=8, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_split_dominance(seed):
    dom, fn, grid = field_instance(seed, n=20)
    q = PlanQuery(0, 0, 11.0)
    r = [esip(dom, fn, q, grid, schedule=s).reward for s in SplitSchedule]
    assert r[0] >= r[1] - 1e-9 and r[1] >= r[2] - 1e-9


@settings(max_examples=8, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_reward_grows_with_budget(seed):
    dom, fn, grid = field_instance(seed, n=20)
    rewards = [esip(dom, fn, PlanQuery(0, 0, B), grid, bnb=NO_SEED).reward for B in range(2, 14, 2)]
    assert all(b >= a - 1e-9 for a, b in zip(rewards, rewards[1:]))


def test_needs_grid_or_width():
    dom, fn, _ = field_instance(0)
    with pytest.raises(ValueError):
        esip(dom, fn, PlanQuery(0, 0, 5.0))
    assert esip(dom, fn, PlanQuery(0, 0, 5.0), cell_width=2.0).diagnostics["cell_width"] == 2.0


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10**6), budget=st.integers(3, 7))
def test_cell_level_bound(seed, budget):
    rng = np.random.default_rng(seed)
    dom, fn, grid = cell_instance(rng)
    s, t = 0, int(rng.integers(len(dom)))
    cs, ct = grid.cell_of[s], grid.cell_of[t]
    its = esip_iterations(grid, cs, ct, budget)
    if not its:
        return
    res = esip(dom, fn, PlanQuery(s, t, float(budget)), grid)
    opt, k = cell_level_optimum(grid, dom, fn, cs, ct, budget, {s, t}, 1.0, its)
    value = res.diagnostics["value"]
    assert value <= opt + 1e-9
    assert value >= (1 - 1 / math.e) / (1 + math.log2(k)) * opt - 1e-9
