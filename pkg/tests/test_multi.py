import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from infopath.domain import InfeasibleQueryError, PlanQuery, SensingDomain, path_cost
from infopath.multi import (MultiRobotQuery, brute_force_multi, brute_force_planner, greedy_planner,
                            select_starts_greedy, sequential_allocation, allocation_factor)
from infopath.reward import GPModel, MutualInformation, SEKernel

from oracles import random_instance


def test_query_validation():
    with pytest.raises(ValueError):
        MultiRobotQuery((), 3.0)
    with pytest.raises(ValueError):
        MultiRobotQuery(((0, 1), (0, 1)), (3.0,))
    q = MultiRobotQuery(((0, 1), (2, 3)), (3.0, 4.0))
    assert q.query(1) == PlanQuery(2, 3, 4.0)
    assert MultiRobotQuery.shared(3, 0, 0, 5.0).k == 3


def test_allocation_factor():
    assert allocation_factor(1, True) == pytest.approx(1 / (1 - math.exp(-1)))
    assert allocation_factor(1, True) == pytest.approx(1.5820, abs=1e-4)
    assert allocation_factor(2, True) == pytest.approx(2.5415, abs=1e-4)
    assert allocation_factor(2, True) <= 3
    assert allocation_factor(2, False) == 3
    with pytest.raises(ValueError):
        allocation_factor(0.5, True)


def test_single_robot_matches_planner():
    dom, fn = random_instance(np.random.default_rng(0), 9, cost=0.3)
    q = PlanQuery(0, 1, dom.travel(0, 1) + 3)
    planner = brute_force_planner()
    plan = sequential_allocation(dom, fn, MultiRobotQuery(((0, 1),), q.budget), planner)
    assert plan.paths[0] == planner(dom, fn, q).path
    assert plan.joint_reward == pytest.approx(fn(plan.paths[0].visited))


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10**6), k=st.integers(1, 3))
def test_committed_sets_and_telescoping(seed, k):
    rng = np.random.default_rng(seed)
    dom, fn = random_instance(rng, 10, cost=0.3)
    q = MultiRobotQuery.shared(k, 0, 1, dom.travel(0, 1) + 2.5)
    plan = sequential_allocation(dom, fn, q, greedy_planner())
    A = plan.committed
    assert A[0] == frozenset()
    for i, res in enumerate(plan.results):
        assert A[i + 1] == A[i] | res.path.visited
        assert path_cost(res.path, dom) <= q.budget + 1e-9
        assert plan.stage_gains[i] == pytest.approx(fn(A[i + 1]) - fn(A[i]), abs=1e-12)
    assert sum(plan.stage_gains) == pytest.approx(plan.joint_reward, abs=1e-9)
    assert plan.joint_reward == pytest.approx(fn(A[-1]), abs=1e-9)


def test_planner_sees_residual():
    dom, fn = random_instance(np.random.default_rng(1), 8, cost=0.3)
    seen = []

    def spy(d, f, q):
        seen.append(f)
        return brute_force_planner()(d, f, q)

    sequential_allocation(dom, fn, MultiRobotQuery.shared(2, 0, 1, dom.travel(0, 1) + 2), spy)
    assert seen[0] is fn
    assert seen[1].committed


def test_infeasible_robot_index():
    dom = SensingDomain.from_arrays([(0, 0), (1, 0), (10, 0), (12, 0)])
    fn = MutualInformation(GPModel.for_domain(SEKernel(), dom))
    q = MultiRobotQuery(((0, 1), (2, 3)), 1.5)
    with pytest.raises(InfeasibleQueryError, match="robot 1"):
        sequential_allocation(dom, fn, q, greedy_planner())


@settings(max_examples=6, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_shared_endpoints_bound(seed):
    rng = np.random.default_rng(seed)
    dom, fn = random_instance(rng, 8, cost=0.4)
    q = MultiRobotQuery.shared(2, 0, 1, dom.travel(0, 1) + 2.0)
    got = sequential_allocation(dom, fn, q, brute_force_planner()).joint_reward
    opt, sets = brute_force_multi(dom, fn, q)
    assert opt >= got - 1e-9
    assert got >= (1 - 1 / math.e) * opt - 1e-9


@settings(max_examples=6, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_distinct_endpoints_bound(seed):
    rng = np.random.default_rng(seed)
    dom, fn = random_instance(rng, 8, cost=0.4)
    B = max(dom.travel(0, 1), dom.travel(2, 3)) + 1.5
    q = MultiRobotQuery(((0, 1), (2, 3)), B)
    got = sequential_allocation(dom, fn, q, brute_force_planner()).joint_reward
    opt, _ = brute_force_multi(dom, fn, q)
    assert got >= 0.5 * opt - 1e-9


def elongated():
    xs = np.linspace(0, 40, 21)
    pos = np.c_[xs, np.zeros_like(xs)]
    dom = SensingDomain.from_arrays(pos, 0.5)
    fn = MutualInformation(GPModel.for_domain(SEKernel(1.0, 3.0, 0.05), dom))
    return dom, fn


def test_start_selection_opposite_ends():
    dom, fn = elongated()
    starts = select_starts_greedy(dom, fn, [0, 20], 2, greedy_planner(), 12.0)
    assert sorted(starts) == [0, 20]


def test_start_selection_exhaustive_check():
    dom, fn = elongated()
    cands = [0, 10, 20]
    planner = greedy_planner()
    first = select_starts_greedy(dom, fn, cands, 1, planner, 12.0)
    gains = [fn(planner(dom, fn, PlanQuery(c, c, 12.0)).path.visited) for c in cands]
    assert first == [cands[int(np.argmax(gains))]]
    everyone = select_starts_greedy(dom, fn, cands, 3, planner, 12.0)
    assert sorted(everyone) == cands and everyone[0] == first[0]


def test_start_selection_thread_invariant():
    dom, fn = elongated()
    cands = [0, 5, 10, 15, 20]
    one = select_starts_greedy(dom, fn, cands, 3, greedy_planner(), 10.0, threads=1)
    many = select_starts_greedy(dom, fn, cands, 3, greedy_planner(), 10.0, threads=4)
    assert one == many


def test_start_selection_needs_enough_candidates():
    dom, fn = elongated()
    with pytest.raises(ValueError):
        select_starts_greedy(dom, fn, [0], 2, greedy_planner(), 5.0)
