"""Multi-robot planning by sequential allocation.

Robots are planned one after another; each robot's planner sees the reward
residual to everything the earlier robots already visit.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .domain import InfeasibleQueryError, PlanQuery, PlanResult, SensingDomain, check_query
from .greedy import (brute_force_path, feasible_node_sets, greedy_benefit_cost, greedy_reward,
                     plan_result)
from .reward import RewardFunction, residual

Planner = Callable[[SensingDomain, RewardFunction, PlanQuery], PlanResult]


@dataclass(frozen=True)
class MultiRobotQuery:
    """Per-robot (start, finish) pairs; ``budget`` is shared or given per robot."""

    endpoints: tuple[tuple[int, int], ...]
    budget: float | tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "endpoints", tuple(tuple(e) for e in self.endpoints))
        if not self.endpoints:
            raise ValueError("need at least one robot")
        if not isinstance(self.budget, (int, float)):
            object.__setattr__(self, "budget", tuple(float(b) for b in self.budget))
            if len(self.budget) != len(self.endpoints):
                raise ValueError("one budget per robot expected")

    @classmethod
    def shared(cls, k: int, start: int, finish: int, budget: float) -> "MultiRobotQuery":
        return cls(((start, finish),) * k, budget)

    @property
    def k(self) -> int:
        return len(self.endpoints)

    def query(self, i: int) -> PlanQuery:
        s, t = self.endpoints[i]
        b = self.budget if isinstance(self.budget, (int, float)) else self.budget[i]
        return PlanQuery(s, t, float(b))


@dataclass
class MultiRobotPlan:
    results: list[PlanResult]
    committed: list[frozenset]
    joint_reward: float
    stage_gains: list[float] = field(default_factory=list)

    @property
    def paths(self):
        return [r.path for r in self.results]


def sequential_allocation(dom: SensingDomain, fn: RewardFunction, query: MultiRobotQuery,
                          planner: Planner, committed=frozenset()) -> MultiRobotPlan:
    """Plan robots in input order, committing each path before the next."""
    A = frozenset(committed)
    history = [A]
    results, gains = [], []
    for i in range(query.k):
        q = query.query(i)
        try:
            check_query(q, dom)
            res = planner(dom, residual(fn, A), q)
        except InfeasibleQueryError as exc:
            raise InfeasibleQueryError(f"robot {i}: {exc}") from exc
        A_next = A | res.path.visited
        gains.append(fn(A_next) - fn(A))
        results.append(res)
        history.append(A_next)
        A = A_next
    return MultiRobotPlan(results, history, fn(A) - fn(history[0]), gains)


def select_starts_greedy(dom: SensingDomain, fn: RewardFunction, candidates: Sequence[int], k: int,
                         planner: Planner, budget: float, finish: int | None = None,
                         threads: int = 1) -> list[int]:
    """Choose k start locations one robot at a time.

    Every remaining candidate is planned against the locations the already
    chosen robots visit, and the one with the largest gain wins (earlier
    candidates win ties).  Each robot returns to its own start unless
    ``finish`` is given.
    """
    candidates = list(candidates)
    if len(candidates) < k:
        raise ValueError(f"need at least {k} candidate starts, got {len(candidates)}")
    chosen: list[int] = []
    A: frozenset = frozenset()

    def evaluate(c):
        q = PlanQuery(c, c if finish is None else finish, budget)
        try:
            check_query(q, dom)
            res = planner(dom, residual(fn, A), q)
        except InfeasibleQueryError:
            return None
        return fn(A | res.path.visited) - fn(A), res

    for _ in range(k):
        pool = [c for c in candidates if c not in chosen]
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                outs = list(ex.map(evaluate, pool))
        else:
            outs = [evaluate(c) for c in pool]
        best = None
        for c, out in zip(pool, outs):
            if out is not None and (best is None or out[0] > best[0]):
                best = (out[0], c, out[1])
        if best is None:
            raise InfeasibleQueryError("no candidate start admits a feasible path")
        chosen.append(best[1])
        A = A | best[2].path.visited
    return chosen


def allocation_factor(eta: float, same_endpoints: bool) -> float:
    """Approximation factor of sequential allocation over an eta-approximate planner."""
    if eta < 1:
        raise ValueError("eta must be >= 1")
    tight = 1.0 / (1.0 - math.exp(-1.0 / eta))
    loose = 1.0 + eta
    assert tight <= loose + 1e-12
    return tight if same_endpoints else loose


def brute_force_multi(dom: SensingDomain, fn: RewardFunction, query: MultiRobotQuery,
                      max_locations: int = 10) -> tuple[float, list[frozenset]]:
    """Exact optimum of the joint reward over k feasible paths.

    Enumerates the feasible node sets of every robot and maximizes the
    reward of their union.  Returns the value and one optimal tuple of sets.
    """
    options = []
    for i in range(query.k):
        q = query.query(i)
        check_query(q, dom)
        sets = feasible_node_sets(dom, q.start, q.finish, q.budget, max_locations=max_locations)
        ends = frozenset((q.start, q.finish))
        options.append(sorted({S | ends for S in sets}, key=lambda S: sorted(S)))
    best_val, best = -math.inf, None
    seen = set()
    for combo in itertools.product(*options):
        U = frozenset().union(*combo)
        if U in seen:
            continue
        seen.add(U)
        v = fn(U)
        if v > best_val:
            best_val, best = v, list(combo)
    return best_val, best


# ---------------------------------------------------------------- planner adapters

def brute_force_planner(max_locations: int | None = 12) -> Planner:
    def plan(dom, fn, query):
        return plan_result(brute_force_path(dom, fn, query, max_locations), dom, fn, "brute")
    return plan


def greedy_planner(ratio: bool = True) -> Planner:
    def plan(dom, fn, query):
        path = (greedy_benefit_cost if ratio else greedy_reward)(dom, fn, query)
        return plan_result(path, dom, fn, "greedy-bc" if ratio else "greedy-r")
    return plan


def rgreedy_planner(iter: int | None = None, **kw) -> Planner:
    from .rgreedy import plan_rgreedy

    def plan(dom, fn, query):
        return plan_rgreedy(dom, fn, query, iter=iter, **kw)
    return plan


def esip_planner(grid=None, **kw) -> Planner:
    from .esip import esip

    def plan(dom, fn, query):
        return esip(dom, fn, query, grid, **kw)
    return plan
