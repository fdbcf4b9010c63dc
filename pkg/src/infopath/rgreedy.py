"""Recursive-greedy planning over raw locations.

The budget is split between the two halves of the path around every
possible middle location, and the second half is planned with the first
half's locations already committed.  Costs are discretized to a quantum so
that budget splits range over integers.
"""

from __future__ import annotations

import math
from typing import Iterable

from .domain import InfeasibleQueryError, Path, PlanQuery, PlanResult, SensingDomain, cost_quantum
from .greedy import SizeGuardError, plan_result
from .reward import RewardFunction

_EPS = 1e-9


def default_quantum(dom: SensingDomain) -> float:
    """Exact common divisor of all pairwise and sensing costs, else 1/100 of the smallest."""
    D = dom.distances
    vals = [float(x) for x in D[D > 0].ravel()] + [float(c) for c in dom.sensing_costs]
    return cost_quantum(vals)


class _Quantized:
    """Costs rounded up to whole quanta, so quantized feasibility implies real feasibility."""

    def __init__(self, dom: SensingDomain, delta: float):
        self.delta = delta
        self.ids = list(dom.ids)
        self.ix = dom.index
        D = dom.distances / delta
        self.travel = [[int(math.ceil(x - _EPS)) for x in row] for row in D.tolist()]
        self.sense = [int(math.ceil(c / delta - _EPS)) for c in dom.sensing_costs.tolist()]

    def budget(self, B: float) -> int:
        return int(math.floor(B / self.delta + _EPS))


class RecursiveGreedy:
    """Solver object holding the quantized costs and the memo table.

    ``memo`` caches subproblem answers on (s, t, budget quanta, R, depth);
    the answers are pure functions of that key, so caching never changes
    the result.
    """

    def __init__(self, dom: SensingDomain, fn: RewardFunction, delta: float | None = None,
                 memo: bool = True, max_locations: int | None = 32):
        if max_locations is not None and len(dom) > max_locations:
            raise SizeGuardError(
                f"recursive greedy limited to {max_locations} locations, got {len(dom)}")
        self.dom = dom
        self.fn = fn
        self.delta = default_quantum(dom) if delta is None else float(delta)
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        self.q = _Quantized(dom, self.delta)
        self.memo = {} if memo else None
        self.calls = 0

    def _f(self, R: frozenset, nodes) -> float:
        fn = self.fn
        return fn.value(R | frozenset(nodes)) - fn.value(R)

    def solve(self, s: int, t: int, b: int, R: frozenset, depth: int) -> tuple[int, ...] | None:
        """Best path (as a node tuple) from s to t within ``b`` quanta, or None."""
        q = self.q
        si, ti = q.ix[s], q.ix[t]
        if q.travel[si][ti] > b:
            return None
        if depth == 0:
            return (s, t)
        key = (s, t, b, R, depth)
        if self.memo is not None and key in self.memo:
            return self.memo[key]
        self.calls += 1
        best = (s, t)
        m = self._f(R, best)
        for vm in sorted(q.ids):
            vi = q.ix[vm]
            lo = q.travel[si][vi]
            hi = b - q.sense[vi] - q.travel[vi][ti]
            for b1 in range(lo, hi + 1):
                p1 = self.solve(s, vm, b1, R, depth - 1)
                if p1 is None:
                    continue
                p2 = self.solve(vm, t, b - q.sense[vi] - b1, R | frozenset(p1), depth - 1)
                if p2 is None:
                    continue
                cand = p1 + p2[1:]
                val = self._f(R, cand)
                if val > m:
                    best, m = cand, val
        if self.memo is not None:
            self.memo[key] = best
        return best


def recursive_greedy(s: int, t: int, B: float, R: Iterable[int], iter: int, dom: SensingDomain,
                     fn: RewardFunction, delta: float | None = None, memo: bool = True,
                     max_locations: int | None = 32) -> Path:
    """Recursive-greedy path from s to t with cost at most B.

    Maximizes f(R | P) - f(R) over a search that tries every location as the
    middle node and every quantized budget split, to recursion depth
    ``iter``.  Depth 0 returns the direct path.
    """
    if iter < 0:
        raise ValueError("iter must be nonnegative")
    solver = RecursiveGreedy(dom, fn, delta=delta, memo=memo, max_locations=max_locations)
    dom.idx(s)
    dom.idx(t)
    b = solver.q.budget(B)
    nodes = solver.solve(s, t, b, frozenset(R), iter)
    if nodes is None:
        raise InfeasibleQueryError(
            f"travel cost {dom.travel(s, t):g} exceeds budget {B:g} at quantum {solver.delta:g}")
    return Path(nodes)


def plan_rgreedy(dom: SensingDomain, fn: RewardFunction, query: PlanQuery, iter: int | None = None,
                 **kw) -> PlanResult:
    """Planner adapter.  ``iter`` defaults to ceil(1 + log2 |V|)."""
    if iter is None:
        iter = math.ceil(1 + math.log2(len(dom)))
    path = recursive_greedy(query.start, query.finish, query.budget, (), iter, dom, fn, **kw)
    return plan_result(path, dom, fn, "rgreedy", iter=iter)
