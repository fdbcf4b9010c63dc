"""Single-robot planning on a cell decomposition.

The outer loop tries traveling budgets 2^iter L and hands the rest of the
budget to sensing.  The inner recursion picks a middle cell and a split of
the sensing budget, plans the first half, commits its locations and plans
the second half.  At the leaves, locations are chosen greedily inside the
start and finish cells.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable

from .bnb import (EXHAUSTIVE, BnBConfig, SearchControl, UB_FACTOR, alt_lb, better,
                  heuristic_op, order_children, prune_decision, reachable_cells)
from .decomp import CellGrid, CellPath, build_grid, cell_travel, cost_bound, expand_to_tour
from .domain import (InfeasibleQueryError, PlanQuery, PlanResult, SensingDomain, check_query,
                     cost_quantum, path_cost)
from .greedy import GreedyOracle
from .reward import RewardFunction, residual

_TOL = 1e-9
NEG_INF = -math.inf


class SplitSchedule(str, enum.Enum):
    LINEAR = "linear"
    EXP_TWO_SIDED = "exp_two_sided"
    EXP_ONE_SIDED = "exp_one_sided"

    @classmethod
    def parse(cls, value) -> "SplitSchedule":
        if isinstance(value, cls):
            return value
        aliases = {"exp": cls.EXP_TWO_SIDED, "exp1": cls.EXP_ONE_SIDED}
        return aliases.get(value) or cls(value)


def split_quanta(n: int, schedule) -> list[int]:
    """Budget splits in whole quanta for a budget of ``n`` quanta."""
    schedule = SplitSchedule.parse(schedule)
    if n <= 0:
        return [0]
    if schedule is SplitSchedule.LINEAR:
        return list(range(n + 1))
    powers = [0]
    p = 1
    while p <= n:
        powers.append(p)
        p *= 2
    out = set(powers) | {n}
    if schedule is SplitSchedule.EXP_TWO_SIDED:
        out |= {n - x for x in powers}
    return sorted(out)


def budget_splits(B_e: float, schedule, delta: float = 1.0) -> list[float]:
    """Sorted candidate budgets for the first half of a split."""
    if B_e < 0:
        raise ValueError("B_e must be nonnegative")
    n = int(math.floor(B_e / delta + _TOL))
    return [k * delta for k in split_quanta(n, schedule)]


@dataclass(frozen=True)
class ESIPQuery:
    start_cell: int
    finish_cell: int
    budget: float
    committed: frozenset = frozenset()
    schedule: SplitSchedule = SplitSchedule.LINEAR
    bnb: BnBConfig = EXHAUSTIVE

    def __post_init__(self):
        if not self.budget > 0:
            raise ValueError("budget must be positive")


class CellSearch:
    """Recursive middle-cell search with optional pruning.

    Budgets are integers counting sensing quanta ``delta``.  ``fn`` is the
    objective the search maximizes; committed locations are passed as R.
    """

    def __init__(self, grid: CellGrid, dom: SensingDomain, fn: RewardFunction, delta: float,
                 schedule=SplitSchedule.LINEAR, config: BnBConfig = EXHAUSTIVE,
                 control: SearchControl | None = None, oracle: GreedyOracle | None = None):
        self.grid = grid
        self.dom = dom
        self.fn = fn
        self.delta = delta
        self.schedule = SplitSchedule.parse(schedule)
        self.config = config
        self.control = control or SearchControl(time_limit=config.time_limit)
        self.oracle = oracle or GreedyOracle(fn, dom)
        self.L = grid.cell_width
        self.D = grid.distances
        self._memo: dict = {}
        self._ub: dict = {}
        self._splits: dict = {}
        self.top_depth = 0

    # -- pieces -------------------------------------------------------------

    def leaf(self, cs: int, ct: int, b: int, R: frozenset) -> CellPath:
        cells = (cs,) if cs == ct else (cs, ct)
        if b > 0:
            sel, val = self.oracle.select(self.grid.members(cells), R, b * self.delta)
        else:
            sel, val = (), 0.0
        return CellPath(cells, tuple(sel), self.dom.set_cost(sel), float(self.D[cs, ct]), val)

    def ub(self, cs: int, ct: int, b: int, depth: int, R: frozenset) -> float:
        key = (cs, ct, b, depth, R)
        hit = self._ub.get(key)
        if hit is None:
            if b <= 0:
                hit = 0.0
            else:
                cells = reachable_cells(cs, ct, depth, self.grid)
                _, val = self.oracle.select(self.grid.members(cells), R, b * self.delta)
                hit = val * UB_FACTOR
            self._ub[key] = hit
        return hit

    def splits(self, b: int) -> list[int]:
        hit = self._splits.get(b)
        if hit is None:
            hit = self._splits[b] = split_quanta(b, self.schedule)
        return hit

    def middle_cells(self, cs: int, ct: int, depth: int) -> list[int]:
        half = (2 ** (depth - 1)) * self.L + _TOL
        D = self.D
        return [m for m in range(self.grid.n) if D[cs, m] <= half and D[m, ct] <= half]

    @staticmethod
    def join(p1: CellPath, p2: CellPath, first_value: float, second_value: float) -> CellPath:
        cells = p1.cells + (p2.cells[1:] if p2.cells[0] == p1.cells[-1] else p2.cells)
        return CellPath(cells, p1.selected + p2.selected,
                        p1.spent_experimental + p2.spent_experimental,
                        p1.spent_travel + p2.spent_travel, first_value + second_value)

    # -- recursion ----------------------------------------------------------

    def solve(self, cs: int, ct: int, b: int, R: frozenset, depth: int,
              theta: float = NEG_INF) -> CellPath | None:
        """Best cell path from cs to ct using at most 2^depth hops of length L.

        With pruning enabled the answer is exact whenever its value exceeds
        ``theta``; otherwise it is some feasible path worth at most ``theta``.
        """
        if self.D[cs, ct] > (2 ** depth) * self.L + _TOL:
            return None
        ctl = self.control
        ctl.nodes += 1
        if depth == 0:
            return self.leaf(cs, ct, b, R)
        key = (cs, ct, b, R, depth)
        bnb = self.config.enabled
        hit = self._memo.get(key)
        if hit is not None:
            res, used, exact = hit
            if not bnb or exact or theta >= used:
                return res
        best = self.leaf(cs, ct, b, R)
        if ctl.expired():
            return best
        mids = self.middle_cells(cs, ct, depth)
        if not bnb:
            for m in mids:
                for b1 in self.splits(b):
                    cand = self._child(cs, m, ct, b, b1, R, depth, NEG_INF, 0.0, 0.0)
                    if cand is not None and better(cand, best):
                        best = cand
        else:
            best = self._search(cs, ct, b, R, depth, theta, best, mids)
        if not ctl.timed_out:
            self._memo[key] = (best, theta, (not bnb) or best.value > theta)
        return best

    def _search(self, cs, ct, b, R, depth, theta, best, mids):
        ctl, cfg = self.control, self.config
        children = []
        for m in mids:
            for b1 in self.splits(b):
                u1 = self.ub(cs, m, b1, depth - 1, R)
                u2 = self.ub(m, ct, b - b1, depth - 1, R)
                children.append((m, b1, u1 + u2, u1, u2))
        rlb = max(theta, best.value)
        level = self.top_depth - depth
        for m, b1, u, u1, u2 in order_children(children, cfg.top_k):
            if ctl.expired():
                break
            if prune_decision(u, rlb, cfg.alpha):
                ctl.record(level, u, rlb, True)
                break
            ctl.record(level, u, rlb, False)
            cand = self._child(cs, m, ct, b, b1, R, depth, rlb, u1, u2)
            if cand is not None and better(cand, best):
                best = cand
                rlb = max(rlb, best.value)
                if level == 0 and best.value > theta:
                    best.diagnostics["iter"] = depth
                    ctl.offer(best)
        return best

    def _child(self, cs, m, ct, b, b1, R, depth, rlb, u1, u2):
        """Plan both halves around middle cell m; returns the joined path or None."""
        b2 = b - b1
        if self.config.larger_first and b1 < b2:
            q2 = self.solve(m, ct, b2, R, depth - 1, alt_lb(rlb, u1))
            if q2 is None:
                return None
            q1 = self.solve(cs, m, b1, R | frozenset(q2.selected), depth - 1,
                            alt_lb(rlb, q2.value))
            if q1 is None:
                return None
            return self.join(q1, q2, q1.value, q2.value)
        q1 = self.solve(cs, m, b1, R, depth - 1, alt_lb(rlb, u2))
        if q1 is None:
            return None
        q2 = self.solve(m, ct, b2, R | frozenset(q1.selected), depth - 1, alt_lb(rlb, q1.value))
        if q2 is None:
            return None
        return self.join(q1, q2, q1.value, q2.value)


def recursive_esip(cs: int, ct: int, B_e: float, R: Iterable[int], iter: int, grid: CellGrid,
                   dom: SensingDomain, fn: RewardFunction, lb: float = NEG_INF,
                   schedule=SplitSchedule.LINEAR, config: BnBConfig = EXHAUSTIVE,
                   delta: float | None = None) -> CellPath | None:
    """One call of the cell recursion; returns None when d(cs, ct) > 2^iter L."""
    delta = delta or cost_quantum(dom.sensing_costs)
    search = CellSearch(grid, dom, fn, delta, schedule, config)
    search.top_depth = iter
    b = int(math.floor(B_e / delta + _TOL))
    return search.solve(cs, ct, b, frozenset(R), iter, lb)


@dataclass
class IterRecord:
    iter: int
    travel_budget: float
    sensing_budget: float
    value: float
    cells: tuple[int, ...]
    exact: bool = True
    extra: dict = field(default_factory=dict)


def esip_iterations(grid: CellGrid, cs: int, ct: int, budget: float) -> list[tuple[int, float]]:
    """(iter, traveling budget) pairs tried by the outer loop.

    Iteration 0 charges only the actual distance between the two cells (at
    most L); later iterations charge 2^iter L while that fits the budget.
    """
    d = grid.d(cs, ct)
    out = []
    if d <= grid.cell_width + _TOL and d <= budget + _TOL:
        out.append((0, d))
    it = 1
    while (2 ** it) * grid.cell_width <= budget + _TOL:
        if d <= (2 ** it) * grid.cell_width + _TOL:
            out.append((it, (2 ** it) * grid.cell_width))
        it += 1
    return out


def esip(dom: SensingDomain, fn: RewardFunction, query: PlanQuery, grid: CellGrid | None = None,
         R: Iterable[int] = (), schedule=SplitSchedule.LINEAR, bnb: BnBConfig | None = None,
         delta: float | None = None, cell_width: float | None = None,
         keep_trace: bool = False) -> PlanResult:
    """Plan one path on the cell decomposition and expand it to locations.

    ``query.budget`` is the cell-level budget.  The start and finish are
    always on the path and are treated as already observed, so the search
    objective is f(A | R + {s, t}).  The reported reward is f(path | R).
    """
    check_query(query, dom)
    config = bnb or EXHAUSTIVE
    if grid is None:
        if cell_width is None:
            raise ValueError("pass a grid or a cell width")
        grid = build_grid(dom, cell_width)
    R = frozenset(R)
    s, t, budget = query.start, query.finish, float(query.budget)
    cs, ct = grid.cell_of[s], grid.cell_of[t]
    ends = frozenset((s, t))
    committed = R | ends
    delta = delta or cost_quantum(dom.sensing_costs)
    control = SearchControl(time_limit=config.time_limit, keep_trace=keep_trace)
    oracle = GreedyOracle(fn, dom)
    search = CellSearch(grid, dom, fn, delta, schedule, config, control, oracle)

    iters = esip_iterations(grid, cs, ct, budget)
    if not iters:
        raise InfeasibleQueryError(
            f"cells {cs} and {ct} are {grid.d(cs, ct):g} apart; no traveling budget 2^iter L fits "
            f"budget {budget:g}")

    def quanta(bt):
        return max(int(math.floor((budget - bt) / delta + _TOL)), 0)

    seed = None
    if config.seed_with_heuristic:
        for it, bt in iters:
            h = heuristic_op(cs, ct, quanta(bt) * delta, committed, it, grid, dom, fn, oracle,
                             travel_budget=bt)
            h.diagnostics["iter"] = it
            if seed is None or better(h, seed):
                seed = h
        control.offer(seed)

    records = []
    for it, bt in iters:
        if control.expired():
            break
        b = quanta(bt)
        search.top_depth = it
        theta = control.incumbent.value if (config.enabled and control.incumbent) else NEG_INF
        cp = search.solve(cs, ct, b, committed, it, theta)
        exact = (not config.enabled) or cp.value > theta
        records.append(IterRecord(it, bt, b * delta, cp.value, cp.cells, exact))
        cp.diagnostics.setdefault("iter", it)
        if control.incumbent is None or (exact and better(cp, control.incumbent)):
            control.offer(cp)
    best = control.incumbent
    path = expand_to_tour(best, grid, dom, s, t)
    reward = residual(fn, R)(path.visited)
    schedule = SplitSchedule.parse(schedule)
    diag = {
        "iterations": [r.__dict__ for r in records],
        "value": best.value,
        "cells": best.cells,
        "chosen_iter": best.diagnostics.get("iter"),
        "from_heuristic": best.diagnostics.get("source") == "heuristic",
        "heuristic_value": None if seed is None else seed.value,
        "nodes": control.nodes,
        "explored": control.explored,
        "pruned": control.pruned,
        "timed_out": control.timed_out,
        "incumbent_trace": list(control.incumbent_trace),
        "trace": control.trace,
        "delta": delta,
        "cell_width": grid.cell_width,
        "n_cells": grid.n,
        "schedule": schedule.value,
        "cost_bound": cost_bound(budget, grid.cell_width, float(dom.sensing_costs.min()),
                                 grid.n, schedule.value),
        "cell_path": best,
    }
    return PlanResult(path, reward, path_cost(path, dom), "esip", tuple(best.selected), diag)


def plan_esip(dom: SensingDomain, fn: RewardFunction, query: PlanQuery, **kw) -> PlanResult:
    return esip(dom, fn, query, **kw)
