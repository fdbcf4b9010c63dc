"""Branch-and-bound pieces for the cell-level search.

Upper bounds relax the path into a budgeted subset problem over the cells
reachable within the hop budget and scale the greedy answer by the greedy
approximation factor.  Lower bounds come from a cheap insertion heuristic
and from the bound of the sibling subproblem.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .decomp import CellGrid, CellPath, cell_travel
from .domain import SensingDomain
from .greedy import GreedyOracle
from .reward import RewardFunction

UB_FACTOR = 1.0 / (1.0 - 1.0 / math.e)
_TOL = 1e-9


@dataclass(frozen=True)
class BnBConfig:
    """Search knobs.

    ``alpha`` scales the incumbent before comparing it with a child's upper
    bound (1 keeps pruning exact).  ``top_k`` keeps only the K children with
    the largest bounds at every node.  ``larger_first`` plans the half with
    the larger experimental budget first; it changes the search space, so it
    applies whether or not pruning is enabled.
    """

    enabled: bool = True
    alpha: float = 1.0
    top_k: int | None = None
    time_limit: float | None = None
    seed_with_heuristic: bool = True
    larger_first: bool = False

    def __post_init__(self):
        if not self.alpha >= 1:
            raise ValueError("alpha must be >= 1")
        if self.top_k is not None and self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.time_limit is not None and self.time_limit < 0:
            raise ValueError("time_limit must be nonnegative")


EXHAUSTIVE = BnBConfig(enabled=False)


@dataclass(frozen=True)
class BoundRecord:
    upper: float
    lower: float
    source: str = "heuristic"

    def __post_init__(self):
        if self.source not in ("heuristic", "altLB", "incumbent"):
            raise ValueError(f"unknown bound source {self.source!r}")


def reachable_cells(cs: int, ct: int, depth: int, grid: CellGrid) -> list[int]:
    """Cells whose detour from cs to ct fits the hop budget 2^depth L."""
    lim = (2 ** depth) * grid.cell_width + _TOL
    D = grid.distances
    return [i for i in range(grid.n) if D[cs, i] + D[i, ct] <= lim]


def calculate_ub(cs: int, ct: int, budget: float, depth: int, R: Iterable[int], grid: CellGrid,
                 dom: SensingDomain, fn: RewardFunction, oracle: GreedyOracle | None = None) -> float:
    """Upper bound on the reward of any cell path of the subproblem.

    Greedy selection within ``budget`` over every location in a reachable
    cell, times (1 - 1/e)^-1.
    """
    if budget <= 0:
        return 0.0
    oracle = oracle or GreedyOracle(fn, dom)
    cells = reachable_cells(cs, ct, depth, grid)
    if not cells:
        return 0.0
    _, val = oracle.select(grid.members(cells), frozenset(R), budget)
    return val * UB_FACTOR


def heuristic_op(cs: int, ct: int, budget: float, R: Iterable[int], depth: int, grid: CellGrid,
                 dom: SensingDomain, fn: RewardFunction, oracle: GreedyOracle | None = None,
                 travel_budget: float | None = None) -> CellPath:
    """Fast feasible cell path by cheapest insertion.

    Starts from the direct cell path and repeatedly inserts the cell with
    the best ratio of reward gain to added travel, while the travel stays
    within ``travel_budget`` (default 2^depth L).  The cell order is then
    shortened with 2-opt and locations are allocated greedily within
    ``budget`` over the visited cells.
    """
    oracle = oracle or GreedyOracle(fn, dom)
    R = frozenset(R)
    T = (2 ** depth) * grid.cell_width if travel_budget is None else travel_budget
    D = grid.distances
    seq = [cs, ct]
    travel = float(D[cs, ct])

    def alloc(cells):
        if budget <= 0:
            return (), 0.0
        return oracle.select(grid.members(cells), R, budget)

    sel, val = alloc(seq)
    while True:
        best = None
        for c in range(grid.n):
            if c in seq:
                continue
            pos, detour = min(
                ((k + 1, D[seq[k], c] + D[c, seq[k + 1]] - D[seq[k], seq[k + 1]])
                 for k in range(len(seq) - 1)),
                key=lambda x: (x[1], x[0]),
            )
            if travel + detour > T + _TOL:
                continue
            s2, v2 = alloc(set(seq) | {c})
            gain = v2 - val
            if not gain > 1e-12:
                continue
            ratio = gain / max(detour, 1e-9 * grid.cell_width)
            if best is None or ratio > best[0]:
                best = (ratio, c, pos, detour, s2, v2)
        if best is None:
            break
        _, c, pos, detour, sel, val = best
        seq.insert(pos, c)
        travel += detour
    seq = _two_opt_cells(seq, grid)
    cells = _collapse(seq)
    return CellPath(cells, tuple(sel), dom.set_cost(sel), cell_travel(cells, grid), val,
                    {"source": "heuristic"})


def _collapse(seq: Sequence[int]) -> tuple[int, ...]:
    out = [seq[0]]
    for c in seq[1:]:
        if c != out[-1]:
            out.append(c)
    return tuple(out)


def _two_opt_cells(seq: list[int], grid: CellGrid) -> list[int]:
    D = grid.distances
    seq = list(seq)
    n = len(seq)
    improved = True
    while improved:
        improved = False
        for i in range(1, n - 2):
            for j in range(i + 1, n - 1):
                a, b, c, d = seq[i - 1], seq[i], seq[j], seq[j + 1]
                if D[a, c] + D[b, d] < D[a, b] + D[c, d] - 1e-12:
                    seq[i:j + 1] = seq[i:j + 1][::-1]
                    improved = True
                    break
            if improved:
                break
    return seq


def alt_lb(reward_lb: float, other_bound: float, heuristic: float = 0.0) -> float:
    """Lower bound a subpath must beat for its parent to improve.

    For the first subpath ``other_bound`` is the sibling's upper bound; for
    the second it is the realized reward of the first.
    """
    return max(heuristic, reward_lb - other_bound)


def order_children(children: Sequence[tuple], top_k: int | None = None) -> list[tuple]:
    """Sort (cell, split, ub, ...) tuples by decreasing ub, ties by (cell, split)."""
    out = sorted(children, key=lambda ch: (-ch[2], ch[0], ch[1]))
    if top_k is not None:
        out = out[:top_k]
    return out


def prune_decision(child_ub: float, reward_lb: float, alpha: float = 1.0) -> bool:
    """True when the child cannot beat alpha times the incumbent."""
    if alpha < 1:
        raise ValueError("alpha must be >= 1")
    return not child_ub > alpha * reward_lb


@dataclass
class SearchControl:
    """Deadline, counters, the node trace and the incumbent history."""

    time_limit: float | None = None
    keep_trace: bool = False
    started: float = field(default_factory=time.perf_counter)
    timed_out: bool = False
    nodes: int = 0
    pruned: int = 0
    explored: int = 0
    trace: list = field(default_factory=list)
    incumbent_trace: list = field(default_factory=list)
    incumbent: CellPath | None = None

    def elapsed(self) -> float:
        return time.perf_counter() - self.started

    def expired(self) -> bool:
        if self.timed_out:
            return True
        if self.time_limit is not None and self.elapsed() >= self.time_limit:
            self.timed_out = True
        return self.timed_out

    def record(self, depth: int, ub: float, lb: float, pruned: bool) -> None:
        if pruned:
            self.pruned += 1
        else:
            self.explored += 1
        if self.keep_trace:
            self.trace.append({"depth": depth, "ub": ub, "lb": lb, "pruned": pruned,
                               "t": round(self.elapsed(), 6)})

    def offer(self, cp: CellPath) -> bool:
        """Adopt ``cp`` as incumbent if strictly better; logs the improvement."""
        if self.incumbent is None or better(cp, self.incumbent):
            self.incumbent = cp
            self.incumbent_trace.append((self.elapsed(), cp.value))
            return True
        return False


def anytime_result(control: SearchControl) -> CellPath | None:
    return control.incumbent


def better(a: CellPath, b: CellPath) -> bool:
    """Strict order: higher value, then fewer cells, then smaller cells, then smaller selection."""
    if a.value != b.value:
        return a.value > b.value
    if len(a.cells) != len(b.cells):
        return len(a.cells) < len(b.cells)
    if a.cells != b.cells:
        return a.cells < b.cells
    return tuple(sorted(a.selected)) < tuple(sorted(b.selected))


def write_trace(records: Iterable[dict], path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
