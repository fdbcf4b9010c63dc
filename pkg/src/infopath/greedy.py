"""Greedy subset selection, greedy path baselines and exact oracles."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .domain import (InfeasibleQueryError, Path, PlanQuery, PlanResult, SensingDomain,
                     check_query, path_cost)
from .reward import ModularReward, RewardFunction, base_and_committed

TOL = 1e-9


def _greedy_run(fn: RewardFunction, candidates, budget: float | None, dom: SensingDomain,
                committed=frozenset()):
    """Core greedy loop.  Returns (order, cumulative values)."""
    sess = fn.session(candidates, committed)
    order, values = [], []
    total = 0.0
    remaining_budget = math.inf if budget is None else float(budget)
    costs = {v: dom.sensing_cost(v) for v in sess.remaining}
    while sess.remaining:
        g = sess.gains()
        fits = np.array([costs[v] <= remaining_budget + TOL for v in sess.remaining])
        if not fits.any():
            break
        g = np.where(fits, g, -np.inf)
        k = int(np.argmax(g))
        if not g[k] > 0:
            break
        v = sess.remaining[k]
        sess.select(v)
        total += float(g[k])
        remaining_budget -= costs[v]
        order.append(v)
        values.append(total)
    return order, values


def greedy_subset(fn: RewardFunction, candidates: Iterable[int], budget: float,
                  dom: SensingDomain) -> list[int]:
    """Budgeted greedy selection by marginal gain.

    Adds the best-gain candidate whose sensing cost still fits the remaining
    budget, stopping when nothing fits or no gain is positive.  Ties go to the
    smallest id.  Returned in selection order.
    """
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    order, _ = _greedy_run(fn, list(candidates), budget, dom)
    return order


class GreedyOracle:
    """Memoised greedy selection for a fixed base reward.

    When every candidate has the same sensing cost, the greedy sequence does
    not depend on the budget (only its length does), so one unbounded trace
    per (candidates, committed) answers every budget.  Otherwise the greedy
    loop is rerun per budget.
    """

    def __init__(self, fn: RewardFunction, dom: SensingDomain, max_entries: int = 500_000):
        self.base, self.offset_committed = base_and_committed(fn)
        self.dom = dom
        self._traces: dict = {}
        self._direct: dict = {}
        self.max_entries = max_entries
        self.calls = 0

    def _trace(self, cands: frozenset, committed: frozenset):
        key = (cands, committed)
        hit = self._traces.get(key)
        if hit is None:
            if len(self._traces) > self.max_entries:
                self._traces.clear()
            order, vals = _greedy_run(self.base, cands, None, self.dom, committed)
            costs = {self.dom.sensing_cost(v) for v in cands - committed}
            unit = costs.pop() if len(costs) == 1 else None
            hit = (tuple(order), tuple(vals), unit)
            self._traces[key] = hit
        return hit

    def select(self, cands: frozenset, committed: frozenset, budget: float):
        """Greedy selection from ``cands`` given ``committed``; returns (tuple, value)."""
        self.calls += 1
        committed = committed | self.offset_committed
        if budget < self.dom.sensing_costs.min() - TOL:
            return (), 0.0
        order, vals, unit = self._trace(cands, committed)
        if unit is not None:
            k = min(len(order), int(math.floor(budget / unit + TOL)))
            return order[:k], (vals[k - 1] if k else 0.0)
        key = (cands, committed, round(budget, 9))
        hit = self._direct.get(key)
        if hit is None:
            if len(self._direct) > self.max_entries:
                self._direct.clear()
            o, v = _greedy_run(self.base, cands, budget, self.dom, committed)
            hit = (tuple(o), v[-1] if v else 0.0)
            self._direct[key] = hit
        return hit


# ---------------------------------------------------------------- path baselines

def _cheapest_insertion(nodes: list[int], v: int, dom: SensingDomain) -> tuple[float, int]:
    D = dom.distances
    iv = dom.idx(v)
    idx = [dom.idx(u) for u in nodes]
    best, pos = math.inf, -1
    for i in range(len(idx) - 1):
        a, b = idx[i], idx[i + 1]
        delta = D[a, iv] + D[iv, b] - D[a, b]
        if delta < best - 1e-15:
            best, pos = delta, i + 1
    return best + dom.sensing_cost(v), pos


def _greedy_path(dom: SensingDomain, fn: RewardFunction, query: PlanQuery, ratio: bool) -> Path:
    check_query(query, dom)
    nodes = [query.start, query.finish]
    cost = path_cost(nodes, dom)
    while True:
        visited = frozenset(nodes)
        best = None
        for v in sorted(set(dom.ids) - visited):
            delta, pos = _cheapest_insertion(nodes, v, dom)
            if cost + delta > query.budget + TOL:
                continue
            g = fn.gain(visited, v)
            if not g > 0:
                continue
            score = g / delta if ratio else g
            if best is None or score > best[0]:
                best = (score, v, pos, delta)
        if best is None:
            break
        _, v, pos, delta = best
        nodes.insert(pos, v)
        cost += delta
    return Path(tuple(nodes))


def greedy_benefit_cost(dom: SensingDomain, fn: RewardFunction, query: PlanQuery) -> Path:
    """Insert the location with the best gain per unit of added path cost.

    Added cost is measured by cheapest insertion into the current path, and a
    location is admissible only if the extended path (which already ends at
    the finish) stays within budget.
    """
    return _greedy_path(dom, fn, query, ratio=True)


def greedy_reward(dom: SensingDomain, fn: RewardFunction, query: PlanQuery) -> Path:
    """Insert the location with the highest raw gain that still fits."""
    return _greedy_path(dom, fn, query, ratio=False)


# ---------------------------------------------------------------- exact oracles

class SizeGuardError(ValueError):
    pass


def brute_force_path(dom: SensingDomain, fn: RewardFunction, query: PlanQuery,
                     max_locations: int | None = 12) -> Path:
    """Exact single-path optimum by depth-first enumeration.

    Extends simple paths from the start, keeping the finish as the last
    node.  Prunes with the budget, a dominance table on
    (current node, visited set) and a fractional-knapsack bound: every node
    still to be added is entered by its own edge, so it costs at least its
    sensing cost plus the distance to its nearest neighbour, while singleton
    gains bound marginal gains by submodularity.
    """
    if max_locations is not None and len(dom) > max_locations:
        raise SizeGuardError(f"brute force limited to {max_locations} locations, got {len(dom)}")
    check_query(query, dom)
    s, t, B = query.start, query.finish, query.budget
    D = dom.distances.tolist()
    Cs = dom.sensing_costs.tolist()
    ids = list(dom.ids)
    n = len(ids)
    si, ti = dom.idx(s), dom.idx(t)
    others = [i for i in range(n) if i != si and i != ti]
    entry = [min(D[i][j] for j in range(n) if j != i) + Cs[i] for i in range(n)]
    to_t = [D[i][ti] for i in range(n)]

    base = frozenset((s, t))
    best_val = fn.value(base)
    best = [si]
    seen: dict = {}

    def dfs(nodes: list[int], mask: int, visited: frozenset, fval: float, cost: float):
        nonlocal best_val, best
        cur = nodes[-1]
        key = (cur, mask)
        prev = seen.get(key)
        if prev is not None and prev <= cost + 1e-12:
            return
        seen[key] = cost
        if fval > best_val + 1e-12 and cost + to_t[cur] <= B + TOL:
            best_val, best = fval, list(nodes)
        row = D[cur]
        items = []
        close = to_t[cur]
        for i in others:
            if mask >> i & 1:
                continue
            c2 = cost + row[i] + Cs[i]
            if c2 + to_t[i] <= B + TOL:
                items.append((fn.gain(visited, ids[i]), i, c2))
                close = min(close, to_t[i])
        if not items:
            return
        cap = B - cost - close
        ub = 0.0
        for g, i, _ in sorted((it for it in items if it[0] > 0),
                              key=lambda it: -it[0] / entry[it[1]]):
            if entry[i] <= cap:
                ub += g
                cap -= entry[i]
            else:
                ub += g * max(cap, 0.0) / entry[i]
                break
        if fval + ub <= best_val + 1e-12:
            return
        items.sort(key=lambda x: (-x[0], x[2], x[1]))
        for g, i, c2 in items:
            nodes.append(i)
            dfs(nodes, mask | (1 << i), visited | {ids[i]}, fval + g, c2)
            nodes.pop()

    dfs([si], 0, base, best_val, 0.0)
    return Path(tuple(ids[i] for i in best) + (t,))


def feasible_node_sets(dom: SensingDomain, start: int, finish: int, budget: float,
                       max_locations: int = 14) -> dict[frozenset, float]:
    """All interior node sets admitting an s-t path within budget, with min cost.

    Held-Karp dynamic programme over subsets of the interior nodes.
    """
    if len(dom) > max_locations:
        raise SizeGuardError(f"subset enumeration limited to {max_locations} locations")
    others = [v for v in dom.ids if v != start and v != finish]
    m = len(others)
    D = dom.distances
    ix = dom.index
    oi = [ix[v] for v in others]
    cs = [dom.sensing_cost(v) for v in others]
    INF = math.inf
    # best[mask][j]: cheapest path from start visiting mask, ending at others[j]
    best = [[INF] * m for _ in range(1 << m)]
    for j in range(m):
        best[1 << j][j] = D[ix[start], oi[j]] + cs[j]
    out = {frozenset(): D[ix[start], ix[finish]]}
    for mask in range(1, 1 << m):
        row = best[mask]
        close = INF
        for j in range(m):
            cj = row[j]
            if cj > budget + TOL:
                continue
            close = min(close, cj + D[oi[j], ix[finish]])
            for k in range(m):
                if mask >> k & 1:
                    continue
                nc = cj + D[oi[j], oi[k]] + cs[k]
                nm = mask | (1 << k)
                if nc < best[nm][k]:
                    best[nm][k] = nc
        if close <= budget + TOL:
            out[frozenset(others[j] for j in range(m) if mask >> j & 1)] = close
    if out[frozenset()] > budget + TOL:
        del out[frozenset()]
    return out


# ---------------------------------------------------------------- adversarial fixture

@dataclass
class GreedyTrap:
    """Greedy-failure fixture: a cluster hidden behind a low-reward gate.

    ``cluster`` starts with the gate node o1; ``series`` is the chain g1..gm.
    The start doubles as the finish and the budget is 2B.
    """

    B: float
    eps: float
    domain: SensingDomain
    reward: ModularReward
    start: int
    t: int
    cluster: list[int]
    series: list[int]

    @property
    def query(self) -> PlanQuery:
        return PlanQuery(self.start, self.start, 2 * self.B)

    @property
    def optimal_tour(self) -> Path:
        return Path((self.start, *self.cluster, self.start))


def make_greedy_trap(B: float, eps: float, sensing_cost: float = 1e-6) -> GreedyTrap:
    """Embed the greedy-failure graph in the plane.

    The cluster lies on an arc around the start: o1 at distance B/2, the
    next node B/2 + eps away on the same ray (so skipping o1 saves nothing),
    then nodes eps apart along the arc and a last step bent inward so the
    tour closes within 2B.  The series leaves the start on the far side with
    a slight bend so its round trip also fits 2B.  ``t`` sits just short of
    distance B, so visiting it alone exhausts the budget.
    """
    ratio = B / eps
    n = int(round(ratio))
    if abs(ratio - n) > 1e-9 or n < 1:
        raise ValueError("B / eps must be a positive integer")
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    r = B / 2
    rho = r + eps
    theta = 2 * math.asin(min(1.0, eps / (2 * rho)))
    span = theta * max(n - 3, 0)
    a0 = math.pi / 2 - span / 2

    def polar(rad, ang):
        return np.array([rad * math.cos(ang), rad * math.sin(ang)])

    def bent_step(p, ang):
        tangent = np.array([-math.sin(ang), math.cos(ang)])
        radial = np.array([math.cos(ang), math.sin(ang)])
        return p + eps * (tangent - radial) / math.sqrt(2)

    pts = {0: np.zeros(2), 1: polar(B - eps / 4, 0.0)}
    cluster = [polar(r, a0)]
    if n >= 3:
        cluster.append(polar(rho, a0))
        for k in range(1, n - 2):
            cluster.append(polar(rho, a0 + k * theta))
    if n >= 2:
        last_ang = a0 + theta * max(n - 3, 0)
        cluster.append(bent_step(cluster[-1], last_ang))
    series = []
    down = -math.pi / 2
    bend = 0.3
    g = polar(eps, down)
    series.append(g)
    u = np.array([math.cos(down + bend), math.sin(down + bend)])
    for _ in range(n - 1):
        g = g + eps * u
        series.append(g)

    positions = [pts[0], pts[1], *cluster, *series]
    dom = SensingDomain.from_arrays(np.array(positions), sensing_cost)
    cl_ids = list(range(2, 2 + n))
    se_ids = list(range(2 + n, 2 + 2 * n))
    table = {0: 0.0, 1: 1.0, cl_ids[0]: eps}
    table.update({v: 1.0 for v in cl_ids[1:]})
    table.update({v: 2 * eps for v in se_ids})
    return GreedyTrap(B, eps, dom, ModularReward(table), 0, 1, cl_ids, se_ids)


def plan_result(path: Path, dom: SensingDomain, fn: RewardFunction, algorithm: str, **diag) -> PlanResult:
    return PlanResult(path, fn(path.visited), path_cost(path, dom), algorithm,
                      tuple(v for v in path.nodes[1:-1]), dict(diag))


def infeasible(query: PlanQuery, dom: SensingDomain) -> bool:
    try:
        check_query(query, dom)
    except InfeasibleQueryError:
        return True
    return False
