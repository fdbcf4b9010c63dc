"""Uniform cell grids, cell paths, tour expansion and 2-opt smoothing."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .domain import Path, SensingDomain, path_cost

LOG2_THREE_HALVES = math.log2(1.5)


@dataclass(frozen=True)
class Cell:
    id: int
    row: int
    col: int
    centroid: tuple[float, float]
    members: tuple[int, ...]


@dataclass(frozen=True, eq=False)
class CellGrid:
    """Nonempty cells of an axis-aligned square grid.

    Travel between cells is measured between square centers; travel inside
    a cell is free.
    """

    cell_width: float
    origin: tuple[float, float]
    cells: tuple[Cell, ...]
    shape: tuple[int, int] = (0, 0)

    def __len__(self):
        return len(self.cells)

    @property
    def n(self) -> int:
        return len(self.cells)

    @cached_property
    def cell_of(self) -> dict[int, int]:
        return {v: c.id for c in self.cells for v in c.members}

    @cached_property
    def distances(self) -> np.ndarray:
        p = np.array([c.centroid for c in self.cells], dtype=float).reshape(-1, 2)
        d = np.sqrt(((p[:, None, :] - p[None, :, :]) ** 2).sum(-1))
        d.setflags(write=False)
        return d

    def d(self, i: int, j: int) -> float:
        return float(self.distances[i, j])

    def members(self, cells) -> frozenset[int]:
        return frozenset(v for c in cells for v in self.cells[c].members)


def build_grid(dom: SensingDomain, cell_width: float) -> CellGrid:
    """Partition the locations into L-squares anchored at the bounding-box minimum.

    A point on a shared boundary goes to the lower-indexed square.  Empty
    squares are dropped and the remaining cells are numbered in (row, col)
    order.
    """
    L = float(cell_width)
    if not L > 0:
        raise ValueError("cell width must be positive")
    pos = dom.positions
    x0, y0 = pos.min(axis=0)

    def index(offset):
        k = math.ceil(offset / L - 1e-12) - 1
        return max(k, 0)

    buckets: dict[tuple[int, int], list[int]] = {}
    for v, (x, y) in zip(dom.ids, pos):
        buckets.setdefault((index(y - y0), index(x - x0)), []).append(v)
    keys = sorted(buckets)
    cells = tuple(
        Cell(i, r, c, (x0 + (c + 0.5) * L, y0 + (r + 0.5) * L), tuple(buckets[(r, c)]))
        for i, (r, c) in enumerate(keys)
    )
    shape = (max(r for r, _ in keys) + 1, max(c for _, c in keys) + 1)
    return CellGrid(L, (float(x0), float(y0)), cells, shape)


def width_for_count(dom: SensingDomain, n_cells: int, steps: int = 200) -> float:
    """Cell width whose grid has a nonempty-cell count closest to ``n_cells``.

    Scans widths between the extent / 1000 and the full extent on a log
    scale; the largest width among equally close counts wins.
    """
    if n_cells < 1:
        raise ValueError("n_cells must be positive")
    span = float(np.ptp(dom.positions, axis=0).max()) or 1.0
    best = None
    for L in np.geomspace(span, span / 1000, steps):
        err = abs(len(build_grid(dom, L)) - n_cells)
        if best is None or err < best[0]:
            best = (err, float(L))
    return best[1]


@dataclass
class CellPath:
    """A cell sequence with the locations selected along it.

    ``value`` is the search objective (reward of ``selected`` relative to the
    committed set the path was planned against).
    """

    cells: tuple[int, ...]
    selected: tuple[int, ...]
    spent_experimental: float = 0.0
    spent_travel: float = 0.0
    value: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def per_cell(self, grid: CellGrid) -> dict[int, tuple[int, ...]]:
        out: dict[int, list[int]] = {c: [] for c in self.cells}
        for v in self.selected:
            out.setdefault(grid.cell_of[v], []).append(v)
        return {c: tuple(vs) for c, vs in out.items()}


def cell_travel(cells: Sequence[int], grid: CellGrid) -> float:
    return float(sum(grid.d(a, b) for a, b in zip(cells[:-1], cells[1:])))


def _prim(D: np.ndarray) -> list[int]:
    """Parent array of a minimum spanning tree rooted at index 0."""
    n = len(D)
    parent = [-1] * n
    if n == 0:
        return parent
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    best = D[0].astype(float).copy()
    link = np.zeros(n, dtype=int)
    for _ in range(n - 1):
        cand = np.where(in_tree, np.inf, best)
        k = int(np.argmin(cand))
        in_tree[k] = True
        parent[k] = int(link[k])
        closer = D[k] < best
        best = np.where(closer, D[k], best)
        link = np.where(closer, k, link)
    return parent


def mst_weight(nodes: Sequence[int], dom: SensingDomain) -> float:
    nodes = list(dict.fromkeys(nodes))
    if len(nodes) < 2:
        return 0.0
    ix = [dom.idx(v) for v in nodes]
    D = dom.distances[np.ix_(ix, ix)]
    parent = _prim(D)
    return float(sum(D[k, p] for k, p in enumerate(parent) if p >= 0))


def _mst_walk(start: int, finish: int, interior: list[int], dom: SensingDomain) -> list[int]:
    """Shortcut of the doubled spanning tree walked from start to finish."""
    nodes = list(dict.fromkeys([start, *interior, finish]))
    ix = [dom.idx(v) for v in nodes]
    parent = _prim(dom.distances[np.ix_(ix, ix)])
    children: dict[int, list[int]] = {k: [] for k in range(len(nodes))}
    for k, p in enumerate(parent):
        if p >= 0:
            children[p].append(k)
    f = nodes.index(finish)
    on_path = set()
    k = f
    while k >= 0:
        on_path.add(k)
        k = parent[k]
    order, stack = [], [0]
    while stack:
        k = stack.pop()
        order.append(nodes[k])
        # the branch towards the finish is pushed first so it is walked last
        kids = sorted(children[k], key=lambda c: (c not in on_path, nodes[c]))
        stack.extend(kids)
    if start != finish:
        order = [v for v in order if v != finish]
    return order + [finish]


def _centroid_walk(cp: CellPath, grid: CellGrid, start: int, finish: int) -> list[int]:
    groups = cp.per_cell(grid)
    seen, seq = set(), []
    for c in cp.cells:
        if c in seen:
            continue
        seen.add(c)
        seq.extend(v for v in groups.get(c, ()) if v not in (start, finish))
    for c, vs in groups.items():
        if c not in seen:
            seq.extend(v for v in vs if v not in (start, finish))
    return [start, *dict.fromkeys(seq), finish]


def expand_to_tour(cp: CellPath, grid: CellGrid, dom: SensingDomain, start: int, finish: int) -> Path:
    """Turn a cell path into a location path from ``start`` to ``finish``.

    Two doubled-tree constructions are tried: the tree linking every
    selected location to its cell center and the centers along the cell
    sequence, and a minimum spanning tree over the selected locations and
    endpoints.  Both walks are shortcut to first visits, the cheaper one is
    kept and then smoothed with 2-opt.
    """
    interior = [v for v in dict.fromkeys(cp.selected) if v not in (start, finish)]
    a = _centroid_walk(cp, grid, start, finish)
    b = _mst_walk(start, finish, interior, dom)
    best = a if path_cost(a, dom) <= path_cost(b, dom) else b
    return two_opt_smooth(Path(tuple(best)), dom)


def two_opt_smooth(path: Path, dom: SensingDomain) -> Path:
    """2-opt with fixed endpoints, first improvement in increasing (i, j) order."""
    p = [dom.idx(v) for v in path.nodes]
    n = len(p)
    if n < 4:
        return path
    D = dom.distances.tolist()
    improved = True
    while improved:
        improved = False
        for i in range(1, n - 2):
            a, b = p[i - 1], p[i]
            dab = D[a][b]
            for j in range(i + 1, n - 1):
                c, d = p[j], p[j + 1]
                if D[a][c] + D[b][d] < dab + D[c][d] - 1e-12:
                    p[i:j + 1] = p[i:j + 1][::-1]
                    improved = True
                    break
            if improved:
                break
    ids = dom.ids
    return Path(tuple(ids[k] for k in p))


def sd_budget(B: float, L: float) -> float:
    """Budget that makes every budget-B path representable on an L-grid."""
    return 2 * math.sqrt(2) * B + 4 * L


def cost_bound(B_sd: float, L: float, c_exp: float, n_cells: int | None = None,
               schedule: str = "linear") -> float:
    """Upper bound on the smoothed path cost for a cell-level budget ``B_sd``.

    Equals 2 B_sd (1 + L sqrt(2) / c_exp); exponential split schedules are
    allowed an extra factor N^log2(3/2).
    """
    bound = 2 * B_sd * (1 + L * math.sqrt(2) / c_exp)
    if schedule != "linear":
        if n_cells is None:
            raise ValueError("n_cells is required for exponential schedules")
        bound *= max(n_cells, 1) ** LOG2_THREE_HALVES
    return bound
