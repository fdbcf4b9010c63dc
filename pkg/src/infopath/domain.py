"""Sensing locations, the travel metric, paths and cost accounting."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np


class UnknownLocationError(KeyError):
    pass


class InfeasibleQueryError(ValueError):
    """Raised when no path can satisfy the budget."""


@dataclass(frozen=True)
class Location:
    id: int
    pos: tuple[float, float]
    sensing_cost: float = 1.0

    def __post_init__(self):
        if not self.sensing_cost > 0:
            raise ValueError(f"location {self.id}: sensing cost must be positive")


@dataclass(frozen=True, eq=False)
class SensingDomain:
    """A finite set of sensing locations in the plane.

    Travel cost between two locations is their Euclidean distance times
    ``travel_cost_per_meter``.  If ``uniform_experiment_cost`` is set it
    replaces every per-location sensing cost.
    """

    locations: tuple[Location, ...]
    travel_cost_per_meter: float = 1.0
    uniform_experiment_cost: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "locations", tuple(self.locations))
        if len(self.locations) < 2:
            raise ValueError("a domain needs at least two locations")
        ids = [loc.id for loc in self.locations]
        if len(set(ids)) != len(ids):
            raise ValueError("location ids must be unique")
        if not self.travel_cost_per_meter > 0:
            raise ValueError("travel_cost_per_meter must be positive")
        if self.uniform_experiment_cost is not None and not self.uniform_experiment_cost > 0:
            raise ValueError("uniform_experiment_cost must be positive")

    @classmethod
    def from_arrays(cls, positions, sensing_costs=1.0, ids=None, **kw) -> "SensingDomain":
        positions = np.asarray(positions, dtype=float).reshape(-1, 2)
        n = len(positions)
        costs = np.broadcast_to(np.asarray(sensing_costs, dtype=float), (n,))
        ids = range(n) if ids is None else ids
        locs = tuple(
            Location(int(i), (float(p[0]), float(p[1])), float(c))
            for i, p, c in zip(ids, positions, costs)
        )
        return cls(locs, **kw)

    def __len__(self):
        return len(self.locations)

    @cached_property
    def ids(self) -> tuple[int, ...]:
        return tuple(loc.id for loc in self.locations)

    @cached_property
    def index(self) -> dict[int, int]:
        return {loc.id: i for i, loc in enumerate(self.locations)}

    @cached_property
    def positions(self) -> np.ndarray:
        arr = np.array([loc.pos for loc in self.locations], dtype=float)
        arr.setflags(write=False)
        return arr

    @cached_property
    def sensing_costs(self) -> np.ndarray:
        if self.uniform_experiment_cost is not None:
            arr = np.full(len(self.locations), float(self.uniform_experiment_cost))
        else:
            arr = np.array([loc.sensing_cost for loc in self.locations], dtype=float)
        arr.setflags(write=False)
        return arr

    @cached_property
    def distances(self) -> np.ndarray:
        p = self.positions
        d = np.sqrt(((p[:, None, :] - p[None, :, :]) ** 2).sum(-1)) * self.travel_cost_per_meter
        d.setflags(write=False)
        return d

    def idx(self, v: int) -> int:
        try:
            return self.index[v]
        except KeyError:
            raise UnknownLocationError(f"unknown location id {v!r}") from None

    def sensing_cost(self, v: int) -> float:
        return float(self.sensing_costs[self.idx(v)])

    def travel(self, u: int, v: int) -> float:
        return float(self.distances[self.idx(u), self.idx(v)])

    def pos(self, v: int) -> np.ndarray:
        return self.positions[self.idx(v)]

    def set_cost(self, nodes: Iterable[int]) -> float:
        return float(sum(self.sensing_cost(v) for v in nodes))


@dataclass(frozen=True)
class Path:
    """Ordered location ids; first is the start and last is the finish."""

    nodes: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(int(v) for v in self.nodes))
        if len(self.nodes) < 2:
            raise ValueError("a path has at least two nodes")

    @property
    def start(self) -> int:
        return self.nodes[0]

    @property
    def finish(self) -> int:
        return self.nodes[-1]

    @property
    def visited(self) -> frozenset[int]:
        return frozenset(self.nodes)

    def __len__(self):
        return len(self.nodes)

    def __iter__(self):
        return iter(self.nodes)


@dataclass(frozen=True)
class PlanQuery:
    start: int
    finish: int
    budget: float


@dataclass
class PlanResult:
    """Output of a single-robot planner."""

    path: Path
    reward: float
    cost: float
    algorithm: str = ""
    selected: tuple[int, ...] = ()
    diagnostics: dict = field(default_factory=dict)


def travel_cost(path: Path | Sequence[int], dom: SensingDomain) -> float:
    nodes = path.nodes if isinstance(path, Path) else tuple(path)
    idx = [dom.idx(v) for v in nodes]
    return float(sum(dom.distances[a, b] for a, b in zip(idx[:-1], idx[1:])))


def sensing_total(path: Path | Sequence[int], dom: SensingDomain) -> float:
    """Sensing cost paid along the path (interior nodes only)."""
    nodes = path.nodes if isinstance(path, Path) else tuple(path)
    return float(sum(dom.sensing_costs[dom.idx(v)] for v in nodes[1:-1]))


def path_cost(path: Path | Sequence[int], dom: SensingDomain) -> float:
    """Travel along every edge plus sensing at every interior node.

    Start and finish are never charged a sensing cost, so the two-node path
    (s, t) costs exactly C(s, t).
    """
    nodes = path.nodes if isinstance(path, Path) else tuple(path)
    for v in nodes:
        dom.idx(v)
    return travel_cost(nodes, dom) + sensing_total(nodes, dom)


def feasible(path: Path, query: PlanQuery, dom: SensingDomain, tol: float = 1e-9) -> bool:
    if path.start != query.start or path.finish != query.finish:
        return False
    return path_cost(path, dom) <= query.budget + tol


def check_query(query: PlanQuery, dom: SensingDomain, tol: float = 1e-9) -> None:
    dom.idx(query.start)
    dom.idx(query.finish)
    if dom.travel(query.start, query.finish) > query.budget + tol:
        raise InfeasibleQueryError(
            f"budget {query.budget:g} is below the direct travel cost "
            f"{dom.travel(query.start, query.finish):g}"
        )


def cost_quantum(values, max_divisor: int = 100, tol: float = 1e-9) -> float:
    """Largest q = m/k (k <= max_divisor) such that all values are multiples of q.

    ``m`` is the smallest nonzero value.  Falls back to m/max_divisor when no
    exact divisor exists.
    """
    vals = np.asarray([v for v in np.ravel(values) if v > tol], dtype=float)
    if vals.size == 0:
        return 1.0
    m = float(vals.min())
    for k in range(1, max_divisor + 1):
        q = m / k
        r = vals / q
        if np.all(np.abs(r - np.round(r)) <= tol * np.maximum(1.0, r)):
            return q
    return m / max_divisor
