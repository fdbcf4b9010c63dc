"""Command-line front end: data files, synthetic fields, planning and reports."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .bnb import BnBConfig, write_trace
from .decomp import CellGrid, build_grid, two_opt_smooth, width_for_count
from .domain import (InfeasibleQueryError, Path, PlanQuery, PlanResult, SensingDomain, check_query,
                     path_cost, sensing_total, travel_cost)
from .esip import SplitSchedule, esip
from .greedy import SizeGuardError, brute_force_path, greedy_benefit_cost, greedy_reward, plan_result
from .multi import MultiRobotQuery, select_starts_greedy, sequential_allocation
from .reward import (GPModel, HyperGrid, MutualInformation, RewardFunction, SEKernel, gp_fit,
                     gp_posterior, residual)
from .rgreedy import plan_rgreedy


class DatasetError(ValueError):
    pass


# ---------------------------------------------------------------- datasets

@dataclass(eq=False)
class Dataset:
    """Locations with one or more columns of readings.

    Column 0 is the training column by convention.  Values are stored as
    read; the training mean is subtracted when a model is fitted.
    """

    ids: tuple[int, ...]
    positions: np.ndarray
    values: np.ndarray
    columns: tuple[str, ...]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.ids = tuple(int(i) for i in self.ids)
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        self.values = np.asarray(self.values, dtype=float).reshape(len(self.ids), -1)
        self.columns = tuple(self.columns)
        if len(set(self.ids)) != len(self.ids):
            raise DatasetError("duplicate location ids")
        if self.values.shape[1] < 1 or self.values.shape[1] != len(self.columns):
            raise DatasetError("need at least one value column, one name per column")
        if not (np.isfinite(self.positions).all() and np.isfinite(self.values).all()):
            raise DatasetError("non-finite numbers in dataset")

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.ids == other.ids and self.columns == other.columns
                and np.array_equal(self.positions, other.positions)
                and np.array_equal(self.values, other.values))

    def __len__(self):
        return len(self.ids)

    def column(self, name_or_index) -> np.ndarray:
        if isinstance(name_or_index, str):
            if name_or_index not in self.columns:
                raise DatasetError(f"no column named {name_or_index!r}")
            return self.values[:, self.columns.index(name_or_index)]
        if not 0 <= name_or_index < len(self.columns):
            raise DatasetError(f"no column {name_or_index}")
        return self.values[:, name_or_index]

    def train_mean(self, col=0) -> float:
        return float(self.column(col).mean())

    def centered(self, col=0) -> np.ndarray:
        y = self.column(col)
        return y - y.mean()

    def domain(self, experiment_cost: float = 1.0) -> SensingDomain:
        return SensingDomain.from_arrays(self.positions, experiment_cost, self.ids)


def ingest_csv(path) -> Dataset:
    """Read ``id,x,y,value[,value2,...]``; errors name the offending line."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DatasetError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if len(header) < 4 or [h.lower() for h in header[:3]] != ["id", "x", "y"]:
        raise DatasetError(f"{path}: line 1: header must start with id,x,y and name a value column")
    ids, pos, vals, seen = [], [], [], set()
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DatasetError(f"{path}: line {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            i = int(row[0])
            nums = [float(c) for c in row[1:]]
        except ValueError:
            raise DatasetError(f"{path}: line {lineno}: non-numeric field") from None
        if not all(math.isfinite(x) for x in nums):
            raise DatasetError(f"{path}: line {lineno}: non-finite number")
        if i in seen:
            raise DatasetError(f"{path}: line {lineno}: duplicate id {i}")
        seen.add(i)
        ids.append(i)
        pos.append(nums[:2])
        vals.append(nums[2:])
    if not ids:
        raise DatasetError(f"{path}: no data rows")
    return Dataset(tuple(ids), np.array(pos), np.array(vals), tuple(header[3:]))


def emit_csv(ds: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "x", "y", *ds.columns])
        for i, p, v in zip(ds.ids, ds.positions, ds.values):
            w.writerow([i, repr(float(p[0])), repr(float(p[1])), *(repr(float(x)) for x in v)])


# ---------------------------------------------------------------- synthetic fields

@dataclass(frozen=True)
class SynthPreset:
    extent: tuple[float, float]
    n_locations: int
    experiment_cost: float
    kernel: SEKernel
    shape: str = "box"


PRESETS = {
    "lake": SynthPreset((250.0, 50.0), 218, 10.5, SEKernel(1.0, 30.0, 0.01), "lake"),
    "berkeley": SynthPreset((45.0, 40.0), 52, 9.0, SEKernel(1.0, 10.0, 0.01)),
    "precip": SynthPreset((7.0, 9.0), 167, 1.4, SEKernel(1.0, 2.0, 0.01)),
}


def _lake_mask(x, y, W, H):
    """A winding band across the field."""
    center = H / 2 + 0.3 * H * np.sin(2 * np.pi * x / (0.8 * W))
    return np.abs(y - center) <= 0.22 * H


def _sample_positions(rng, n, extent, shape):
    W, H = extent
    if shape == "box":
        return rng.uniform((0.0, 0.0), (W, H), size=(n, 2))
    out = np.empty((0, 2))
    while len(out) < n:
        cand = rng.uniform((0.0, 0.0), (W, H), size=(4 * n, 2))
        keep = cand[_lake_mask(cand[:, 0], cand[:, 1], W, H)]
        out = np.vstack([out, keep])
    return out[:n]


def gen_synth(seed: int, n_locations: int | None = None, extent: tuple[float, float] | None = None,
              kernel: SEKernel | None = None, preset: str | None = None,
              n_columns: int = 2) -> Dataset:
    """Random locations with readings drawn from a GP.

    Each column is an independent draw (plus observation noise); column 0
    plays the training scan and the others held-out scans.
    """
    p = PRESETS[preset] if preset else None
    n = n_locations or (p.n_locations if p else None)
    extent = extent or (p.extent if p else None)
    kernel = kernel or (p.kernel if p else SEKernel())
    if n is None or extent is None:
        raise ValueError("give n_locations and extent, or a preset")
    if n < 2:
        raise ValueError("need at least two locations")
    rng = np.random.default_rng(seed)
    pos = _sample_positions(rng, n, extent, p.shape if p else "box")
    K = kernel(pos) + 1e-8 * kernel.signal_variance * np.eye(n)
    chol = np.linalg.cholesky(K)
    f = chol @ rng.standard_normal((n, n_columns))
    y = f + math.sqrt(kernel.noise_variance) * rng.standard_normal((n, n_columns))
    meta = {"seed": seed, "preset": preset, "kernel": kernel,
            "experiment_cost": p.experiment_cost if p else 1.0}
    cols = tuple(f"scan{j + 1}" for j in range(n_columns))
    return Dataset(tuple(range(n)), pos, y, cols, meta)


# ---------------------------------------------------------------- models and evaluation

def default_hypergrid(ds: Dataset, col=0) -> HyperGrid:
    y = ds.centered(col)
    var = float(y.var()) or 1.0
    span = float(np.ptp(ds.positions, axis=0).max()) or 1.0
    return HyperGrid(tuple(var * f for f in (0.5, 1.0, 2.0)),
                     tuple(span * f for f in (0.05, 0.1, 0.2, 0.4)),
                     tuple(var * f for f in (0.01, 0.05, 0.2)))


def fit_kernel(ds: Dataset, col=0, grid: HyperGrid | None = None) -> SEKernel:
    y = ds.centered(col)
    model = gp_fit(list(zip(ds.positions, y)), grid or default_hypergrid(ds, col))
    return model.kernel


def eval_rmse(ds: Dataset, column, observed: Iterable[int], kernel: SEKernel, train_column=0) -> float:
    """RMS error of GP predictions after observing ``observed`` in ``column``.

    Observed locations predict their own reading; the rest use the training
    mean plus the posterior mean of the centered readings.
    """
    truth = ds.column(column)
    m = ds.train_mean(train_column)
    index = {v: i for i, v in enumerate(ds.ids)}
    observed = list(dict.fromkeys(observed))
    for v in observed:
        if v not in index:
            raise DatasetError(f"observed location {v} is not in the dataset")
    model = GPModel(kernel, ds.positions, ds.ids)
    post = gp_posterior(model, {v: truth[index[v]] - m for v in observed})
    pred = truth.copy()
    for v, (mu, _) in post.items():
        pred[index[v]] = m + mu
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


CURVE_HEADER = ("algorithm", "budget", "metric", "value")


def emit_curves(rows: Iterable[tuple], path) -> int:
    """Write (algorithm, budget, metric, value) rows; returns the row count."""
    n = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_HEADER)
        for alg, budget, metric, value in rows:
            w.writerow([alg, repr(float(budget)), metric, repr(float(value))])
            n += 1
    return n


def read_curves(path) -> list[tuple[str, float, str, float]]:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        next(r)
        return [(a, float(b), m, float(v)) for a, b, m, v in r]


def _segment_distance(p, a, b) -> float:
    ab = b - a
    L2 = float(ab @ ab)
    if L2 == 0:
        return float(np.linalg.norm(p - a))
    u = min(max(float((p - a) @ ab) / L2, 0.0), 1.0)
    return float(np.linalg.norm(p - (a + u * ab)))


def uniform_density_baseline(dom: SensingDomain, fn: RewardFunction, grid: CellGrid,
                             query: PlanQuery, per_cell: int = 2) -> Path:
    """Two greedy picks in each cell nearest the start-finish segment, while the path fits.

    Cells are taken in order of their center's distance to the segment.
    Picks are ordered along the segment and the path is smoothed with 2-opt;
    if both picks of a cell do not fit, one is tried before stopping.
    """
    check_query(query, dom)
    s, t = query.start, query.finish
    a, b = dom.pos(s), dom.pos(t)
    ab = b - a
    order = sorted(range(grid.n), key=lambda c: (_segment_distance(np.array(grid.cells[c].centroid), a, b), c))
    chosen: list[int] = []
    path = Path((s, t))

    def route(nodes):
        proj = sorted(nodes, key=lambda v: (float((dom.pos(v) - a) @ ab), v))
        return two_opt_smooth(Path((s, *proj, t)), dom)

    for c in order:
        members = [v for v in grid.cells[c].members if v not in (s, t) and v not in chosen]
        if not members:
            continue
        sess = residual(fn, frozenset(chosen) | {s, t}).session(members)
        picks = []
        while sess.remaining and len(picks) < per_cell:
            g = sess.gains()
            k = int(np.argmax(g))
            v = sess.remaining[k]
            sess.select(v)
            picks.append(v)
        placed = False
        for m in range(len(picks), 0, -1):
            trial = route(chosen + picks[:m])
            if path_cost(trial, dom) <= query.budget + 1e-9:
                chosen += picks[:m]
                path = trial
                placed = m == len(picks)
                break
        if not placed:
            break
    return path


# ---------------------------------------------------------------- reports

@dataclass
class PlanReport:
    """Everything needed to audit a planning run.

    ``verify`` recomputes costs and rewards from the emitted paths.
    """

    command: str
    algorithm: str
    query: dict
    robots: list[dict]
    joint_reward: float
    diagnostics: dict
    config_hash: str
    seed: int
    wall_time: float

    @classmethod
    def build(cls, command, algorithm, query, results: Sequence[PlanResult], dom: SensingDomain,
              fn: RewardFunction, config_hash: str, seed: int, wall_time: float,
              diagnostics: dict | None = None) -> "PlanReport":
        robots, A = [], frozenset()
        for r in results:
            p = r.path
            robots.append({
                "start": p.start, "finish": p.finish,
                "path": list(p.nodes),
                "coords": [[float(x) for x in dom.pos(v)] for v in p.nodes],
                "travel_cost": travel_cost(p, dom),
                "sensing_cost": sensing_total(p, dom),
                "cost": path_cost(p, dom),
                "reward": fn(A | p.visited) - fn(A),
            })
            A = A | p.visited
        return cls(command, algorithm, query, robots, fn(A), diagnostics or {}, config_hash, seed,
                   wall_time)

    def verify(self, dom: SensingDomain, fn: RewardFunction, tol: float = 1e-9) -> bool:
        A = frozenset()
        for r in self.robots:
            p = Path(tuple(r["path"]))
            if abs(path_cost(p, dom) - r["cost"]) > tol:
                return False
            if abs((fn(A | p.visited) - fn(A)) - r["reward"]) > tol:
                return False
            A = A | p.visited
        return abs(fn(A) - self.joint_reward) <= tol

    def machine(self) -> dict:
        return {"command": self.command, "algorithm": self.algorithm, "query": self.query,
                "robots": self.robots, "joint_reward": self.joint_reward,
                "diagnostics": self.diagnostics, "config_hash": self.config_hash,
                "seed": self.seed, "wall_time": self.wall_time}

    def to_text(self) -> str:
        lines = [f"# plan report ({self.command}, {self.algorithm})",
                 f"query: {json.dumps(self.query, sort_keys=True)}",
                 f"joint reward: {self.joint_reward:.12g}"]
        for i, r in enumerate(self.robots):
            lines.append(f"robot {i}: {r['start']} -> {r['finish']}  cost {r['cost']:.6f} "
                         f"(travel {r['travel_cost']:.6f}, sensing {r['sensing_cost']:.6f})  "
                         f"reward {r['reward']:.12g}")
            lines.append("  path: " + " ".join(map(str, r["path"])))
        lines.append(f"config hash: {self.config_hash}  seed: {self.seed}")
        lines.append(f"wall time: {self.wall_time:.3f} s")
        lines.append("--- json ---")
        lines.append(json.dumps(self.machine(), sort_keys=True, default=_jsonable))
        return "\n".join(lines) + "\n"

    @staticmethod
    def parse(text: str) -> dict:
        return json.loads(text.split("--- json ---\n", 1)[1])


def _jsonable(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (set, frozenset, tuple)):
        return list(obj)
    if hasattr(obj, "__dict__"):
        return {k: v for k, v in obj.__dict__.items() if k != "diagnostics"}
    return str(obj)


# ---------------------------------------------------------------- command line

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _ids(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated ids, got {text!r}") from None


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="infopath", description="Informative path planning on GP fields.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sy = sub.add_parser("synth", help="write a synthetic dataset")
    sy.add_argument("--preset", choices=sorted(PRESETS))
    sy.add_argument("--n", type=int)
    sy.add_argument("--extent", type=float, nargs=2, metavar=("W", "H"))
    sy.add_argument("--lengthscale", type=_positive)
    sy.add_argument("--columns", type=int, default=2)
    sy.add_argument("--seed", type=int, default=0)
    sy.add_argument("--out", required=True)

    for name in ("plan", "plan-multi"):
        p = sub.add_parser(name, help="plan a path" if name == "plan" else "plan several robots")
        p.add_argument("--data", required=True, help="CSV with header id,x,y,value[,...]")
        p.add_argument("--budget", type=_positive, required=True)
        p.add_argument("--start", type=int)
        p.add_argument("--finish", type=int)
        g = p.add_mutually_exclusive_group()
        g.add_argument("--cells", type=int)
        g.add_argument("--cell-width", type=_positive)
        p.add_argument("--split", choices=["linear", "exp", "exp1"], default="linear")
        p.add_argument("--bnb", dest="bnb", action="store_true", default=True)
        p.add_argument("--no-bnb", dest="bnb", action="store_false")
        p.add_argument("--alpha", type=float, default=1.0)
        p.add_argument("--topk", type=int)
        p.add_argument("--time-limit", type=float)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--algo", choices=["esip", "rgreedy", "greedy-bc", "greedy-r", "uniform", "brute"],
                       default="esip")
        p.add_argument("--iter", type=int, help="recursion depth for rgreedy")
        p.add_argument("--experiment-cost", type=_positive, default=1.0)
        p.add_argument("--lengthscale", type=_positive)
        p.add_argument("--signal-var", type=_positive)
        p.add_argument("--noise-var", type=_positive)
        p.add_argument("--out")
        p.add_argument("--trace")
        p.add_argument("--threads", type=int, default=1)
        if name == "plan-multi":
            p.add_argument("--robots", type=int, default=1)
            p.add_argument("--starts", type=_ids)
    return ap


def _config_hash(args) -> str:
    skip = {"out", "trace", "threads"}
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()[:12]


def _kernel_from_args(args, ds: Dataset) -> SEKernel:
    if args.lengthscale and args.signal_var and args.noise_var:
        return SEKernel(args.signal_var, args.lengthscale, args.noise_var)
    k = fit_kernel(ds)
    return SEKernel(args.signal_var or k.signal_variance, args.lengthscale or k.lengthscale,
                    args.noise_var or k.noise_variance)


def _grid_from_args(args, dom: SensingDomain) -> CellGrid:
    if args.cell_width:
        return build_grid(dom, args.cell_width)
    return build_grid(dom, width_for_count(dom, args.cells or 16))


def make_planner(args, dom: SensingDomain, keep_trace: bool = False):
    algo = args.algo
    if algo == "esip":
        grid = _grid_from_args(args, dom)
        cfg = BnBConfig(enabled=args.bnb, alpha=args.alpha, top_k=args.topk, time_limit=args.time_limit)
        schedule = SplitSchedule.parse(args.split)
        return lambda d, f, q: esip(d, f, q, grid, schedule=schedule, bnb=cfg, keep_trace=keep_trace)
    if algo == "rgreedy":
        return lambda d, f, q: plan_rgreedy(d, f, q, iter=args.iter)
    if algo == "greedy-bc":
        return lambda d, f, q: plan_result(greedy_benefit_cost(d, f, q), d, f, algo)
    if algo == "greedy-r":
        return lambda d, f, q: plan_result(greedy_reward(d, f, q), d, f, algo)
    if algo == "brute":
        return lambda d, f, q: plan_result(brute_force_path(d, f, q), d, f, algo)
    grid = _grid_from_args(args, dom)
    return lambda d, f, q: plan_result(uniform_density_baseline(d, f, grid, q), d, f, algo)


def _summarize(res: PlanResult) -> dict:
    d = res.diagnostics
    keep = ("iterations", "value", "chosen_iter", "heuristic_value", "nodes", "explored", "pruned",
            "timed_out", "n_cells", "cell_width", "schedule", "cost_bound", "iter")
    out = {k: d[k] for k in keep if k in d}
    if "incumbent_trace" in d:
        out["incumbent_trace"] = [v for _, v in d["incumbent_trace"]]
    return out


def _run_synth(args) -> int:
    kernel = None
    if args.lengthscale:
        base = PRESETS[args.preset].kernel if args.preset else SEKernel()
        kernel = SEKernel(base.signal_variance, args.lengthscale, base.noise_variance)
    ds = gen_synth(args.seed, args.n, tuple(args.extent) if args.extent else None, kernel,
                   args.preset, args.columns)
    emit_csv(ds, args.out)
    return 0


def _run_plan(args) -> int:
    t0 = time.perf_counter()
    ds = ingest_csv(args.data)
    dom = ds.domain(args.experiment_cost)
    kernel = _kernel_from_args(args, ds)
    fn = MutualInformation(GPModel.for_domain(kernel, dom))
    keep_trace = bool(args.trace)
    planner = make_planner(args, dom, keep_trace)
    start = args.start if args.start is not None else dom.ids[0]
    finish = args.finish if args.finish is not None else start
    if args.command == "plan":
        q = PlanQuery(start, finish, args.budget)
        check_query(q, dom)
        results = [planner(dom, fn, q)]
        starts = [start]
    else:
        k = args.robots
        if k < 1:
            raise ValueError("--robots must be at least 1")
        if args.starts and len(args.starts) > k:
            starts = select_starts_greedy(dom, fn, args.starts, k, planner, args.budget,
                                          finish=args.finish, threads=args.threads)
        elif args.starts:
            starts = list(args.starts) + [args.starts[-1]] * (k - len(args.starts))
        else:
            starts = [start] * k
        ends = tuple((s, s if args.finish is None else args.finish) for s in starts)
        if args.starts is None:
            ends = tuple((start, finish) for _ in starts)
        plan = sequential_allocation(dom, fn, MultiRobotQuery(ends, args.budget), planner)
        results = plan.results
    diag = {"robots": [_summarize(r) for r in results], "kernel": [kernel.signal_variance,
            kernel.lengthscale, kernel.noise_variance], "starts": starts}
    query = {"budget": args.budget, "start": start, "finish": finish}
    report = PlanReport.build(args.command, args.algo, query, results, dom, fn, _config_hash(args),
                              args.seed, time.perf_counter() - t0, diag)
    if not report.verify(dom, fn):
        raise RuntimeError("report failed self-verification")
    text = report.to_text()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if keep_trace:
        records = [rec for r in results for rec in r.diagnostics.get("trace", [])]
        write_trace(records, args.trace)
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            return _run_synth(args)
        return _run_plan(args)
    except InfeasibleQueryError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 2
    except (DatasetError, SizeGuardError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
