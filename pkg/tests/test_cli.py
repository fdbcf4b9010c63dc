import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from infopath.bnb import BnBConfig
from infopath.cli import (CURVE_HEADER, PRESETS, Dataset, DatasetError, PlanReport, emit_csv,
                          emit_curves, eval_rmse, gen_synth, ingest_csv, main, read_curves,
                          uniform_density_baseline)
from infopath.decomp import build_grid
from infopath.domain import Path, PlanQuery, SensingDomain, path_cost
from infopath.esip import esip
from infopath.greedy import greedy_subset, plan_result
from infopath.reward import GPModel, MutualInformation, SEKernel, residual


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_ingest_small(tmp_path):
    ds = ingest_csv(write(tmp_path, "id,x,y,value\n1,0,0,1.5\n2,1,0,2.5\n3,0,1,-1\n"))
    assert len(ds) == 3 and ds.ids == (1, 2, 3)
    assert ds.columns == ("value",)
    assert ds.train_mean() == pytest.approx(1.0)
    assert ds.centered().sum() == pytest.approx(0.0)


@pytest.mark.parametrize("body,line", [
    ("id,x,y,value\n1,0,0,1\n2,abc,0,1\n", "line 3"),
    ("id,x,y,value\n1,0,0,1\n1,1,0,2\n", "line 3"),
    ("id,x,y,value\n1,0,0\n", "line 2"),
    ("id,x,y,value\n1,0,0,nan\n", "line 2"),
    ("x,y,id,value\n", "line 1"),
])
def test_ingest_errors_name_line(tmp_path, body, line):
    with pytest.raises(DatasetError, match=line):
        ingest_csv(write(tmp_path, body))


def test_ingest_empty(tmp_path):
    with pytest.raises(DatasetError):
        ingest_csv(write(tmp_path, ""))
    with pytest.raises(DatasetError):
        ingest_csv(write(tmp_path, "id,x,y,v\n"))


finite = st.floats(-1e6, 1e6, allow_nan=False)


@settings(max_examples=30, deadline=None)
@given(rows=st.lists(st.tuples(finite, finite, finite, finite), min_size=1, max_size=12))
def test_round_trip(tmp_path_factory, rows):
    arr = np.array(rows)
    ds = Dataset(tuple(range(10, 10 + len(rows))), arr[:, :2], arr[:, 2:], ("a", "b"))
    p = tmp_path_factory.mktemp("rt") / "d.csv"
    emit_csv(ds, p)
    assert ingest_csv(p) == ds


def test_dataset_invariants():
    with pytest.raises(DatasetError):
        Dataset((1, 1), np.zeros((2, 2)), np.zeros((2, 1)), ("v",))
    with pytest.raises(DatasetError):
        Dataset((1, 2), np.zeros((2, 2)), np.zeros((2, 0)), ())
    with pytest.raises(DatasetError):
        Dataset((1, 2), [[0, 0], [np.inf, 0]], np.zeros((2, 1)), ("v",))


def test_synth_deterministic():
    assert gen_synth(4, 30, (10.0, 10.0)) == gen_synth(4, 30, (10.0, 10.0))
    assert gen_synth(4, 30, (10.0, 10.0)) != gen_synth(5, 30, (10.0, 10.0))


def test_synth_presets():
    b = gen_synth(0, preset="berkeley")
    assert len(b) == 52
    assert (b.positions >= 0).all() and (b.positions <= [45, 40]).all()
    assert PRESETS["lake"].experiment_cost == 10.5
    assert PRESETS["berkeley"].experiment_cost == 9
    assert PRESETS["precip"].experiment_cost == 1.4
    assert len(gen_synth(0, preset="precip")) == 167


def test_synth_guards():
    with pytest.raises(ValueError):
        gen_synth(0, 1, (5.0, 5.0))
    with pytest.raises(ValueError):
        gen_synth(0)


def test_synth_variance_sanity():
    k = SEKernel(2.0, 1.0, 0.1)
    ds = gen_synth(3, 150, (30.0, 30.0), k)
    var = ds.column(0).var()
    target = k.signal_variance + k.noise_variance
    assert target / 3 <= var <= 3 * target


@pytest.mark.parametrize("seed", range(5))
def test_lake_cell_count(seed):
    ds = gen_synth(seed, preset="lake")
    assert len(ds) == 218
    assert abs(build_grid(ds.domain(10.5), 21.0).n - 22) <= 3


def noiseless(seed=0, n=40):
    k = SEKernel(1.0, 3.0, 1e-6)
    return gen_synth(seed, n, (20.0, 20.0), k), k


def test_rmse_full_observation_zero():
    ds, k = noiseless()
    assert eval_rmse(ds, 1, ds.ids, k) == pytest.approx(0.0, abs=1e-12)


def test_rmse_no_observation_is_prior():
    ds, k = noiseless()
    truth = ds.column(1)
    expect = math.sqrt(np.mean((truth - ds.train_mean()) ** 2))
    assert eval_rmse(ds, 1, [], k) == pytest.approx(expect)


def test_rmse_errors():
    ds, k = noiseless()
    with pytest.raises(DatasetError):
        eval_rmse(ds, "missing", [], k)
    with pytest.raises(DatasetError):
        eval_rmse(ds, 1, [999], k)


def test_rmse_esip_beats_random_paths():
    ds = gen_synth(2, 80, (40.0, 20.0), SEKernel(1.0, 6.0, 0.01))
    k = SEKernel(1.0, 6.0, 0.01)
    dom = ds.domain(2.0)
    fn = MutualInformation(GPModel.for_domain(k, dom))
    grid = build_grid(dom, 8.0)
    res = esip(dom, fn, PlanQuery(0, 0, 60.0), grid)
    ours = eval_rmse(ds, 1, res.path.visited, k)
    rng = np.random.default_rng(0)
    rand = []
    for _ in range(20):
        nodes = [0, 0]
        for v in rng.permutation(len(dom)):
            trial = nodes[:-1] + [int(v)] + [0]
            if path_cost(trial, dom) > res.cost:
                break
            nodes = trial
        rand.append(eval_rmse(ds, 1, set(nodes), k))
    assert ours <= np.mean(rand)


def test_curves(tmp_path):
    p = tmp_path / "c.csv"
    assert emit_curves([], p) == 0
    assert p.read_text().strip() == ",".join(CURVE_HEADER)
    emit_curves([("esip", 10, "reward", 1.5), ("esip", 20, "reward", 2.5)], p)
    rows = read_curves(p)
    assert len(rows) == 2 and rows[1] == ("esip", 20.0, "reward", 2.5)


def test_esip_curve_non_decreasing(tmp_path):
    ds = gen_synth(1, 60, (40.0, 20.0), SEKernel(1.0, 6.0, 0.01))
    dom = ds.domain(2.0)
    fn = MutualInformation(GPModel.for_domain(SEKernel(1.0, 6.0, 0.01), dom))
    grid = build_grid(dom, 8.0)
    rows = [("esip", B, "reward", esip(dom, fn, PlanQuery(0, 0, B), grid).reward)
            for B in (10.0, 20.0, 30.0, 40.0)]
    p = tmp_path / "c.csv"
    emit_curves(rows, p)
    vals = [v for *_, v in read_curves(p)]
    assert all(b >= a - 1e-9 for a, b in zip(vals, vals[1:]))


def test_uniform_one_cell_budget():
    pts = [(0.5, 0.5), (0.2, 0.3), (0.8, 0.6), (0.4, 0.9), (5.5, 0.5), (5.2, 0.8)]
    dom = SensingDomain.from_arrays(pts, 0.1)
    fn = MutualInformation(GPModel.for_domain(SEKernel(1.0, 1.0, 0.05), dom))
    grid = build_grid(dom, 1.0)
    p = uniform_density_baseline(dom, fn, grid, PlanQuery(0, 0, 2.0))
    inner = set(p.nodes[1:-1])
    assert len(inner) == 2 and {grid.cell_of[v] for v in inner} == {grid.cell_of[0]}
    assert path_cost(p, dom) <= 2.0


def test_uniform_single_cell_equals_greedy_pair():
    rng = np.random.default_rng(0)
    dom = SensingDomain.from_arrays(rng.uniform(0, 1, (7, 2)), 0.1)
    fn = MutualInformation(GPModel.for_domain(SEKernel(1.0, 0.5, 0.05), dom))
    grid = build_grid(dom, 2.0)
    p = uniform_density_baseline(dom, fn, grid, PlanQuery(0, 0, 50.0))
    expect = greedy_subset(residual(fn, {0}), set(dom.ids) - {0}, 2, SensingDomain.from_arrays(
        dom.positions, 1.0))
    assert set(p.nodes[1:-1]) == set(expect)


def test_esip_beats_uniform_on_lake_sweep():
    ds = gen_synth(0, preset="lake")
    dom = ds.domain(10.5)
    fn = MutualInformation(GPModel.for_domain(PRESETS["lake"].kernel, dom))
    grid = build_grid(dom, 21.0)
    s = int(np.argmin(ds.positions[:, 0]))
    for B in (60.0, 100.0, 150.0):
        q = PlanQuery(s, s, B)
        ours = esip(dom, fn, q, grid, bnb=BnBConfig(alpha=1.2)).reward
        base = fn(uniform_density_baseline(dom, fn, grid, q).visited)
        assert ours >= base - 1e-9


def test_report_self_verifies():
    dom = SensingDomain.from_arrays([(0, 0), (1, 0), (2, 0)], 0.5)
    fn = MutualInformation(GPModel.for_domain(SEKernel(), dom))
    res = plan_result(Path((0, 1, 2)), dom, fn, "x")
    rep = PlanReport.build("plan", "x", {}, [res], dom, fn, "h", 0, 0.1)
    assert rep.verify(dom, fn)
    assert PlanReport.parse(rep.to_text())["joint_reward"] == pytest.approx(fn({0, 1, 2}))
    rep.robots[0]["cost"] += 1
    assert not rep.verify(dom, fn)


# ---------------------------------------------------------------- command line

@pytest.fixture
def data(tmp_path):
    p = tmp_path / "field.csv"
    assert main(["synth", "--preset", "berkeley", "--seed", "3", "--out", str(p)]) == 0
    return p


def run(args, tmp_path, name="r.txt"):
    out = tmp_path / name
    code = main([*args, "--out", str(out)])
    return code, (out.read_text() if out.exists() else None)


def strip_wall(text):
    keep = [l for l in text.splitlines() if not l.startswith("wall time")]
    body = json.loads(keep[-1])
    body.pop("wall_time")
    return keep[:-1], body


def test_direct_budget_gives_direct_path(data, tmp_path):
    ds = ingest_csv(data)
    dom = ds.domain(9.0)
    B = dom.travel(0, 5)
    code, text = run(["plan", "--data", str(data), "--budget", repr(B), "--start", "0", "--finish",
                      "5", "--algo", "greedy-bc", "--experiment-cost", "9"], tmp_path)
    assert code == 0
    assert PlanReport.parse(text)["robots"][0]["path"] == [0, 5]


@pytest.mark.parametrize("algo", ["esip", "greedy-bc", "greedy-r", "uniform"])
def test_plan_algorithms(data, tmp_path, algo):
    code, text = run(["plan", "--data", str(data), "--budget", "60", "--start", "0",
                      "--experiment-cost", "9", "--algo", algo, "--cells", "10"], tmp_path)
    assert code == 0
    rep = PlanReport.parse(text)
    assert rep["algorithm"] == algo and rep["robots"][0]["path"][0] == 0


def test_plan_multi_one_robot_matches_plan(data, tmp_path):
    args = ["--data", str(data), "--budget", "60", "--start", "0", "--experiment-cost", "9"]
    _, a = run(["plan", *args], tmp_path, "a.txt")
    _, b = run(["plan-multi", *args, "--robots", "1"], tmp_path, "b.txt")
    assert PlanReport.parse(a)["robots"][0]["path"] == PlanReport.parse(b)["robots"][0]["path"]


def test_plan_multi_starts(data, tmp_path):
    code, text = run(["plan-multi", "--data", str(data), "--budget", "40", "--experiment-cost", "9",
                      "--robots", "2", "--starts", "0,5,9", "--threads", "2"], tmp_path)
    assert code == 0
    rep = PlanReport.parse(text)
    assert len(rep["robots"]) == 2
    assert set(rep["diagnostics"]["starts"]) <= {0, 5, 9}


def test_rerun_identical(data, tmp_path):
    args = ["plan-multi", "--data", str(data), "--budget", "50", "--start", "0", "--robots", "2",
            "--experiment-cost", "9", "--seed", "7"]
    _, a = run(args, tmp_path, "a.txt")
    _, b = run(args, tmp_path, "b.txt")
    assert strip_wall(a) == strip_wall(b)


def test_trace_written(data, tmp_path):
    trace = tmp_path / "trace.jsonl"
    code, _ = run(["plan", "--data", str(data), "--budget", "60", "--start", "0", "--experiment-cost",
                   "9", "--trace", str(trace)], tmp_path)
    assert code == 0
    recs = [json.loads(l) for l in trace.read_text().splitlines()]
    assert recs and {"depth", "ub", "lb", "pruned", "t"} <= set(recs[0])


def test_exit_codes(data, tmp_path, capsys):
    assert main(["plan", "--data", str(data), "--budget", "0.5", "--start", "0", "--finish", "5"]) == 2
    with pytest.raises(SystemExit) as e:
        main(["plan", "--data", str(data), "--budget", "-1"])
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        main(["plan", "--data", str(data), "--budget", "5", "--split", "cubic"])
    assert e.value.code == 1
    assert main(["plan", "--data", str(tmp_path / "none.csv"), "--budget", "5"]) == 1
    assert main(["plan", "--data", str(data), "--budget", "5", "--start", "999"]) == 1
    assert "usage" in capsys.readouterr().err
