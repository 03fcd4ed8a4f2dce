import math

import numpy as np
import pytest

from lutloc.lutmap import LookupMap, seed_fault
from lutloc.simharness import (
    ExperimentConfig, PiecewiseLinearInput, ParamGridSpec, TOY2_FORMULA, build_toy1_map,
    build_toy2_map, gen_input, grid_search, param_grid_rank, refine_box, run_experiment, run_rng,
    score_runs, seed_toy2_bug, simulate_runs, simulate_toy1, simulate_toy2, toy2_bug_region,
)
from lutloc.stl import parse_formula, robustness, Signal
from lutloc.traces import TraceError, TraceRun

import oracles


# -- toy 1 -------------------------------------------------------------------

def test_toy1_map_values():
    lut = build_toy1_map()
    assert lut.shape == (90,)
    v = dict(zip(lut.axes[0].breakpoints, lut.values.tolist()))
    assert v[0.1] == 10.0 and v[1.0] == 1.0
    assert v[1.6] == 0.63     # 0.625 rounds up
    assert v[8.0] == 0.13     # 0.125 rounds up
    assert v[9.0] == 0.11
    assert v[3.0] == 0.33


def test_toy1_clean_map_tracks_unit_output():
    lut = build_toy1_map()
    for k in range(5):
        run = simulate_toy1(gen_input(run_rng(3, k)), lut)
        y1 = np.array(run.signals["y1"][1])
        assert y1.max() < 1.4 and y1.min() > 0.85


def test_toy1_fault_shows_at_its_breakpoint():
    lut = seed_fault(build_toy1_map(), [((19,), 0.8)])
    run = simulate_toy1(lambda t: 2.0, lut, horizon=1.0)
    assert run.signals["y1"][1][0] == pytest.approx(1.6)
    # y2 is the left-closed Riemann sum of y1
    assert run.signals["y2"][1][-1] == pytest.approx(1.6)


def test_toy1_sampling_and_query_log():
    u = gen_input(7)
    run = simulate_toy1(u, build_toy1_map())
    t = run.signals["y1"][0]
    assert len(t) == 301 and t[-1] == pytest.approx(30.0)
    assert len(run.queries) == 301
    assert [q.seq for q in run.queries] == list(range(1, 302))
    for q, tk in zip(run.queries, t):
        assert q.point[0] == pytest.approx(float(u(tk)))


def test_toy1_zero_horizon():
    run = simulate_toy1(lambda t: 1.0, build_toy1_map(), horizon=0.0)
    assert run.queries == () and run.signals["y1"] == ((), ())


def test_toy1_bad_horizon():
    with pytest.raises(ValueError):
        simulate_toy1(lambda t: 1.0, build_toy1_map(), dt=0.1, horizon=0.25)


def test_gen_input():
    u = gen_input(1, n_ctrl=11)
    assert u.control_times == tuple(3.0 * k for k in range(11))
    assert all(0.09 <= v <= 9.01 for v in u.control_values)
    assert u(1.5) == pytest.approx(0.5 * (u.control_values[0] + u.control_values[1]))
    r = gen_input(1, ramp=True)
    assert r.control_values[:2] == (0.09, 9.01)
    assert gen_input(4).control_values == gen_input(4).control_values
    with pytest.raises(ValueError):
        gen_input(1, value_range=(1.0, 1.0))
    with pytest.raises(ValueError):
        PiecewiseLinearInput((0.0,), (1.0,))


def test_run_streams_are_independent_of_run_count():
    cfg_small = ExperimentConfig(n_runs=3, seed=11)
    cfg_big = ExperimentConfig(n_runs=12, seed=11)
    lut = build_toy1_map()
    a = simulate_runs(cfg_small, lut)
    b = simulate_runs(cfg_big, lut)
    assert a[2].meta["controls"] == b[2].meta["controls"]
    assert a[1].signals == b[1].signals


# -- toy 2 -------------------------------------------------------------------

def test_toy2_map_and_bug_region():
    lut = build_toy2_map()
    assert lut.shape == (41, 41)
    assert lut[(0, 40)] == pytest.approx(-2 * -10 * 100)
    region = toy2_bug_region()
    assert len(region) == 30
    buggy = seed_toy2_bug(lut)
    for e in lut.entries():
        factor = -2.0 if e in region else 1.0
        assert buggy[e] == pytest.approx(factor * lut[e])


def test_toy2_matches_independent_rk4():
    interp_mod = pytest.importorskip("scipy.interpolate")
    lut = seed_toy2_bug(build_toy2_map())
    ax = lut.axes[0].breakpoints
    # outside the grid both extrapolate linearly from the edge cell
    f = interp_mod.RegularGridInterpolator((ax, ax), lut.values, bounds_error=False,
                                           fill_value=None)
    for init in [(-3.2, 4.1), (-9.1, 8.7), (-0.4, 0.3), (-7.7, 9.9)]:
        run = simulate_toy2(init, lut)
        ref = oracles.rk4_toy2(init, lambda a, b: float(f([[a, b]])[0]), 0.01, 200)
        if "diverged_at" in run.meta:
            continue
        got = np.column_stack([run.signals["x1"][1], run.signals["x2"][1]])
        np.testing.assert_allclose(got, np.array(ref), rtol=1e-9, atol=1e-9)


def test_toy2_clean_map_is_stable():
    lut = build_toy2_map()
    for init in [(-9.5, 9.5), (-5.0, 2.0), (-0.1, 7.0)]:
        run = simulate_toy2(init, lut)
        x1 = np.array(run.signals["x1"][1])
        x2 = np.array(run.signals["x2"][1])
        assert np.all(np.diff(np.abs(x2)) <= 0)
        assert abs(x1[-1]) < abs(x1[0])
        assert robustness(parse_formula(TOY2_FORMULA),
                          Signal.from_run_signals(run.signals), 0.0) > 0 or abs(init[0]) > 8


def test_toy2_zero_first_state_stays_zero():
    lut = seed_toy2_bug(build_toy2_map())
    run = simulate_toy2((0.0, 6.3), lut)
    assert set(run.signals["x1"][1]) == {0.0}


def test_toy2_bug_region_violates_requirement():
    lut = seed_toy2_bug(build_toy2_map())
    run = score_runs([simulate_toy2((-9.0, 9.0), lut, run_id="b")], TOY2_FORMULA)[0]
    assert run.score < 0


def test_toy2_query_log():
    run = simulate_toy2((-2.0, 3.0), build_toy2_map())
    assert len(run.queries) == 200 and len(run.signals["x1"][0]) == 201
    assert run.queries[0].point == (-2.0, 3.0)


def test_toy2_divergence_is_flagged():
    ax = build_toy2_map().axes[0].breakpoints
    lut = LookupMap([ax, ax], np.full((41, 41), 1e9))
    run = simulate_toy2((-9.5, 9.5), lut)
    assert run.meta["diverged_at"] == pytest.approx(0.01)
    assert "diverged_at" in run.meta
    assert len(run.signals["x1"][1]) == 201
    assert max(abs(v) for v in run.signals["x1"][1]) <= 1e6


# -- scoring and experiments -------------------------------------------------

def test_score_runs_names_missing_channel():
    run = TraceRun("r7", (), signals={"y1": ((0.0, 1.0), (1.0, 1.0))})
    with pytest.raises(TraceError, match="r7.*y2"):
        score_runs([run], "alw[0,1](y2 < 1)")


def test_experiment_is_deterministic():
    cfg = ExperimentConfig(n_runs=4, seed=2)
    a = run_experiment(cfg)
    b = run_experiment(cfg)
    assert a.buggy == [(19,)]
    for f in cfg.formulas:
        assert [r.score for r in a.scored[f]] == [r.score for r in b.scored[f]]
    assert [r.id for r in a.runs] == ["r0", "r1", "r2", "r3"]


def test_experiment_config_round_trip():
    cfg = ExperimentConfig(model="toy2", n_runs=5, faults=(((1, 2), ("scale", 3.0)),))
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"model": "toy3"})
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"colour": "red"})


# -- parameter grids ---------------------------------------------------------

def test_param_grid_single_failing_sample():
    spec = ParamGridSpec((0, 0), (1, 1), (3, 3), [((0.5, 0.5), -1.0), ((0.0, 1.0), 2.0)])
    res, lut = param_grid_rank(spec, "kulczynski")
    assert res.order[0] == (1, 1) and math.isinf(res.score((1, 1)))


def test_param_grid_desirable_flips_sign():
    spec = ParamGridSpec((0,), (1,), (5,), [((0.0,), 5.0), ((1.0,), -5.0)])
    assert param_grid_rank(spec)[0].order[0] == (4,)
    assert param_grid_rank(spec, desirable=True)[0].order[0] == (0,)


def test_param_grid_finds_quadratic_bowl():
    c = np.array([0.25, 0.75, 0.5])

    def score(p):
        return float(np.sum((np.asarray(p) - c) ** 2) - 0.05)

    spec = ParamGridSpec((0, 0, 0), (1, 1, 1), (5, 5, 5))
    rng = run_rng(0, 0)
    spec.samples = [(tuple(p), score(p)) for p in rng.uniform(0, 1, size=(400, 3))]
    spec = ParamGridSpec(spec.lows, spec.highs, spec.counts, spec.samples)
    res, lut = param_grid_rank(spec, "dstar")
    top = np.array(lut.entry_point(res.order[0]))
    assert np.max(np.abs(top - c)) <= 0.25


def test_grid_search_refines_toward_minimum():
    c = np.array([0.31, 0.62])
    rounds = grid_search(lambda p: float(np.sum((p - c) ** 2) - 0.01),
                         ParamGridSpec((0, 0), (1, 1), (6, 6)), n_samples=300, rounds=3, seed=1)
    last, _ = rounds[-1]
    assert all(lo <= ci <= hi for lo, ci, hi in zip(last.lows, c, last.highs))
    assert last.highs[0] - last.lows[0] < 0.2


def test_refine_box_clips():
    spec = ParamGridSpec((0, 0), (1, 2), (3, 3))
    sub = refine_box(spec, (0, 1))
    assert sub.lows == (0.0, 0.0) and sub.highs == (0.5, 2.0)


def test_param_grid_validation():
    with pytest.raises(ValueError):
        ParamGridSpec((0,), (1,), (1,))
    with pytest.raises(ValueError):
        ParamGridSpec((0,), (1,), (3,), [((2.0,), 1.0)])
    with pytest.raises(ValueError):
        param_grid_rank(ParamGridSpec((0,), (1,), (3,)))
