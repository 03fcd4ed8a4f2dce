"""Closed-loop toy models that read a look-up map, plus experiment plumbing.

Randomness comes from numpy's PCG64 generator. Each run gets its own
stream seeded with ``SeedSequence([seed, run_index])``, so run ``k`` of an
experiment does not depend on how many other runs are simulated or in
which order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .lutmap import EntryIndex, LookupMap, QueryRecord, seed_fault
from .rankers import RankingResult, ScoreShift, rank
from .stl import Signal, parse_formula, robustness
from .stl.formula import Formula, channels_of
from .traces import AffectConfig, TraceError, TraceRun

__all__ = [
    "PiecewiseLinearInput", "ExperimentConfig", "ExperimentResult", "ParamGridSpec",
    "run_rng", "gen_input", "build_toy1_map", "simulate_toy1", "build_toy2_map", "toy2_bug_region",
    "seed_toy2_bug", "simulate_toy2", "score_runs", "run_experiment", "param_grid_rank",
    "refine_box", "TOY1_FORMULAS", "TOY2_FORMULA",
]

TOY1_FORMULAS = ("alw[10,30](abs(y1 - 1) < 0.4)", "alw[0,30](y2 <= 30)")
TOY2_FORMULA = "alw[0.8,2](abs(x1) < 0.8)"
DIVERGENCE_LIMIT = 1e6


def run_rng(seed: int, run_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(run_index)])))


# -- inputs ------------------------------------------------------------------

@dataclass(frozen=True)
class PiecewiseLinearInput:
    control_times: tuple[float, ...]
    control_values: tuple[float, ...]

    def __post_init__(self):
        if len(self.control_times) < 2 or len(self.control_times) != len(self.control_values):
            raise ValueError("need at least two control points, one value each")

    def __call__(self, t):
        return np.interp(t, self.control_times, self.control_values)


def gen_input(seed: int | np.random.Generator, n_ctrl: int = 11,
              value_range: tuple[float, float] = (0.09, 9.01), horizon: float = 30.0,
              ramp: bool = False) -> PiecewiseLinearInput:
    """Random piecewise-linear input with ``n_ctrl`` equally spaced controls.

    Values are i.i.d. uniform on ``value_range``. With ``ramp`` the first
    segment rises from the low to the high end of the range.
    """
    lo, hi = value_range
    if not lo < hi:
        raise ValueError("empty input range")
    if n_ctrl < 2:
        raise ValueError("need at least two control points")
    rng = seed if isinstance(seed, np.random.Generator) else run_rng(seed, 0)
    times = tuple(float(horizon * k / (n_ctrl - 1)) for k in range(n_ctrl))
    vals = rng.uniform(lo, hi, n_ctrl)
    if ramp:
        vals[0], vals[1] = lo, hi
    return PiecewiseLinearInput(times, tuple(float(v) for v in vals))


def _steps(horizon: float, dt: float) -> int:
    if dt <= 0:
        raise ValueError("dt must be positive")
    n = round(horizon / dt)
    if n < 0 or not math.isclose(n * dt, horizon, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError(f"horizon {horizon} is not a multiple of dt {dt}")
    return n


# -- toy 1: cancelling a 1/x nonlinearity ------------------------------------

def build_toy1_map() -> LookupMap:
    """1/x on 0.1, 0.2, ..., 9.0, rounded half-up to two decimals."""
    ks = range(1, 91)
    axis = [k / 10 for k in ks]
    # round(1000 / k) with halves rounded up, in integer arithmetic
    vals = [((2000 + k) // (2 * k)) / 100 for k in ks]
    return LookupMap([axis], vals)


def simulate_toy1(u: Callable[[float], float], lut: LookupMap, dt: float = 0.1,
                  horizon: float = 30.0, run_id: str = "0") -> TraceRun:
    """y1 = u * f(u) and its running Riemann sum y2, sampled every ``dt``."""
    n = _steps(horizon, dt)
    if n == 0:
        return TraceRun(run_id, (), signals={"y1": ((), ()), "y2": ((), ())})
    times = [k * dt for k in range(n + 1)]
    queries, y1, y2 = [], [], []
    acc = 0.0
    for k, t in enumerate(times):
        ut = float(u(t))
        f, rec = lut.interpolate((ut,), seq=k + 1)
        queries.append(rec)
        y = ut * f
        if k > 0:
            acc += dt * y
        y1.append(y)
        y2.append(acc)
    sig = {"y1": (tuple(times), tuple(y1)), "y2": (tuple(times), tuple(y2))}
    return TraceRun(run_id, tuple(queries), signals=sig)


# -- toy 2: feed-forward cancellation in a 2D plant ----------------------------

TOY2_AXIS = tuple(-10.0 + 0.5 * k for k in range(41))


def build_toy2_map() -> LookupMap:
    x1, x2 = np.meshgrid(TOY2_AXIS, TOY2_AXIS, indexing="ij")
    return LookupMap([TOY2_AXIS, TOY2_AXIS], -2.0 * x1 * x2 ** 2)


def toy2_bug_region(lut: LookupMap | None = None) -> list[EntryIndex]:
    """Entries with x1 in [-10, -8] and x2 in [7.5, 10]."""
    ax = TOY2_AXIS
    return [(i, j) for i, a in enumerate(ax) if -10 <= a <= -8
            for j, b in enumerate(ax) if 7.5 <= b <= 10]


def seed_toy2_bug(lut: LookupMap, factor: float = -2.0) -> LookupMap:
    return seed_fault(lut, [(e, ("scale", factor)) for e in toy2_bug_region(lut)])


def _toy2_rhs(x1: float, x2: float, u: float) -> tuple[float, float]:
    return -3.0 * x1 + 2.0 * x1 * x2 * x2 + u, -x2 ** 3 - x2


def simulate_toy2(init: Sequence[float], lut: LookupMap, dt: float = 0.01,
                  horizon: float = 2.0, run_id: str = "0") -> TraceRun:
    """Fixed-step RK4; the map is read once per step and u held over the step.

    If a state leaves [-1e6, 1e6] the integration stops, the remaining
    samples hold the clamped state and the run is marked diverged.
    """
    n = _steps(horizon, dt)
    x1, x2 = float(init[0]), float(init[1])
    times = [k * dt for k in range(n + 1)]
    s1, s2 = [x1], [x2]
    queries: list[QueryRecord] = []
    diverged_at = None
    for k in range(n):
        u, rec = lut.interpolate((x1, x2), seq=k + 1)
        queries.append(rec)
        a1, a2 = _toy2_rhs(x1, x2, u)
        b1, b2 = _toy2_rhs(x1 + 0.5 * dt * a1, x2 + 0.5 * dt * a2, u)
        c1, c2 = _toy2_rhs(x1 + 0.5 * dt * b1, x2 + 0.5 * dt * b2, u)
        d1, d2 = _toy2_rhs(x1 + dt * c1, x2 + dt * c2, u)
        x1 = x1 + dt / 6.0 * (a1 + 2 * b1 + 2 * c1 + d1)
        x2 = x2 + dt / 6.0 * (a2 + 2 * b2 + 2 * c2 + d2)
        if not (abs(x1) <= DIVERGENCE_LIMIT and abs(x2) <= DIVERGENCE_LIMIT):
            x1 = math.copysign(DIVERGENCE_LIMIT, x1) if not abs(x1) <= DIVERGENCE_LIMIT else x1
            x2 = math.copysign(DIVERGENCE_LIMIT, x2) if not abs(x2) <= DIVERGENCE_LIMIT else x2
            diverged_at = times[k + 1]
            rest = n - k
            s1.extend([x1] * rest)
            s2.extend([x2] * rest)
            break
        s1.append(x1)
        s2.append(x2)
    meta = {"init": [float(init[0]), float(init[1])]}
    if diverged_at is not None:
        meta["diverged_at"] = diverged_at
    t = tuple(times)
    return TraceRun(run_id, tuple(queries), signals={"x1": (t, tuple(s1)), "x2": (t, tuple(s2))},
                    meta=meta)


# -- scoring -----------------------------------------------------------------

def score_runs(runs: Sequence[TraceRun], formula: Formula | str,
               truncate: bool = False) -> list[TraceRun]:
    """Attach the robustness of ``formula`` at time 0 as each run's score."""
    f = parse_formula(formula) if isinstance(formula, str) else formula
    needed = sorted(channels_of(f))
    out = []
    for r in runs:
        sigs = r.signals or {}
        for ch in needed:
            if ch not in sigs:
                raise TraceError(f"run {r.id} has no channel {ch!r}")
        sig = Signal.from_run_signals({ch: sigs[ch] for ch in needed})
        out.append(r.with_score(robustness(f, sig, 0.0, truncate)))
    return out


# -- experiments -------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """Settings for one toy experiment.

    ``faults`` lists map edits as accepted by :func:`seed_fault`; ``None``
    selects the model's default bug and ``[]`` runs the unfaulted map.
    """

    model: str = "toy1"
    n_runs: int = 100
    seed: int = 0
    dt: float | None = None
    horizon: float | None = None
    faults: tuple | None = None
    formulas: tuple[str, ...] | None = None
    n_ctrl: int = 11
    input_range: tuple[float, float] = (0.09, 9.01)
    ramp_runs: int = 1

    def __post_init__(self):
        if self.model not in ("toy1", "toy2"):
            raise ValueError(f"unknown model {self.model!r}")
        if self.n_runs < 1:
            raise ValueError("n_runs must be >= 1")
        defaults = {"toy1": (0.1, 30.0, TOY1_FORMULAS), "toy2": (0.01, 2.0, (TOY2_FORMULA,))}
        dt, hz, fs = defaults[self.model]
        if self.dt is None:
            object.__setattr__(self, "dt", dt)
        if self.horizon is None:
            object.__setattr__(self, "horizon", hz)
        if self.formulas is None:
            object.__setattr__(self, "formulas", fs)
        object.__setattr__(self, "formulas", tuple(self.formulas))
        object.__setattr__(self, "input_range", tuple(float(x) for x in self.input_range))
        _steps(self.horizon, self.dt)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if d.get("faults") is not None:
            d["faults"] = tuple((tuple(idx), ch if not isinstance(ch, list) else tuple(ch))
                                for idx, ch in d["faults"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown experiment keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["formulas"] = list(self.formulas)
        d["input_range"] = list(self.input_range)
        if self.faults is not None:
            d["faults"] = [[list(idx), list(ch) if isinstance(ch, tuple) else ch]
                           for idx, ch in self.faults]
        return d


def load_experiment(path) -> ExperimentConfig:
    return ExperimentConfig.from_dict(json.loads(Path(path).read_text()))


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    clean_map: LookupMap
    map: LookupMap
    buggy: list[EntryIndex]
    runs: list[TraceRun]
    scored: dict[str, list[TraceRun]] = field(default_factory=dict)


def run_ids(n: int) -> list[str]:
    width = len(str(n - 1))
    return [f"r{k:0{width}d}" for k in range(n)]


def simulate_runs(cfg: ExperimentConfig, lut: LookupMap) -> list[TraceRun]:
    runs = []
    for k, rid in enumerate(run_ids(cfg.n_runs)):
        rng = run_rng(cfg.seed, k)
        if cfg.model == "toy1":
            u = gen_input(rng, cfg.n_ctrl, cfg.input_range, cfg.horizon, ramp=k < cfg.ramp_runs)
            r = simulate_toy1(u, lut, cfg.dt, cfg.horizon, run_id=rid)
            r = TraceRun(r.id, r.queries, signals=r.signals,
                         meta={"controls": list(u.control_values)})
        else:
            init = (float(rng.uniform(-10.0, 0.0)), float(rng.uniform(0.0, 10.0)))
            r = simulate_toy2(init, lut, cfg.dt, cfg.horizon, run_id=rid)
        runs.append(r)
    return runs


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Build the model's map, seed the fault, simulate and score every run."""
    if cfg.model == "toy1":
        clean = build_toy1_map()
        default_faults = (((19,), 0.8),)
    else:
        clean = build_toy2_map()
        default_faults = tuple((e, ("scale", -2.0)) for e in toy2_bug_region(clean))
    faults = default_faults if cfg.faults is None else cfg.faults
    lut = seed_fault(clean, faults)
    buggy = sorted({tuple(idx) for idx, _ in faults})
    runs = simulate_runs(cfg, lut)
    scored = {f: score_runs(runs, f) for f in cfg.formulas}
    return ExperimentResult(cfg, clean, lut, buggy, runs, scored)


# -- parameter grids ---------------------------------------------------------

@dataclass
class ParamGridSpec:
    """A box in parameter space with a grid and scored parameter samples."""

    lows: tuple[float, ...]
    highs: tuple[float, ...]
    counts: tuple[int, ...]
    samples: list[tuple[tuple[float, ...], float]] = field(default_factory=list)

    def __post_init__(self):
        self.lows = tuple(float(x) for x in self.lows)
        self.highs = tuple(float(x) for x in self.highs)
        self.counts = tuple(int(c) for c in self.counts)
        if not len(self.lows) == len(self.highs) == len(self.counts):
            raise ValueError("lows, highs and counts must have one value per dimension")
        if any(c < 2 for c in self.counts):
            raise ValueError("each dimension needs at least two grid points")
        if any(not lo < hi for lo, hi in zip(self.lows, self.highs)):
            raise ValueError("each interval must have lo < hi")
        self.samples = [(tuple(float(x) for x in p), float(s)) for p, s in self.samples]
        for p, _ in self.samples:
            if len(p) != len(self.lows) or any(
                    not lo <= x <= hi for x, lo, hi in zip(p, self.lows, self.highs)):
                raise ValueError(f"sample {p} lies outside the box")

    def grid_map(self) -> LookupMap:
        axes = [np.linspace(lo, hi, n) for lo, hi, n in zip(self.lows, self.highs, self.counts)]
        return LookupMap(axes, np.zeros(self.counts))

    def to_dict(self) -> dict:
        return {"lows": list(self.lows), "highs": list(self.highs), "counts": list(self.counts),
                "samples": [{"point": list(p), "score": s} for p, s in self.samples]}

    @classmethod
    def from_dict(cls, d: dict) -> "ParamGridSpec":
        samples = [(s["point"], s["score"]) for s in d.get("samples", [])]
        return cls(d["lows"], d["highs"], d["counts"], samples)


def param_grid_rank(spec: ParamGridSpec, heuristic: str = "dstar", cfg: AffectConfig | None = None,
                    desirable: bool = False, gamma: float = 2.0,
                    shift: ScoreShift | None = None) -> tuple[RankingResult, LookupMap]:
    """Rank grid points of the box as if each sample were a one-query run.

    With ``desirable`` the scores are negated, so grid points near samples
    with high scores rank first.
    """
    if not spec.samples:
        raise ValueError("no samples")
    lut = spec.grid_map()
    runs = []
    width = len(str(len(spec.samples) - 1))
    for k, (p, s) in enumerate(spec.samples):
        _, rec = lut.interpolate(p, seq=1)
        runs.append(TraceRun(f"s{k:0{width}d}", (rec,), score=-s if desirable else s))
    return rank(runs, lut, heuristic, cfg, shift, gamma), lut


def refine_box(spec: ParamGridSpec, entry: EntryIndex,
               counts: Sequence[int] | None = None) -> ParamGridSpec:
    """Sub-box one grid step around ``entry``, clipped to the current box."""
    lut = spec.grid_map()
    center = lut.entry_point(entry)
    lows, highs = [], []
    for c, lo, hi, n in zip(center, spec.lows, spec.highs, spec.counts):
        step = (hi - lo) / (n - 1)
        lows.append(max(lo, c - step))
        highs.append(min(hi, c + step))
    return ParamGridSpec(lows, highs, tuple(counts or spec.counts))


def grid_search(score_fn: Callable[[np.ndarray], float], spec: ParamGridSpec, n_samples: int,
                rounds: int = 2, seed: int = 0, heuristic: str = "dstar",
                cfg: AffectConfig | None = None, desirable: bool = False
                ) -> list[tuple[ParamGridSpec, RankingResult]]:
    """Sample, rank and refine around the top grid point ``rounds`` times."""
    out = []
    cur = spec
    for k in range(rounds):
        rng = run_rng(seed, k)
        pts = rng.uniform(cur.lows, cur.highs, size=(n_samples, len(cur.lows)))
        cur = ParamGridSpec(cur.lows, cur.highs, cur.counts,
                            [(tuple(p), float(score_fn(p))) for p in pts])
        res, _ = param_grid_rank(cur, heuristic, cfg, desirable)
        out.append((cur, res))
        cur = refine_box(cur, res.order[0])
    return out
