"""Score-weighted similarity coefficients over map entries.

Each run contributes its score to the failing (score < 0) or passing
(score >= 0) sums of every entry, weighted by how strongly the entry
affected the run. The six sums per entry are the building blocks; a
heuristic turns them into a suspiciousness value.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .lutmap import EntryIndex, LookupMap
from .traces import AffectConfig, TraceError, TraceRun, fraffect, raffect, run_weights, sorted_runs

__all__ = [
    "BuildingBlocks", "RankingResult", "ScoreShift", "building_blocks", "all_building_blocks",
    "tarantula", "kulczynski", "dstar", "HEURISTICS", "register_heuristic", "rank",
    "ranking_to_dict", "ranking_from_dict", "load_ranking",
]


@dataclass(frozen=True)
class BuildingBlocks:
    """Score-weighted sums for one entry (or arrays of them, one per entry).

    F-terms collect failing runs and are <= 0; P-terms collect passing
    runs and are >= 0. ``F`` and ``P`` are the totals over all runs.
    """

    F_A: float
    P_A: float
    F_U: float
    P_U: float
    F: float
    P: float

    def __getitem__(self, k) -> "BuildingBlocks":
        return BuildingBlocks(*(float(np.asarray(getattr(self, n))[k]) for n in _FIELDS))


_FIELDS = ("F_A", "P_A", "F_U", "P_U", "F", "P")


@dataclass(frozen=True)
class ScoreShift:
    """Constants added to negative and non-negative run scores."""

    neg_shift: float = 0.0
    pos_shift: float = 0.0

    def __post_init__(self):
        if not self.neg_shift <= 0.0:
            raise ValueError("neg_shift must be <= 0")
        if not self.pos_shift >= 0.0:
            raise ValueError("pos_shift must be >= 0")

    def apply(self, score: float) -> float:
        return score + (self.neg_shift if score < 0 else self.pos_shift)


def _scores(runs: Sequence[TraceRun], shift: ScoreShift | None) -> list[float]:
    out = []
    for r in runs:
        if r.score is None:
            raise TraceError(f"run {r.id} has no score")
        out.append(shift.apply(r.score) if shift else r.score)
    return out


def building_blocks(runs: Iterable[TraceRun], entry: EntryIndex, cfg: AffectConfig,
                    lut: LookupMap, shift: ScoreShift | None = None) -> BuildingBlocks:
    """Building blocks of a single entry, straight from the affect functions."""
    runs = sorted_runs(runs)
    if not runs:
        raise ValueError("no runs")
    scores = _scores(runs, shift)
    entry = lut.check_index(entry)
    F_A = P_A = F_U = P_U = F = P = 0.0
    for run, s in zip(runs, scores):
        w = fraffect(lut, run, entry, cfg) if cfg.uses_freq else raffect(lut, run, entry, cfg)
        if s < 0:
            F += s
            F_A += w * s
            if w == 0.0:
                F_U += s
        else:
            P += s
            P_A += w * s
            if w == 0.0:
                P_U += s
    if cfg.uses_freq:
        F_U, P_U = F - F_A, P - P_A
        F, P = F_A + F_U, P_A + P_U
    return BuildingBlocks(F_A, P_A, F_U, P_U, F, P)


def all_building_blocks(runs: Iterable[TraceRun], lut: LookupMap, cfg: AffectConfig,
                        shift: ScoreShift | None = None) -> BuildingBlocks:
    """Building blocks for every entry at once, as flat row-major arrays.

    Runs are accumulated one at a time in ascending id order, so results do
    not depend on the order the runs were supplied in.
    """
    runs = sorted_runs(runs)
    if not runs:
        raise ValueError("no runs")
    scores = _scores(runs, shift)
    n = lut.size
    F_A, P_A, F_U, P_U = (np.zeros(n) for _ in range(4))
    F = P = 0.0
    for run, s in zip(runs, scores):
        idx, w = run_weights(lut, run, cfg)
        if s < 0:
            F += s
            F_A[idx] += w * s
            if not cfg.uses_freq:
                contrib = np.full(n, s)
                contrib[idx] = 0.0
                F_U += contrib
        else:
            P += s
            P_A[idx] += w * s
            if not cfg.uses_freq:
                contrib = np.full(n, s)
                contrib[idx] = 0.0
                P_U += contrib
    Fv, Pv = np.full(n, F), np.full(n, P)
    if cfg.uses_freq:
        F_U, P_U = Fv - F_A, Pv - P_A
        Fv, Pv = F_A + F_U, P_A + P_U
    return BuildingBlocks(F_A, P_A, F_U, P_U, Fv, Pv)


# -- heuristics --------------------------------------------------------------
# All three accept scalar or array building blocks.

def _out(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


def _ratio_or_inf(num, den):
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = num / den
    q = np.where(den == 0.0, np.where(num > 0.0, np.inf, 0.0), q)
    return _out(q)


def tarantula(bb: BuildingBlocks) -> float:
    F, P = np.asarray(bb.F, dtype=float), np.asarray(bb.P, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        rf = np.where(F != 0.0, np.asarray(bb.F_A) / F, 0.0)
        rp = np.where(P != 0.0, np.asarray(bb.P_A) / P, 0.0)
        tot = rf + rp
        out = np.where(tot > 0.0, rf / tot, 0.0)
    return _out(out)


def kulczynski(bb: BuildingBlocks) -> float:
    return _ratio_or_inf(np.abs(bb.F_A), np.abs(bb.F_U) + np.asarray(bb.P_A))


def dstar(bb: BuildingBlocks, gamma: float = 2.0) -> float:
    if not gamma >= 1.0:
        raise ValueError(f"gamma must be >= 1, got {gamma}")
    return _ratio_or_inf(np.abs(bb.F_A) ** gamma, np.abs(bb.F_U) + np.asarray(bb.P_A))


HEURISTICS: dict[str, Callable[..., float]] = {
    "tarantula": tarantula,
    "kulczynski": kulczynski,
    "dstar": dstar,
}


def register_heuristic(name: str, fn: Callable[[BuildingBlocks], float]) -> None:
    """Add a coefficient. ``fn`` maps BuildingBlocks to a real; it is called
    once per entry unless it also accepts array-valued blocks."""
    HEURISTICS[name] = fn


def _evaluate(name: str, bb: BuildingBlocks, gamma: float) -> np.ndarray:
    fn = HEURISTICS.get(name)
    if fn is None:
        raise ValueError(f"unknown heuristic {name!r}; choose from {sorted(HEURISTICS)}")
    if fn is dstar:
        return np.asarray(dstar(bb, gamma), dtype=float)
    if fn in (tarantula, kulczynski):
        return np.asarray(fn(bb), dtype=float)
    n = len(np.atleast_1d(bb.F_A))
    return np.array([fn(bb[k]) for k in range(n)], dtype=float)


# -- ranking -----------------------------------------------------------------

@dataclass
class RankingResult:
    """Per-entry scores and the entries sorted by decreasing suspiciousness.

    ``scores`` is indexed by flat row-major entry index. Ties are broken
    by ascending flat index.
    """

    shape: tuple[int, ...]
    scores: np.ndarray
    order: list[EntryIndex]
    heuristic: str
    config: dict = field(default_factory=dict)

    def score(self, entry: EntryIndex) -> float:
        return float(self.scores[np.ravel_multi_index(tuple(entry), self.shape)])

    def position(self, entry: EntryIndex) -> int:
        """1-based position of ``entry`` in the order."""
        return self.order.index(tuple(entry)) + 1

    def top(self, k: int = 1) -> list[EntryIndex]:
        return self.order[:k]


def order_entries(scores: np.ndarray, shape: tuple[int, ...]) -> list[EntryIndex]:
    flat = np.arange(scores.size)
    perm = np.lexsort((flat, -scores))
    return [tuple(int(i) for i in np.unravel_index(k, shape)) for k in perm]


def rank(runs: Iterable[TraceRun], lut: LookupMap, heuristic: str = "dstar",
         cfg: AffectConfig | None = None, shift: ScoreShift | None = None,
         gamma: float = 2.0) -> RankingResult:
    cfg = cfg or AffectConfig()
    shift = shift or ScoreShift()
    if heuristic == "dstar" and not gamma >= 1.0:
        raise ValueError(f"gamma must be >= 1, got {gamma}")
    bb = all_building_blocks(runs, lut, cfg, shift)
    # adding 0.0 turns -0.0 into 0.0 so output files never carry a signed zero
    scores = _evaluate(heuristic, bb, gamma) + 0.0
    config = {"affect": cfg.to_dict(), "shift": [shift.neg_shift, shift.pos_shift]}
    if heuristic == "dstar":
        config["gamma"] = gamma
    return RankingResult(lut.shape, scores, order_entries(scores, lut.shape), heuristic, config)


def _enc(x: float):
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _dec(x) -> float:
    return float(x)  # float() accepts "inf" and "-inf"


def ranking_to_dict(res: RankingResult) -> dict:
    return {
        "heuristic": res.heuristic,
        "config": res.config,
        "shape": list(res.shape),
        "entries": [{"index": list(e), "score": _enc(res.score(e))} for e in res.order],
    }


def ranking_from_dict(d: dict) -> RankingResult:
    shape = tuple(d["shape"])
    scores = np.zeros(int(np.prod(shape)))
    order = []
    for item in d["entries"]:
        e = tuple(int(i) for i in item["index"])
        scores[np.ravel_multi_index(e, shape)] = _dec(item["score"])
        order.append(e)
    if len(order) != scores.size or len(set(order)) != len(order):
        raise ValueError("ranking does not list every entry exactly once")
    return RankingResult(shape, scores, order, d["heuristic"], d.get("config", {}))


def dump_ranking(res: RankingResult) -> str:
    return json.dumps(ranking_to_dict(res), indent=1) + "\n"


def load_ranking(path) -> RankingResult:
    with open(path) as fh:
        return ranking_from_dict(json.load(fh))
