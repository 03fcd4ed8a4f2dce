"""Scored executions and the affect functions linking runs to map entries."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .lutmap import DistanceMode, EntryIndex, LookupMap, QueryRecord

__all__ = [
    "AffectConfig", "QueryRecord", "TraceRun", "TraceError", "accesses", "fraffect",
    "maffect", "raffect", "run_weights", "sorted_runs", "load_traces", "dump_traces",
]

MODES = ("basic", "metric", "freq-basic", "freq-metric")
_QUERY_CHUNK = 512


class TraceError(ValueError):
    """Malformed trace data."""


@dataclass(frozen=True)
class AffectConfig:
    mode: str = "basic"
    lam: float = 0.5
    radius: float = 2.0
    aggregation: str = "max"
    distance_mode: DistanceMode = DistanceMode.GRID_SCALED

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown affect mode {self.mode!r}")
        if self.aggregation not in ("max", "sum"):
            raise ValueError(f"unknown aggregation {self.aggregation!r}")
        object.__setattr__(self, "distance_mode", DistanceMode.parse(self.distance_mode))
        if self.uses_metric and not 0.0 < self.lam < 1.0:
            raise ValueError("lambda must lie strictly between 0 and 1")
        if not self.radius >= 0.0:
            raise ValueError("radius must be >= 0")

    @property
    def uses_metric(self) -> bool:
        return self.mode in ("metric", "freq-metric")

    @property
    def uses_freq(self) -> bool:
        return self.mode.startswith("freq")

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "lambda": self.lam,
            "radius": "inf" if math.isinf(self.radius) else self.radius,
            "aggregation": self.aggregation,
            "distance": self.distance_mode.value,
        }


@dataclass(frozen=True)
class TraceRun:
    id: str
    queries: tuple[QueryRecord, ...] = ()
    score: float | None = None
    signals: Mapping[str, tuple] | None = field(default=None, compare=False)
    meta: Mapping[str, object] | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "id", str(self.id))
        object.__setattr__(self, "queries", tuple(self.queries))
        for k, q in enumerate(self.queries, start=1):
            if q.seq != k:
                raise TraceError(f"run {self.id}: query seq {q.seq} at position {k}")
        if self.score is not None:
            s = float(self.score)
            if not math.isfinite(s):
                raise TraceError(f"run {self.id}: score must be finite, got {s}")
            object.__setattr__(self, "score", s)

    def __len__(self) -> int:
        return len(self.queries)

    def with_score(self, score: float) -> "TraceRun":
        return replace(self, score=score)

    def accessed(self) -> frozenset[EntryIndex]:
        return frozenset(i for q in self.queries for i in q.depends)


def _natural_key(run_id: str):
    return tuple(int(t) if t.isdigit() else t for t in re.split(r"(\d+)", run_id))


def sorted_runs(runs: Iterable[TraceRun]) -> list[TraceRun]:
    """Runs in ascending id order (numeric chunks compared as numbers)."""
    return sorted(runs, key=lambda r: _natural_key(r.id))


# -- affect functions --------------------------------------------------------

def accesses(run: TraceRun, entry: EntryIndex) -> bool:
    entry = tuple(entry)
    return any(entry in q.depends for q in run.queries)


def _query_distance(lut: LookupMap, point, entry: EntryIndex, mode: DistanceMode) -> float:
    q = lut.point_coords([point], mode)[0]
    e = lut.entry_coords(mode)[lut.ravel(tuple(entry))]
    return float(np.sqrt(np.sum((q - e) ** 2)))


def maffect(lut: LookupMap, query, entry: EntryIndex, cfg: AffectConfig) -> float:
    """Effect of ``entry`` on one query (a QueryRecord or a bare point)."""
    entry = tuple(entry)
    if isinstance(query, QueryRecord):
        point, deps = query.point, query.depends
    else:
        point, deps = tuple(query), None
    if not cfg.uses_metric:
        if deps is None:
            deps = lut.depends(point)
        return 1.0 if entry in deps else 0.0
    d = _query_distance(lut, point, entry, cfg.distance_mode)
    return cfg.lam ** d if d <= cfg.radius else 0.0


def raffect(lut: LookupMap, run: TraceRun, entry: EntryIndex, cfg: AffectConfig) -> float:
    if not cfg.uses_metric:
        return 1.0 if accesses(run, entry) else 0.0
    vals = [maffect(lut, q, entry, cfg) for q in run.queries]
    if not vals:
        return 0.0
    if cfg.aggregation == "max":
        return max(vals)
    return min(1.0, sum(vals))


def fraffect(lut: LookupMap, run: TraceRun, entry: EntryIndex, cfg: AffectConfig) -> float:
    """Fraction of the run's queries affected by ``entry``; 0 for an empty run."""
    if not run.queries:
        return 0.0
    return sum(maffect(lut, q, entry, cfg) for q in run.queries) / len(run.queries)


# -- bulk weights ------------------------------------------------------------

def _flat_depends(lut: LookupMap, run: TraceRun) -> np.ndarray:
    if not run.queries:
        return np.empty(0, dtype=np.int64)
    idx = [i for q in run.queries for i in q.depends]
    arr = np.asarray(idx, dtype=np.int64).reshape(len(idx), lut.ndim)
    return np.ravel_multi_index(arr.T, lut.shape)


def run_weights(lut: LookupMap, run: TraceRun, cfg: AffectConfig) -> tuple[np.ndarray, np.ndarray]:
    """Sparse affect weights of every entry on ``run``.

    Returns ``(flat_indices, weights)`` with unique ascending indices and
    strictly positive weights; entries not listed have weight 0. The weight
    is ``raffect`` in basic/metric mode and ``fraffect`` in frequency mode.
    """
    n = len(run.queries)
    if n == 0:
        return np.empty(0, dtype=np.int64), np.empty(0)
    if not cfg.uses_metric:
        if cfg.uses_freq:
            counts = np.zeros(lut.size)
            for q in run.queries:
                for i in set(q.depends):
                    counts[lut.ravel(i)] += 1.0
            idx = np.flatnonzero(counts)
            return idx, counts[idx] / n
        idx = np.unique(_flat_depends(lut, run))
        return idx, np.ones(len(idx))

    coords = lut.entry_coords(cfg.distance_mode)
    pts = lut.point_coords([q.point for q in run.queries], cfg.distance_mode)
    acc = np.zeros(lut.size)
    sum_mode = cfg.uses_freq or cfg.aggregation == "sum"
    for start in range(0, n, _QUERY_CHUNK):
        block = pts[start:start + _QUERY_CHUNK]
        d = np.sqrt(((block[:, None, :] - coords[None, :, :]) ** 2).sum(axis=2))
        w = np.where(d <= cfg.radius, cfg.lam ** d, 0.0)
        if sum_mode:
            # row-by-row keeps the summation order fixed
            for row in w:
                acc += row
        else:
            np.maximum(acc, w.max(axis=0), out=acc)
    if cfg.uses_freq:
        acc /= n
    elif sum_mode:
        np.minimum(acc, 1.0, out=acc)
    idx = np.flatnonzero(acc > 0.0)
    return idx, acc[idx]


# -- files -------------------------------------------------------------------

def run_to_dict(run: TraceRun) -> dict:
    d: dict = {"id": run.id}
    if run.score is not None:
        d["score"] = run.score
    d["queries"] = [
        {"seq": q.seq, "point": list(q.point), "depends": [list(i) for i in q.depends]}
        for q in run.queries
    ]
    if run.signals:
        d["signals"] = {
            name: {"t": [float(x) for x in t], "v": [float(x) for x in v]}
            for name, (t, v) in run.signals.items()
        }
    if run.meta:
        d["meta"] = dict(run.meta)
    return d


def run_from_dict(d: dict) -> TraceRun:
    try:
        queries = tuple(
            QueryRecord(
                seq=int(q["seq"]),
                point=tuple(float(x) for x in q["point"]),
                depends=tuple(tuple(int(i) for i in e) for e in q["depends"]),
            )
            for q in d.get("queries", [])
        )
        signals = None
        if d.get("signals"):
            signals = {k: (tuple(s["t"]), tuple(s["v"])) for k, s in d["signals"].items()}
        return TraceRun(id=d["id"], queries=queries, score=d.get("score"),
                        signals=signals, meta=d.get("meta"))
    except (KeyError, TypeError) as e:
        raise TraceError(f"malformed run record: {e!r}") from None


def dump_traces(runs: Iterable[TraceRun]) -> str:
    return "".join(json.dumps(run_to_dict(r)) + "\n" for r in runs)


def load_traces(path) -> list[TraceRun]:
    runs = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            runs.append(run_from_dict(json.loads(line)))
        except json.JSONDecodeError as e:
            raise TraceError(f"{path}:{lineno}: {e}") from None
    ids = [r.id for r in runs]
    if len(set(ids)) != len(ids):
        raise TraceError(f"{path}: duplicate run ids")
    return runs
