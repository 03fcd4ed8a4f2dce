"""Set-based localization from the entries failing and passing runs read.

Entries read by some failing run but far (more than ``r``) from every
entry read by a passing run are suspicious. The union model ranks them by
how badly the best failing run reading them failed times their distance to
the passing region; the intersection-union model additionally requires
every failing run to have read something suspicious nearby.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .lutmap import DistanceMode, EntryIndex, LookupMap
from .traces import TraceError, TraceRun, sorted_runs

__all__ = [
    "SpectraResult", "accessed_sets", "ball", "union_suspicious",
    "intersection_union_suspicious", "intersection_union_phi", "spectra_to_dict",
]

_CHUNK = 2048


def _flat(lut: LookupMap, entries: Iterable[EntryIndex]) -> np.ndarray:
    return np.array(sorted({lut.ravel(lut.check_index(e)) for e in entries}), dtype=np.int64)


def _entries(lut: LookupMap, flat) -> list[EntryIndex]:
    return [lut.unravel(int(k)) for k in sorted(flat)]


def _min_dist(lut: LookupMap, targets: np.ndarray, mode: DistanceMode,
              rows: np.ndarray | None = None) -> np.ndarray:
    """Distance from each entry (or each of ``rows``) to the nearest target."""
    coords = lut.entry_coords(mode)
    src = coords if rows is None else coords[rows]
    out = np.full(len(src), np.inf)
    if len(targets) == 0:
        return out
    tc = coords[targets]
    for s in range(0, len(tc), _CHUNK):
        blk = tc[s:s + _CHUNK]
        d = np.sqrt(((src[:, None, :] - blk[None, :, :]) ** 2).sum(axis=2))
        np.minimum(out, d.min(axis=1), out=out)
    return out


def _pair_dist(lut: LookupMap, a: np.ndarray, b: np.ndarray, mode: DistanceMode) -> np.ndarray:
    coords = lut.entry_coords(mode)
    return np.sqrt(((coords[a][:, None, :] - coords[b][None, :, :]) ** 2).sum(axis=2))


def _run_access(lut: LookupMap, run: TraceRun) -> np.ndarray:
    return np.array(sorted({lut.ravel(i) for q in run.queries for i in q.depends}), dtype=np.int64)


def _check_scored(runs):
    for r in runs:
        if r.score is None:
            raise TraceError(f"run {r.id} has no score")


def accessed_sets(runs: Iterable[TraceRun], lut: LookupMap) -> tuple[frozenset, frozenset]:
    """(M_F, M_S): entries read by failing (score < 0) and passing runs."""
    runs = list(runs)
    _check_scored(runs)
    mf, ms = set(), set()
    for r in runs:
        (mf if r.score < 0 else ms).update(r.accessed())
    return frozenset(mf), frozenset(ms)


def ball(lut: LookupMap, X: Iterable[EntryIndex], r: float,
         distance: DistanceMode | str = DistanceMode.GRID_SCALED) -> frozenset[EntryIndex]:
    """Entries within distance ``r`` of some member of ``X``."""
    if not r >= 0:
        raise ValueError("radius must be >= 0")
    flat = _flat(lut, X)
    d = _min_dist(lut, flat, DistanceMode.parse(distance))
    inside = np.flatnonzero(d <= r)
    return frozenset(_entries(lut, np.union1d(inside, flat)))


@dataclass
class SpectraResult:
    m_f: frozenset
    m_s: frozenset
    sus_u: list[EntryIndex]
    s_u: dict = field(default_factory=dict)
    d_u: dict = field(default_factory=dict)
    r_u: dict = field(default_factory=dict)
    sus_iu: list[EntryIndex] = field(default_factory=list)
    neighbors: dict = field(default_factory=dict)
    radius: float = 0.0
    distance: str = DistanceMode.GRID_SCALED.value


def _grid_neighbors(lut: LookupMap, e: EntryIndex) -> list[EntryIndex]:
    out = []
    for k in range(lut.ndim):
        for step in (-1, 1):
            j = e[k] + step
            if 0 <= j < lut.shape[k]:
                out.append(e[:k] + (j,) + e[k + 1:])
    return sorted(out)


def _sus_u_flat(lut, mf, ms, r, mode) -> np.ndarray:
    mf_flat, ms_flat = _flat(lut, mf), _flat(lut, ms)
    if len(mf_flat) == 0:
        return mf_flat
    d = _min_dist(lut, ms_flat, mode, rows=mf_flat)
    return mf_flat[d > r]


def union_suspicious(runs: Iterable[TraceRun], lut: LookupMap, r: float,
                     distance: DistanceMode | str = DistanceMode.GRID_SCALED,
                     with_iu: bool = True) -> SpectraResult:
    """Union-model suspicious set with s_U, d_U and R_U = s_U * d_U.

    ``sus_u`` is ordered by R_U descending, ties by ascending entry index.
    When no run passes, d_U falls back to the map diameter plus one.
    """
    if not r >= 0:
        raise ValueError("radius must be >= 0")
    mode = DistanceMode.parse(distance)
    runs = sorted_runs(runs)
    mf, ms = accessed_sets(runs, lut)
    sus = _sus_u_flat(lut, mf, ms, r, mode)
    ms_flat = _flat(lut, ms)
    if len(ms_flat):
        dist = _min_dist(lut, ms_flat, mode, rows=sus)
    else:
        dist = np.full(len(sus), lut.diameter(mode) + 1.0)
    s_best = {int(k): math.inf for k in sus}
    for run in runs:
        if run.score >= 0:
            continue
        for k in _run_access(lut, run):
            k = int(k)
            if k in s_best:
                s_best[k] = min(s_best[k], abs(run.score))
    res = SpectraResult(mf, ms, [], radius=float(r), distance=mode.value)
    rows = []
    for k, dk in zip(sus, dist):
        e = lut.unravel(int(k))
        s = s_best[int(k)]
        res.s_u[e], res.d_u[e], res.r_u[e] = s, float(dk), s * float(dk)
        rows.append((-res.r_u[e], int(k), e))
    res.sus_u = [e for _, _, e in sorted(rows)]
    res.neighbors = {e: _grid_neighbors(lut, e) for e in res.sus_u}
    if with_iu:
        res.sus_iu = intersection_union_suspicious(runs, lut, r, mode)
    return res


def intersection_union_suspicious(runs: Iterable[TraceRun], lut: LookupMap, r: float,
                                  distance: DistanceMode | str = DistanceMode.GRID_SCALED
                                  ) -> list[EntryIndex]:
    """Members of sus_U that lie within ``r`` of a sus_U entry read by every failing run."""
    mode = DistanceMode.parse(distance)
    runs = list(runs)
    mf, ms = accessed_sets(runs, lut)
    sus = _sus_u_flat(lut, mf, ms, r, mode)
    if len(sus) == 0:
        return []
    keep = np.ones(len(sus), dtype=bool)
    for run in runs:
        if run.score >= 0:
            continue
        hit = np.intersect1d(_run_access(lut, run), sus)
        if len(hit) == 0:
            return []
        keep &= (_pair_dist(lut, sus, hit, mode) <= r).any(axis=1)
    return _entries(lut, sus[keep])


def intersection_union_phi(runs: Iterable[TraceRun], lut: LookupMap, r: float,
                           distance: DistanceMode | str = DistanceMode.GRID_SCALED
                           ) -> list[EntryIndex]:
    """Same set via the defining condition: entries m of M_F such that every
    failing run read some m_z outside ball(M_S, r) with dist(m, m_z) <= r,
    minus ball(M_S, r)."""
    mode = DistanceMode.parse(distance)
    runs = list(runs)
    mf, ms = accessed_sets(runs, lut)
    mf_flat = _flat(lut, mf)
    if len(mf_flat) == 0:
        return []
    ms_d = _min_dist(lut, _flat(lut, ms), mode)
    outside = ms_d > r
    phi = np.ones(len(mf_flat), dtype=bool)
    for run in runs:
        if run.score >= 0:
            continue
        acc = _run_access(lut, run)
        acc = acc[outside[acc]]
        if len(acc) == 0:
            return []
        phi &= (_pair_dist(lut, mf_flat, acc, mode) <= r).any(axis=1)
    return _entries(lut, mf_flat[phi & outside[mf_flat]])


def _num(x: float):
    return "inf" if math.isinf(x) else x


def spectra_to_dict(res: SpectraResult) -> dict:
    return {
        "radius": _num(res.radius),
        "distance": res.distance,
        "sus_u": [
            {"index": list(e), "s_u": _num(res.s_u[e]), "d_u": _num(res.d_u[e]),
             "r_u": _num(res.r_u[e]), "neighbors": [list(n) for n in res.neighbors.get(e, [])]}
            for e in res.sus_u
        ],
        "sus_iu": [list(e) for e in res.sus_iu],
        "m_f": [list(e) for e in sorted(res.m_f)],
        "m_s": [list(e) for e in sorted(res.m_s)],
    }


def dump_spectra(res: SpectraResult) -> str:
    return json.dumps(spectra_to_dict(res), indent=1) + "\n"
