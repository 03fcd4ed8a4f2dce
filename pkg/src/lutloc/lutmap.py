"""N-dimensional look-up maps.

A :class:`LookupMap` stores one scalar per point of a rectilinear grid and
completes it to a function by interpolation. Every evaluation also reports
which stored entries were read, which is what the localization code keys on.
"""

from __future__ import annotations

import enum
import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

EntryIndex = tuple[int, ...]

SCHEMES = ("multilinear", "nearest")


class MapError(ValueError):
    """Invalid map construction or access."""


class DistanceMode(str, enum.Enum):
    INDEX = "index"
    PHYSICAL = "physical"
    GRID_SCALED = "grid-scaled"

    @classmethod
    def parse(cls, value: "str | DistanceMode") -> "DistanceMode":
        if isinstance(value, cls):
            return value
        aliases = {"index-space": "index", "grid_scaled": "grid-scaled", "scaled": "grid-scaled"}
        value = aliases.get(value, value)
        try:
            return cls(value)
        except ValueError:
            raise MapError(f"unknown distance mode {value!r}") from None


@dataclass(frozen=True)
class GridAxis:
    breakpoints: tuple[float, ...]

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        object.__setattr__(self, "breakpoints", bp)
        if len(bp) < 2:
            raise MapError("an axis needs at least two breakpoints")
        if not all(math.isfinite(b) for b in bp):
            raise MapError("breakpoints must be finite")
        if any(b1 <= b0 for b0, b1 in zip(bp, bp[1:])):
            raise MapError("breakpoints must be strictly increasing")

    def __len__(self) -> int:
        return len(self.breakpoints)

    @property
    def mean_step(self) -> float:
        return (self.breakpoints[-1] - self.breakpoints[0]) / (len(self.breakpoints) - 1)


@dataclass(frozen=True)
class QueryRecord:
    """One map read: ordinal within the run, query point, entries read."""

    seq: int
    point: tuple[float, ...]
    depends: tuple[EntryIndex, ...]


class LookupMap:
    """Scalar look-up map over a rectilinear grid.

    Parameters
    ----------
    axes : sequence of GridAxis or sequence of breakpoint lists
    values : array_like
        Either the full grid-shaped array or a row-major flat array.
    scheme : {"multilinear", "nearest"}
    """

    def __init__(self, axes, values, scheme: str = "multilinear"):
        self.axes: tuple[GridAxis, ...] = tuple(
            a if isinstance(a, GridAxis) else GridAxis(tuple(a)) for a in axes
        )
        if not self.axes:
            raise MapError("a map needs at least one axis")
        if scheme not in SCHEMES:
            raise MapError(f"unknown interpolation scheme {scheme!r}")
        self.scheme = scheme
        shape = tuple(len(a) for a in self.axes)
        arr = np.array(values, dtype=float)
        if arr.shape != shape:
            if arr.size != math.prod(shape):
                raise MapError(f"values have {arr.size} elements, grid needs {math.prod(shape)}")
            arr = arr.reshape(shape)
        if not np.all(np.isfinite(arr)):
            raise MapError("map values must be finite")
        arr.setflags(write=False)
        self.values = arr
        self._bps = [np.asarray(a.breakpoints) for a in self.axes]
        self._coords: dict[DistanceMode, np.ndarray] = {}

    # -- basic structure -------------------------------------------------

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size

    def __repr__(self) -> str:
        return f"LookupMap(shape={self.shape}, scheme={self.scheme!r})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, LookupMap):
            return NotImplemented
        return (
            self.axes == other.axes
            and self.scheme == other.scheme
            and np.array_equal(self.values, other.values)
        )

    def entries(self) -> Iterable[EntryIndex]:
        """All entry indices in row-major order."""
        return itertools.product(*(range(n) for n in self.shape))

    def check_index(self, idx: Sequence[int]) -> EntryIndex:
        idx = tuple(int(i) for i in idx)
        if len(idx) != self.ndim or any(not 0 <= i < n for i, n in zip(idx, self.shape)):
            raise MapError(f"entry index {idx} out of range for map of shape {self.shape}")
        return idx

    def ravel(self, idx: EntryIndex) -> int:
        return int(np.ravel_multi_index(idx, self.shape))

    def unravel(self, flat: int) -> EntryIndex:
        return tuple(int(i) for i in np.unravel_index(flat, self.shape))

    def entry_point(self, idx: EntryIndex) -> tuple[float, ...]:
        return tuple(a.breakpoints[i] for a, i in zip(self.axes, idx))

    def __getitem__(self, idx) -> float:
        return float(self.values[self.check_index(idx)])

    def locate(self, point: Sequence[float]) -> EntryIndex | None:
        """Index of the grid entry exactly at ``point``, or None."""
        idx = []
        for bp, x in zip(self._bps, point):
            i = int(np.searchsorted(bp, x))
            if i >= len(bp) or bp[i] != x:
                return None
            idx.append(i)
        return tuple(idx)

    # -- interpolation ---------------------------------------------------

    def _check_point(self, point) -> tuple[float, ...]:
        p = tuple(float(x) for x in np.atleast_1d(np.asarray(point, dtype=float)))
        if len(p) != self.ndim:
            raise MapError(f"query has {len(p)} coordinates, map has {self.ndim} axes")
        if not all(math.isfinite(x) for x in p):
            raise MapError(f"non-finite query point {p}")
        return p

    def _axis_stencil(self, axis: int, x: float) -> list[tuple[int, float]]:
        """(index, weight) pairs read along one axis."""
        bp = self._bps[axis]
        n = len(bp)
        if self.scheme == "nearest":
            if x <= bp[0]:
                return [(0, 1.0)]
            if x >= bp[-1]:
                return [(n - 1, 1.0)]
            i = int(np.searchsorted(bp, x, side="right")) - 1
            # midpoint ties go to the lower entry
            return [(i, 1.0)] if x - bp[i] <= bp[i + 1] - x else [(i + 1, 1.0)]
        i = int(np.searchsorted(bp, x, side="left"))
        if i < n and bp[i] == x:
            return [(i, 1.0)]
        lo = min(max(i - 1, 0), n - 2)
        t = (x - bp[lo]) / (bp[lo + 1] - bp[lo])
        return [(lo, 1.0 - t), (lo + 1, t)]

    def stencil(self, point) -> list[tuple[EntryIndex, float]]:
        """Entries read for ``point`` with their interpolation weights."""
        p = self._check_point(point)
        per_axis = [self._axis_stencil(k, x) for k, x in enumerate(p)]
        out = []
        for combo in itertools.product(*per_axis):
            idx = tuple(c[0] for c in combo)
            w = math.prod(c[1] for c in combo)
            out.append((idx, w))
        return out

    def __call__(self, point) -> float:
        return self.interpolate(point)[0]

    def interpolate(self, point, seq: int = 1) -> tuple[float, QueryRecord]:
        """Evaluate the completed function and return the access record."""
        st = self.stencil(point)
        value = 0.0
        for idx, w in st:
            value += w * float(self.values[idx])
        rec = QueryRecord(seq=seq, point=self._check_point(point), depends=tuple(i for i, _ in st))
        return value, rec

    def depends(self, point) -> frozenset[EntryIndex]:
        return frozenset(idx for idx, _ in self.stencil(point))

    # -- geometry --------------------------------------------------------

    def axis_coords(self, mode: DistanceMode) -> list[np.ndarray]:
        """Per-axis entry coordinates in the space of ``mode``."""
        mode = DistanceMode.parse(mode)
        if mode is DistanceMode.INDEX:
            return [np.arange(len(a), dtype=float) for a in self.axes]
        if mode is DistanceMode.PHYSICAL:
            return list(self._bps)
        return [bp / a.mean_step for bp, a in zip(self._bps, self.axes)]

    def entry_coords(self, mode: DistanceMode) -> np.ndarray:
        """(size, ndim) array of entry coordinates, row-major."""
        mode = DistanceMode.parse(mode)
        if mode not in self._coords:
            mesh = np.meshgrid(*self.axis_coords(mode), indexing="ij")
            c = np.stack([m.ravel() for m in mesh], axis=1)
            c.setflags(write=False)
            self._coords[mode] = c
        return self._coords[mode]

    def point_coords(self, points, mode: DistanceMode) -> np.ndarray:
        """Map continuous query points (n, ndim) into the space of ``mode``.

        Index space uses the piecewise-linear breakpoint-to-index map,
        continued past the hull with the boundary cell's step.
        """
        mode = DistanceMode.parse(mode)
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if mode is DistanceMode.PHYSICAL:
            return pts
        if mode is DistanceMode.GRID_SCALED:
            return pts / np.array([a.mean_step for a in self.axes])
        out = np.empty_like(pts)
        for k, bp in enumerate(self._bps):
            x = pts[:, k]
            n = len(bp)
            i = np.clip(np.searchsorted(bp, x, side="right") - 1, 0, n - 2)
            out[:, k] = i + (x - bp[i]) / (bp[i + 1] - bp[i])
        return out

    def diameter(self, mode: DistanceMode) -> float:
        coords = self.axis_coords(mode)
        return float(math.sqrt(sum((c[-1] - c[0]) ** 2 for c in coords)))


def interpolate(lut: LookupMap, point, seq: int = 1) -> tuple[float, QueryRecord]:
    return lut.interpolate(point, seq)


def depends(lut: LookupMap, point) -> frozenset[EntryIndex]:
    return lut.depends(point)


def entry_distance(lut: LookupMap, a: EntryIndex, b: EntryIndex,
                   mode: DistanceMode | str = DistanceMode.GRID_SCALED) -> float:
    """Euclidean distance between two entries in the chosen coordinate space."""
    a = lut.check_index(a)
    b = lut.check_index(b)
    coords = lut.axis_coords(DistanceMode.parse(mode))
    return math.sqrt(sum((c[i] - c[j]) ** 2 for c, i, j in zip(coords, a, b)))


def seed_fault(lut: LookupMap, edits) -> LookupMap:
    """Return a copy of ``lut`` with some entries replaced or scaled.

    ``edits`` is an iterable of ``(index, value)`` pairs, which replace the
    entry, or ``(index, ("scale", factor))`` pairs, which multiply it. A dict
    ``{"set": v}`` / ``{"scale": f}`` is accepted in place of the tuple.
    """
    vals = np.array(lut.values, dtype=float)
    for idx, change in edits:
        idx = lut.check_index(idx)
        if isinstance(change, dict):
            (kind, amount), = change.items()
        elif isinstance(change, (tuple, list)):
            kind, amount = change
        else:
            kind, amount = "set", change
        if kind == "set":
            vals[idx] = float(amount)
        elif kind == "scale":
            vals[idx] = vals[idx] * float(amount)
        else:
            raise MapError(f"unknown edit kind {kind!r}")
    return LookupMap(lut.axes, vals, lut.scheme)


# -- files -----------------------------------------------------------------

def map_to_dict(lut: LookupMap) -> dict:
    return {
        "axes": [list(a.breakpoints) for a in lut.axes],
        "values": [float(v) for v in lut.values.ravel()],
        "scheme": lut.scheme,
    }


def map_from_dict(d: dict) -> LookupMap:
    try:
        return LookupMap(d["axes"], d["values"], d.get("scheme", "multilinear"))
    except KeyError as e:
        raise MapError(f"map file missing key {e}") from None


def load_map(path) -> LookupMap:
    return map_from_dict(json.loads(Path(path).read_text()))


def dump_map(lut: LookupMap) -> str:
    return json.dumps(map_to_dict(lut))
