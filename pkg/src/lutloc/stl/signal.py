"""Sampled signals and exact piecewise-linear operations on them.

Robustness signals are kept as piecewise-linear functions (knot times plus
values). Pointwise min/max insert the crossing points, and sliding-window
inf/sup insert the points where the minimizing piece changes, so every
result is again an exact piecewise-linear function of time.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np


class SignalError(ValueError):
    pass


class Signal:
    """Multi-channel sampled signal, linearly interpolated between samples.

    Samples with repeated times are collapsed, keeping the last value.
    """

    def __init__(self, times, channels: Mapping[str, object]):
        t = np.asarray(times, dtype=float)
        if t.ndim != 1 or t.size == 0:
            raise SignalError("a signal needs at least one sample time")
        if np.any(np.diff(t) < 0):
            raise SignalError("sample times must be non-decreasing")
        cols = {}
        for name, v in channels.items():
            v = np.asarray(v, dtype=float)
            if v.shape != t.shape:
                raise SignalError(f"channel {name!r} has {v.size} samples, expected {t.size}")
            cols[name] = v
        keep = np.append(t[1:] != t[:-1], True)
        self.times = t[keep]
        self.channels = {k: v[keep] for k, v in cols.items()}

    @classmethod
    def from_run_signals(cls, signals: Mapping[str, tuple]) -> "Signal":
        """Build from per-channel ``(t, v)`` pairs that share one time base."""
        items = list(signals.items())
        if not items:
            raise SignalError("no signals")
        t0 = np.asarray(items[0][1][0], dtype=float)
        chans = {}
        for name, (t, v) in items:
            t = np.asarray(t, dtype=float)
            if t.shape != t0.shape or not np.array_equal(t, t0):
                chans[name] = np.interp(t0, t, np.asarray(v, dtype=float))
            else:
                chans[name] = v
        return cls(t0, chans)

    @classmethod
    def from_csv(cls, path) -> "Signal":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if len(rows) < 2:
            raise SignalError(f"{path}: need a header and at least one row")
        header = [h.strip() for h in rows[0]]
        data = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float)
        return cls(data[:, 0], {h: data[:, k] for k, h in enumerate(header[1:], start=1)})

    def to_csv(self, path) -> None:
        names = list(self.channels)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", *names])
            for k, t in enumerate(self.times):
                w.writerow([repr(float(t)), *(repr(float(self.channels[n][k])) for n in names)])

    @property
    def start(self) -> float:
        return float(self.times[0])

    @property
    def end(self) -> float:
        return float(self.times[-1])

    def __getitem__(self, name: str) -> "PLSignal":
        return PLSignal(self.times, self.channels[name])

    def __contains__(self, name: str) -> bool:
        return name in self.channels


@dataclass(frozen=True)
class PLSignal:
    """Piecewise-linear function given by strictly increasing knots."""

    t: np.ndarray
    v: np.ndarray

    @property
    def start(self) -> float:
        return float(self.t[0])

    @property
    def end(self) -> float:
        return float(self.t[-1])

    def at(self, x):
        return np.interp(x, self.t, self.v)

    def __neg__(self) -> "PLSignal":
        return PLSignal(self.t, -self.v)

    def map(self, fn) -> "PLSignal":
        return PLSignal(self.t, fn(self.v))

    def restrict(self, lo: float, hi: float) -> "PLSignal":
        """Restriction to [lo, hi] (which must lie inside the domain)."""
        inner = self.t[(self.t > lo) & (self.t < hi)]
        t = np.unique(np.concatenate([[lo], inner, [hi]]))
        return PLSignal(t, self.at(t))

    def shift(self, dt: float) -> "PLSignal":
        """g(t) = f(t + dt), defined on the shifted domain."""
        return PLSignal(self.t - dt, self.v)


def _crossings(t: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Interior zero crossings of the piecewise-linear function (t, d)."""
    d0, d1 = d[:-1], d[1:]
    k = np.flatnonzero(((d0 < 0) & (d1 > 0)) | ((d0 > 0) & (d1 < 0)))
    if k.size == 0:
        return np.empty(0)
    frac = d0[k] / (d0[k] - d1[k])
    tc = t[k] + frac * (t[k + 1] - t[k])
    return tc[(tc > t[k]) & (tc < t[k + 1])]


def zero_crossings(f: PLSignal) -> np.ndarray:
    return _crossings(f.t, f.v)


def with_zero_knots(f: PLSignal) -> PLSignal:
    """Same function with its interior zero crossings added as knots."""
    tc = zero_crossings(f)
    if tc.size == 0:
        return f
    t = np.union1d(f.t, tc)
    v = f.at(t)
    v[np.isin(t, tc)] = 0.0
    return PLSignal(t, v)


def common(f: PLSignal, g: PLSignal) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Both functions on the union of their knots over the shared domain."""
    lo, hi = max(f.start, g.start), min(f.end, g.end)
    if lo > hi:
        raise SignalError("signals have disjoint domains")
    t = np.union1d(f.t, g.t)
    t = t[(t >= lo) & (t <= hi)]
    if t.size == 0 or t[0] != lo:
        t = np.union1d(t, [lo, hi])
    return t, f.at(t), g.at(t)


def pl_min(f: PLSignal, g: PLSignal) -> PLSignal:
    t, a, b = common(f, g)
    tc = _crossings(t, a - b)
    if tc.size:
        t = np.union1d(t, tc)
        a, b = f.at(t), g.at(t)
    return PLSignal(t, np.minimum(a, b))


def pl_max(f: PLSignal, g: PLSignal) -> PLSignal:
    return -pl_min(-f, -g)


def pl_binary(f: PLSignal, g: PLSignal, op) -> PLSignal:
    """Pointwise ``op`` sampled on the merged knots (exact for +, -)."""
    t, a, b = common(f, g)
    return PLSignal(t, op(a, b))


class _RangeMin:
    """Sparse table for O(1) range-minimum queries over knot values."""

    def __init__(self, v: np.ndarray):
        self.levels = [v]
        k = 1
        while 2 * k <= len(v):
            prev = self.levels[-1]
            self.levels.append(np.minimum(prev[:-k], prev[k:]))
            k *= 2

    def query(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        """min(v[lo:hi]) per pair; +inf where the range is empty."""
        out = np.full(lo.shape, np.inf)
        ok = hi > lo
        if not np.any(ok):
            return out
        lo_, hi_ = lo[ok], hi[ok]
        span = hi_ - lo_
        lev = np.floor(np.log2(span)).astype(int)
        # guard against log2 rounding at exact powers of two
        lev = np.where((1 << (lev + 1)) <= span, lev + 1, lev)
        lev = np.where((1 << lev) > span, lev - 1, lev)
        res = np.empty(lo_.shape)
        for L in np.unique(lev):
            m = lev == L
            table = self.levels[L]
            res[m] = np.minimum(table[lo_[m]], table[hi_[m] - (1 << L)])
        out[ok] = res
        return out


def window_min(f: PLSignal, a: float, b: float, truncate: bool = False) -> PLSignal:
    """g(t) = min of f over [t + a, min(t + b, end)].

    Without ``truncate`` the result is defined where the whole window fits
    (t <= end - b); with it, windows are clipped at the end of the signal and
    the result extends to end - a. An infinite ``b`` always clips.
    """
    if a < 0 or b < a:
        raise SignalError(f"bad window [{a}, {b}]")
    lo_dom = f.start
    clip = truncate or math.isinf(b)
    hi_dom = f.end - a if clip else f.end - b
    if hi_dom < lo_dom:
        raise SignalError("formula horizon exceeds the signal span")
    if lo_dom == hi_dom:
        cand = np.array([lo_dom])
    else:
        shifted = [f.t - a]
        if not math.isinf(b):
            shifted.append(f.t - b)
        cand = np.concatenate([[lo_dom, hi_dom], *shifted])
        cand = np.unique(cand[(cand >= lo_dom) & (cand <= hi_dom)])

    rmq = _RangeMin(f.v)

    def lo_of(t):
        return t + a

    def hi_of(t):
        return np.minimum(t + b, f.end) if clip else t + b

    def value(t):
        lo, hi = lo_of(t), hi_of(t)
        i0 = np.searchsorted(f.t, lo, side="right")
        i1 = np.searchsorted(f.t, hi, side="left")
        inner = rmq.query(i0, i1)
        return np.minimum(np.minimum(f.at(lo), f.at(hi)), inner)

    if cand.size > 1:
        p, q = cand[:-1], cand[1:]
        mid = 0.5 * (p + q)
        lo_m, hi_m = lo_of(mid), hi_of(mid)
        m = rmq.query(np.searchsorted(f.t, lo_m, side="right"),
                      np.searchsorted(f.t, hi_m, side="left"))
        # the window edges move along single linear pieces between candidates
        A0, A1 = f.at(lo_of(p)), f.at(lo_of(q))
        B0, B1 = f.at(hi_of(p)), f.at(hi_of(q))
        extra = []
        for u0, u1, w0, w1 in ((A0, A1, B0, B1), (A0, A1, m, m), (B0, B1, m, m)):
            with np.errstate(invalid="ignore", divide="ignore"):
                d0, d1 = u0 - w0, u1 - w1
                s = d0 / (d0 - d1)
            ok = np.isfinite(s) & (s > 0) & (s < 1)
            extra.append(p[ok] + s[ok] * (q[ok] - p[ok]))
        cand = np.unique(np.concatenate([cand, *extra]))
    return PLSignal(cand, value(cand))


def window_max(f: PLSignal, a: float, b: float, truncate: bool = False) -> PLSignal:
    return -window_min(-f, a, b, truncate)


def until_unbounded(phi: PLSignal, psi: PLSignal) -> PLSignal:
    """U(s) = sup_{t' >= s} min(psi(t'), inf_{[s, t']} phi) up to the end.

    Backward recurrence over segments on which phi and min(phi, psi) are
    linear: U(s) = max(g(s), min(phi(s), K)) with K = min(phi, U) at the
    segment's right end.
    """
    g = pl_min(phi, psi)
    t = np.union1d(g.t, phi.t)
    t = t[(t >= g.start) & (t <= g.end)]
    ph, gv = phi.at(t), g.at(t)
    n = len(t)
    knots_t = [t[-1]]
    knots_v = [gv[-1]]
    U_next = gv[-1]
    for i in range(n - 2, -1, -1):
        K = min(ph[i + 1], U_next)
        t0, t1 = t[i], t[i + 1]
        pts = []
        for y0, y1 in ((ph[i], ph[i + 1]), (gv[i], gv[i + 1])):
            d0, d1 = y0 - K, y1 - K
            if (d0 < 0 < d1) or (d1 < 0 < d0):
                pts.append(t0 + (t1 - t0) * d0 / (d0 - d1))
        for s in sorted(pts, reverse=True):
            if t0 < s < t1:
                w = (s - t0) / (t1 - t0)
                knots_t.append(s)
                knots_v.append(max(gv[i] + w * (gv[i + 1] - gv[i]),
                                   min(ph[i] + w * (ph[i + 1] - ph[i]), K)))
        U_i = max(gv[i], min(ph[i], K))
        knots_t.append(t0)
        knots_v.append(U_i)
        U_next = U_i
    tt = np.array(knots_t[::-1])
    vv = np.array(knots_v[::-1])
    keep = np.append(tt[1:] > tt[:-1], True)
    return PLSignal(tt[keep], vv[keep])


def load_signal(path) -> Signal:
    return Signal.from_csv(Path(path))
