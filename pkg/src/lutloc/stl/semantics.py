"""Quantitative and boolean STL semantics over piecewise-linear signals.

``robustness`` builds the robustness of every subformula as an exact
piecewise-linear function of time. ``eval_bool`` works independently on
sets of closed time intervals (satisfaction sets), so the two can be
checked against each other.
"""

from __future__ import annotations

import math
import operator

import numpy as np

from .formula import (
    Abs, Always, And, Atom, BinOp, Const, Eventually, Formula, Neg, Not, Or, Step,
    TrueF, Until, Var, channels_of,
)
from .signal import (
    PLSignal, Signal, SignalError, pl_binary, pl_max, pl_min, until_unbounded,
    window_max, window_min, with_zero_knots,
)


class HorizonError(SignalError):
    """The formula needs more signal than is available."""


class MissingChannelError(KeyError):
    pass


_ARITH = {"+": operator.add, "-": operator.sub, "*": operator.mul, "/": operator.truediv}


def eval_expr(e, sig: Signal) -> PLSignal:
    """Arithmetic expression as a piecewise-linear signal.

    Exact for expressions affine in the channels (with ``abs`` zero
    crossings inserted as knots); products and quotients are sampled at
    the knots.
    """
    if isinstance(e, Const):
        return PLSignal(sig.times, np.full(sig.times.shape, e.value))
    if isinstance(e, Var):
        if e.name not in sig:
            raise MissingChannelError(e.name)
        return sig[e.name]
    if isinstance(e, Neg):
        return -eval_expr(e.arg, sig)
    if isinstance(e, Abs):
        return with_zero_knots(eval_expr(e.arg, sig)).map(np.abs)
    if isinstance(e, BinOp):
        with np.errstate(divide="ignore", invalid="ignore"):
            out = pl_binary(eval_expr(e.left, sig), eval_expr(e.right, sig), _ARITH[e.op])
        if not np.all(np.isfinite(out.v)):
            raise SignalError("non-finite value in atom expression")
        return out
    raise TypeError(e)


def _step_signal(f: Step, sig: Signal) -> PLSignal:
    if f.channel not in sig:
        raise MissingChannelError(f.channel)
    x = sig.channels[f.channel]
    jump = np.abs(np.diff(x, prepend=x[0]))
    return PLSignal(sig.times, jump - f.threshold)


def _rob(f: Formula, sig: Signal, truncate: bool) -> PLSignal:
    if isinstance(f, TrueF):
        return PLSignal(sig.times, np.full(sig.times.shape, np.inf))
    if isinstance(f, Atom):
        return eval_expr(f.expr, sig)
    if isinstance(f, Step):
        return _step_signal(f, sig)
    if isinstance(f, Not):
        return -_rob(f.arg, sig, truncate)
    if isinstance(f, And):
        return pl_min(_rob(f.left, sig, truncate), _rob(f.right, sig, truncate))
    if isinstance(f, Or):
        return pl_max(_rob(f.left, sig, truncate), _rob(f.right, sig, truncate))
    try:
        if isinstance(f, Always):
            return window_min(_rob(f.arg, sig, truncate), f.interval.lo, f.interval.hi, truncate)
        if isinstance(f, Eventually):
            return window_max(_rob(f.arg, sig, truncate), f.interval.lo, f.interval.hi, truncate)
        if isinstance(f, Until):
            return _until(_rob(f.left, sig, truncate), _rob(f.right, sig, truncate),
                          f.interval.lo, f.interval.hi, truncate)
    except SignalError as e:
        if "horizon" in str(e):
            raise HorizonError(str(e)) from None
        raise
    raise TypeError(f)


def _until(phi: PLSignal, psi: PLSignal, a: float, b: float, truncate: bool) -> PLSignal:
    """sup_{t' in [t+a, t+b]} min(psi(t'), inf_{[t, t')} phi).

    Uses phi U_[a,b] psi = alw_[0,a] phi  and  (phi U_[0,b-a] psi) shifted by a,
    and phi U_[0,c] psi = (phi U psi) and ev_[0,c] psi.
    """
    bounded = pl_min(until_unbounded(phi, psi), window_max(psi, 0.0, b - a, truncate))
    if a == 0.0:
        # t' = t itself is allowed: inf over the empty set [t, t)
        return pl_max(psi.restrict(psi.start, bounded.end), bounded)
    inner = bounded.shift(a)
    if inner.end < phi.start:
        raise HorizonError("formula horizon exceeds the signal span")
    inner = inner.restrict(max(inner.start, phi.start), inner.end)
    return pl_min(window_min(phi, 0.0, a, truncate), inner)


def robustness_signal(f: Formula, sig: Signal, truncate: bool = False) -> PLSignal:
    missing = channels_of(f) - set(sig.channels)
    if missing:
        raise MissingChannelError(", ".join(sorted(missing)))
    return _rob(f, sig, truncate)


def robustness(f: Formula, sig: Signal, t: float = 0.0, truncate: bool = False) -> float:
    """Robustness of ``f`` on ``sig`` at time ``t``.

    Raises :class:`HorizonError` when a bounded window reaches past the end of
    the signal, unless ``truncate`` is set (windows are then clipped).
    """
    r = robustness_signal(f, sig, truncate)
    if not r.start <= t <= r.end:
        if sig.start <= t <= sig.end:
            raise HorizonError(f"formula horizon at t={t} exceeds the signal span")
        raise SignalError(f"t={t} outside the signal domain [{sig.start}, {sig.end}]")
    return float(r.at(t))


# -- boolean semantics on interval sets -------------------------------------

Intervals = list[tuple[float, float]]


def _normalize(iv: Intervals) -> Intervals:
    iv = sorted((a, b) for a, b in iv if a <= b)
    out: Intervals = []
    for a, b in iv:
        if out and a <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], b))
        else:
            out.append((a, b))
    return out


def _complement(iv: Intervals, lo: float, hi: float) -> Intervals:
    out = []
    cur = lo
    for a, b in iv:
        if a > cur:
            out.append((cur, a))
        cur = max(cur, b)
    if cur < hi:
        out.append((cur, hi))
    return out


def _intersect(x: Intervals, y: Intervals) -> Intervals:
    out = []
    i = j = 0
    while i < len(x) and j < len(y):
        a = max(x[i][0], y[j][0])
        b = min(x[i][1], y[j][1])
        if a <= b:
            out.append((a, b))
        if x[i][1] < y[j][1]:
            i += 1
        else:
            j += 1
    return out


def _clip(iv: Intervals, lo: float, hi: float) -> Intervals:
    return _intersect(iv, [(lo, hi)]) if lo <= hi else []


class _BoolSet:
    """Satisfaction set of a subformula on its domain [lo, hi]."""

    __slots__ = ("iv", "lo", "hi")

    def __init__(self, iv: Intervals, lo: float, hi: float):
        self.iv = _clip(_normalize(iv), lo, hi)
        self.lo = lo
        self.hi = hi


def _sat_set(f: PLSignal) -> Intervals:
    """Closed intervals where the piecewise-linear f is >= 0."""
    t, v = f.t, f.v
    out = []
    start = t[0] if v[0] >= 0 else None
    for k in range(len(t) - 1):
        t0, t1, v0, v1 = t[k], t[k + 1], v[k], v[k + 1]
        # invariant: start is None exactly when v0 < 0
        if start is None and v1 >= 0:
            start = t0 + (t1 - t0) * v0 / (v0 - v1)
        elif start is not None and v1 < 0:
            out.append((start, t0 + (t1 - t0) * v0 / (v0 - v1)))
            start = None
    if start is not None:
        out.append((start, t[-1]))
    return out


def _window_end(hi: float, b: float, truncate: bool) -> float:
    return hi if (truncate or math.isinf(b)) else hi - b


def _bool(f: Formula, sig: Signal, truncate: bool) -> _BoolSet:
    lo, hi = sig.start, sig.end
    if isinstance(f, TrueF):
        return _BoolSet([(lo, hi)], lo, hi)
    if isinstance(f, Atom):
        return _BoolSet(_sat_set(eval_expr(f.expr, sig)), lo, hi)
    if isinstance(f, Step):
        return _BoolSet(_sat_set(_step_signal(f, sig)), lo, hi)
    if isinstance(f, Not):
        s = _bool(f.arg, sig, truncate)
        return _BoolSet(_complement(s.iv, s.lo, s.hi), s.lo, s.hi)
    if isinstance(f, And | Or):
        x, y = _bool(f.left, sig, truncate), _bool(f.right, sig, truncate)
        dlo, dhi = max(x.lo, y.lo), min(x.hi, y.hi)
        xi, yi = _clip(x.iv, dlo, dhi), _clip(y.iv, dlo, dhi)
        iv = _intersect(xi, yi) if isinstance(f, And) else xi + yi
        return _BoolSet(iv, dlo, dhi)
    a, b = f.interval.lo, f.interval.hi
    if isinstance(f, Always | Eventually):
        s = _bool(f.arg, sig, truncate)
        dhi = s.hi - a if (truncate or math.isinf(b)) else s.hi - b
        if dhi < s.lo:
            raise HorizonError("formula horizon exceeds the signal span")
        if isinstance(f, Eventually):
            # some t' in [t+a, min(t+b, end)] lies in an interval [l, u]
            iv = [(l - b, u - a) for l, u in s.iv]
        else:
            # the whole window lies inside one interval [l, u]
            iv = []
            for l, u in s.iv:
                if math.isinf(b) or truncate:
                    if u >= s.hi:
                        iv.append((l - a, u - a))
                    if not math.isinf(b):
                        iv.append((l - a, u - b))
                else:
                    iv.append((l - a, u - b))
        return _BoolSet(iv, s.lo, dhi)
    if isinstance(f, Until):
        x, y = _bool(f.left, sig, truncate), _bool(f.right, sig, truncate)
        dlo, dhi0 = max(x.lo, y.lo), min(x.hi, y.hi)
        dhi = dhi0 - a if (truncate or math.isinf(b)) else dhi0 - b
        if dhi < dlo:
            raise HorizonError("formula horizon exceeds the signal span")
        psi = _clip(y.iv, dlo, dhi0)
        iv = list(psi) if a == 0.0 else []
        # t in [l, u] with (t, t') inside [l, u] and t' in psi, t' in [t+a, t+b]
        for l, u in _clip(x.iv, dlo, dhi0):
            for c, d in _clip(psi, l, u):
                iv.append((max(l, c - b), min(u, d - a)))
        return _BoolSet(iv, dlo, dhi)
    raise TypeError(f)


def satisfaction_set(f: Formula, sig: Signal, truncate: bool = False) -> tuple[Intervals, float, float]:
    missing = channels_of(f) - set(sig.channels)
    if missing:
        raise MissingChannelError(", ".join(sorted(missing)))
    s = _bool(f, sig, truncate)
    return s.iv, s.lo, s.hi


def eval_bool(f: Formula, sig: Signal, t: float = 0.0, truncate: bool = False) -> bool:
    """Boolean satisfaction of ``f`` by ``sig`` at time ``t``."""
    iv, lo, hi = satisfaction_set(f, sig, truncate)
    if not lo <= t <= hi:
        if sig.start <= t <= sig.end:
            raise HorizonError(f"formula horizon at t={t} exceeds the signal span")
        raise SignalError(f"t={t} outside the signal domain [{sig.start}, {sig.end}]")
    return any(a <= t <= b for a, b in iv)
