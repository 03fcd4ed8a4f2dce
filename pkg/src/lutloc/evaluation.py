"""EXAM-style scores: how far down a ranking the first faulty entry sits."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .lutmap import EntryIndex, LookupMap
from .rankers import RankingResult

__all__ = ["VARIANTS", "buggy_set", "load_buggy", "abs_exam_score", "exam_score", "worst_abs_exam"]

VARIANTS = ("order", "best", "worst")


def buggy_set(entries: Iterable[Sequence[int]], shape: Sequence[int]) -> frozenset[EntryIndex]:
    """Validate ground-truth faulty entries against a map shape."""
    out = set()
    for e in entries:
        e = tuple(int(i) for i in e)
        if len(e) != len(shape) or any(not 0 <= i < n for i, n in zip(e, shape)):
            raise ValueError(f"buggy entry {e} is not in a map of shape {tuple(shape)}")
        out.add(e)
    if not out:
        raise ValueError("the buggy set is empty")
    return frozenset(out)


def load_buggy(path, shape: Sequence[int]) -> frozenset[EntryIndex]:
    return buggy_set(json.loads(Path(path).read_text()), shape)


def abs_exam_score(ranking: RankingResult, buggy: Iterable[Sequence[int]],
                   variant: str = "order") -> int:
    """Number of entries examined, in rank order, up to the first buggy one.

    ``variant="order"`` follows the ranking's own tie order. ``"best"`` and
    ``"worst"`` place the first buggy entry at the front or back of its group
    of tied scores.
    """
    bset = buggy_set(buggy, ranking.shape)
    if variant == "order":
        return next(k for k, e in enumerate(ranking.order, start=1) if e in bset)
    if variant not in VARIANTS:
        raise ValueError(f"unknown EXAM variant {variant!r}")
    top = max(ranking.score(e) for e in bset)
    scores = ranking.scores
    above = int(np.count_nonzero(scores > top))
    if variant == "best":
        return above + 1
    tied_clean = int(np.count_nonzero(scores == top)) - sum(ranking.score(e) == top for e in bset)
    return above + tied_clean + 1


def exam_score(ranking: RankingResult, buggy: Iterable[Sequence[int]],
               lut: LookupMap | None = None, variant: str = "order") -> float:
    """absEXAM as a percentage of the map size."""
    size = lut.size if lut is not None else int(np.prod(ranking.shape))
    return abs_exam_score(ranking, buggy, variant) / size * 100.0


def worst_abs_exam(rankings: Iterable[RankingResult], buggy, variant: str = "order") -> int:
    """Largest absEXAM over rankings obtained from different requirements."""
    return max(abs_exam_score(r, buggy, variant) for r in rankings)
