"""Localizing faulty look-up map entries from scored executions."""

from .evaluation import abs_exam_score, exam_score, worst_abs_exam
from .lutmap import DistanceMode, GridAxis, LookupMap, MapError, QueryRecord, seed_fault
from .rankers import (
    BuildingBlocks, RankingResult, ScoreShift, building_blocks, dstar, kulczynski, rank,
    tarantula,
)
from .spectra import SpectraResult, accessed_sets, ball, intersection_union_suspicious, union_suspicious
from .traces import AffectConfig, TraceRun, fraffect, maffect, raffect

__all__ = [
    "AffectConfig", "BuildingBlocks", "DistanceMode", "GridAxis", "LookupMap", "MapError",
    "QueryRecord", "RankingResult", "ScoreShift", "SpectraResult", "TraceRun", "abs_exam_score",
    "accessed_sets", "ball", "building_blocks", "dstar", "exam_score", "fraffect",
    "intersection_union_suspicious", "kulczynski", "maffect", "raffect", "rank", "seed_fault",
    "tarantula", "union_suspicious", "worst_abs_exam",
]
