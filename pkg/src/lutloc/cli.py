"""Command-line entry point: ``lutloc <subcommand> ...``.

Exit status is 0 on success, 1 for usage errors and 2 for bad input data.
Every output file is written to a temporary file first and renamed into
place.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

from . import evaluation, heatmap, lutmap, rankers, simharness, spectra, traces
from .stl import FormulaSyntaxError, SignalError, load_formula, parse_formula

EXIT_USAGE = 1
EXIT_DATA = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def write_atomic(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(args, text: str) -> None:
    if args.out:
        write_atomic(args.out, text)
    else:
        sys.stdout.write(text)


def _radius(s: str) -> float:
    r = float(s)
    if not r >= 0:
        raise argparse.ArgumentTypeError("radius must be >= 0")
    return r


def _slice(s: str) -> tuple[int, int]:
    try:
        ax, idx = s.split("=")
        return int(ax), int(idx)
    except ValueError:
        raise argparse.ArgumentTypeError("expected AXIS=INDEX") from None


def _affect_args(p):
    p.add_argument("--mode", choices=traces.MODES, default="basic")
    p.add_argument("--lambda", dest="lam", type=float, default=0.5)
    p.add_argument("--radius", type=_radius, default=2.0)
    p.add_argument("--distance", choices=[m.value for m in lutmap.DistanceMode],
                   default="grid-scaled")
    p.add_argument("--agg", choices=("max", "sum"), default="max")


def _heuristic_args(p):
    p.add_argument("--heuristic", choices=sorted(rankers.HEURISTICS), default="dstar")
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--neg-shift", type=float, default=0.0)
    p.add_argument("--pos-shift", type=float, default=0.0)


def _affect(args) -> traces.AffectConfig:
    return traces.AffectConfig(mode=args.mode, lam=args.lam, radius=args.radius,
                               aggregation=args.agg, distance_mode=args.distance)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lutloc", description="Localize faulty look-up map entries from scored runs.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="simulate a toy model and write traces (JSONL)")
    s.add_argument("--config", help="experiment config (JSON)")
    s.add_argument("--model", choices=("toy1", "toy2"))
    s.add_argument("--runs", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--map", help="map file to simulate with instead of the built-in faulty map")
    s.add_argument("--map-out", help="also write the map that was used")
    s.add_argument("--out")

    s = sub.add_parser("score", help="attach STL robustness scores to traces")
    s.add_argument("--traces", required=True)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--spec", help="file holding one STL formula")
    g.add_argument("--formula", help="STL formula text")
    s.add_argument("--truncate", action="store_true", help="clip windows at the end of the signal")
    s.add_argument("--out")

    s = sub.add_parser("rank", help="rank map entries with a similarity coefficient")
    s.add_argument("--map", required=True)
    s.add_argument("--traces", required=True)
    _heuristic_args(s)
    _affect_args(s)
    s.add_argument("--out")

    s = sub.add_parser("spectra", help="union / intersection-union suspicious sets")
    s.add_argument("--map", required=True)
    s.add_argument("--traces", required=True)
    s.add_argument("--radius", type=_radius, default=0.0)
    s.add_argument("--distance", choices=[m.value for m in lutmap.DistanceMode],
                   default="grid-scaled")
    s.add_argument("--out")

    s = sub.add_parser("exam", help="EXAM and absEXAM of rankings against known faulty entries")
    s.add_argument("--ranking", required=True, action="append",
                   help="ranking JSON; repeat to report the worst over several")
    s.add_argument("--buggy", required=True, help="JSON array of entry indices")
    s.add_argument("--variant", choices=evaluation.VARIANTS, default="order")

    s = sub.add_parser("heatmap", help="write a ranking as CSV (and optionally SVG)")
    s.add_argument("--map", required=True)
    s.add_argument("--traces", required=True)
    s.add_argument("--ranking", required=True)
    s.add_argument("--out", required=True, help="CSV path")
    s.add_argument("--svg")
    s.add_argument("--slice", type=_slice, action="append", default=[],
                   help="fix an axis of a map with more than two dimensions")

    s = sub.add_parser("paramgrid", help="rank cells of a parameter grid from scored samples")
    s.add_argument("--grid", required=True, help="JSON with lows, highs, counts, samples")
    _heuristic_args(s)
    _affect_args(s)
    s.add_argument("--desirable", action="store_true", help="search for high-score regions")
    s.add_argument("--refine-out", help="write the sub-box around the top grid point")
    s.add_argument("--out")
    return p


# -- commands ----------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = {}
    if args.config:
        cfg = json.loads(Path(args.config).read_text())
    for key, val in (("model", args.model), ("n_runs", args.runs), ("seed", args.seed)):
        if val is not None:
            cfg[key] = val
    exp = simharness.ExperimentConfig.from_dict(cfg)
    if args.map:
        lut = lutmap.load_map(args.map)
    else:
        base = simharness.build_toy1_map() if exp.model == "toy1" else simharness.build_toy2_map()
        if exp.faults is None:
            lut = (lutmap.seed_fault(base, [((19,), 0.8)]) if exp.model == "toy1"
                   else simharness.seed_toy2_bug(base))
        else:
            lut = lutmap.seed_fault(base, exp.faults)
    runs = simharness.simulate_runs(exp, lut)
    if args.map_out:
        write_atomic(args.map_out, lutmap.dump_map(lut) + "\n")
    _emit(args, traces.dump_traces(runs))
    return 0


def cmd_score(args) -> int:
    runs = traces.load_traces(args.traces)
    f = load_formula(args.spec) if args.spec else parse_formula(args.formula)
    _emit(args, traces.dump_traces(simharness.score_runs(runs, f, args.truncate)))
    return 0


def _shift(args) -> rankers.ScoreShift:
    return rankers.ScoreShift(args.neg_shift, args.pos_shift)


def cmd_rank(args) -> int:
    lut = lutmap.load_map(args.map)
    runs = traces.load_traces(args.traces)
    res = rankers.rank(runs, lut, args.heuristic, _affect(args), _shift(args), args.gamma)
    _emit(args, rankers.dump_ranking(res))
    return 0


def cmd_spectra(args) -> int:
    lut = lutmap.load_map(args.map)
    runs = traces.load_traces(args.traces)
    res = spectra.union_suspicious(runs, lut, args.radius, args.distance)
    _emit(args, spectra.dump_spectra(res))
    return 0


def cmd_exam(args) -> int:
    rankings = [rankers.load_ranking(p) for p in args.ranking]
    shapes = {r.shape for r in rankings}
    if len(shapes) != 1:
        raise ValueError("rankings are over maps of different shapes")
    buggy = evaluation.load_buggy(args.buggy, rankings[0].shape)
    worst = max(rankings, key=lambda r: evaluation.abs_exam_score(r, buggy, args.variant))
    n = evaluation.abs_exam_score(worst, buggy, args.variant)
    pct = evaluation.exam_score(worst, buggy, variant=args.variant)
    print(f"EXAM: {pct:.6g}")
    print(f"absEXAM: {n}")
    return 0


def cmd_heatmap(args) -> int:
    lut = lutmap.load_map(args.map)
    runs = traces.load_traces(args.traces)
    res = rankers.load_ranking(args.ranking)
    csv_text, svg_text = heatmap.emit_heatmap(res, runs, lut, dict(args.slice),
                                              title=res.heuristic)
    write_atomic(args.out, csv_text)
    if args.svg:
        write_atomic(args.svg, svg_text)
    return 0


def cmd_paramgrid(args) -> int:
    spec = simharness.ParamGridSpec.from_dict(json.loads(Path(args.grid).read_text()))
    res, _ = simharness.param_grid_rank(spec, args.heuristic, _affect(args), args.desirable,
                                        args.gamma, _shift(args))
    if args.refine_out:
        sub = simharness.refine_box(spec, res.order[0])
        write_atomic(args.refine_out, json.dumps(sub.to_dict(), indent=1) + "\n")
    _emit(args, rankers.dump_ranking(res))
    return 0


COMMANDS = {
    "simulate": cmd_simulate, "score": cmd_score, "rank": cmd_rank, "spectra": cmd_spectra,
    "exam": cmd_exam, "heatmap": cmd_heatmap, "paramgrid": cmd_paramgrid,
}

DATA_ERRORS = (ValueError, KeyError, OSError, json.JSONDecodeError, lutmap.MapError,
               traces.TraceError, SignalError, FormulaSyntaxError)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except DATA_ERRORS as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"lutloc {args.command}: error: {msg}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
