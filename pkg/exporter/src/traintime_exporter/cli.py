"""Command-line entry points: export-graph, record-casts, profile-ops.

Each writes one of the three file formats the predictor package loads.
Summaries go to stdout, diagnostics to stderr; exit 0 on success, 1 on any
input or runtime error.
"""

import argparse
import sys

from .casts import export_casts
from .errors import ExportError
from .model_zoo import build_model, example_input
from .profiling import profile_ops
from .trace import export_graph


def _add_model_flags(parser):
    parser.add_argument("--model", default="toy-transformer", help="zoo model name")
    parser.add_argument("--layers", type=int, default=2, help="block count (= pipeline layers)")
    parser.add_argument("--d-model", type=int, default=64, dest="d_model")
    parser.add_argument("--d-ff", type=int, default=128, dest="d_ff")
    parser.add_argument("--batch", type=int, default=8, help="traced batch size")
    parser.add_argument("--seq", type=int, default=16, help="sequence length")


def _build(args):
    model = build_model(args.model, args.layers, args.d_model, args.d_ff)
    return model, example_input(model, args.batch, args.seq)


def _run(fn) -> int:
    try:
        fn()
    except ExportError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def export_graph_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="export-graph", description="trace a model into a graph JSON file"
    )
    _add_model_flags(parser)
    parser.add_argument("--out", required=True)
    args = parser.parse_args(argv)

    def go():
        model, batch = _build(args)
        graph = export_graph(model, batch, args.model, args.out)
        ops = sum(len(layer) for layer in graph["layers"])
        print(f"wrote {args.out}: {len(graph['layers'])} layers, {ops} operators")

    return _run(go)


def record_casts_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="record-casts", description="record autocast behavior into a cast-rule file"
    )
    _add_model_flags(parser)
    parser.add_argument("--precision", default="MIXED", help="must be MIXED; anything else errors")
    parser.add_argument("--device-type", default="cpu", dest="device_type")
    parser.add_argument("--out", required=True)
    args = parser.parse_args(argv)

    def go():
        model, batch = _build(args)
        rules, notes = export_casts(
            model, batch, args.out, setting=args.precision, device_type=args.device_type
        )
        for note in notes:
            print(f"warning: {note}", file=sys.stderr)
        print(f"wrote {args.out}: low={rules['low']} high={rules['high']}")

    return _run(go)


def profile_ops_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="profile-ops", description="time graph operators into a latency DB file"
    )
    parser.add_argument("--graph", required=True)
    parser.add_argument(
        "--precision", action="append", choices=["FP32", "FP16"],
        help="repeatable; default FP32 only",
    )
    parser.add_argument("--reps", type=int, default=20, help="timed repetitions per op")
    parser.add_argument("--tp", type=int, default=1, help="profile weight shapes sliced this many ways")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True)
    args = parser.parse_args(argv)

    def go():
        summary = profile_ops(
            args.graph, set(args.precision or ["FP32"]), args.reps, args.out,
            tp=args.tp, device=args.device, seed=args.seed,
        )
        for key, reason in summary.failures:
            print(f"skipped {key}: {reason}", file=sys.stderr)
        for note in summary.warnings:
            print(f"warning: {note}", file=sys.stderr)
        print(
            f"wrote {args.out}: {summary.written} records on {summary.device}"
            f" ({len(summary.failures)} skipped)"
        )

    return _run(go)
