"""Command-line entry point.

Subcommands: predict, sweep, mape, validate, show-partition. Machine
output goes to stdout, diagnostics to stderr. Exit codes: 0 success,
1 input error, 2 internal failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

from .errors import ParseError, TraintimeError
from .evaluate import (
    build_report,
    format_report_table,
    load_measurements,
    report_to_json,
    sweep,
)
from .graph import load_graph
from .latency import FallbackPolicy, load_db
from .partition import (
    config_from_json,
    config_to_json,
    load_config,
    partition,
    stage_bounds,
)
from .precision import assign_precision, default_cast_rules, load_cast_rules
from .predictor import format_prediction_table, predict, prediction_to_json

RULES_ENV_VAR = "PRECAST_RULES"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on bad flags; we reserve 2 for internal
    # failures, so route usage problems through the normal error path
    def error(self, message):
        raise _UsageError(message)


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _load_rules(args):
    path = getattr(args, "rules", None) or os.environ.get(RULES_ENV_VAR)
    if path:
        return load_cast_rules(path), path
    return default_cast_rules(), "builtin"


def _emit(text: str, out_path: str | None) -> None:
    sys.stdout.write(text + "\n")
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


def _load_sweep_configs(path: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(raw, list) or not raw:
        raise ParseError(f"{path}: expected a non-empty JSON array of config objects")
    return [config_from_json(obj, where=f"{path}: entry {i}") for i, obj in enumerate(raw)]


def _cmd_predict(args) -> int:
    graph = load_graph(args.graph)
    config = load_config(args.config)
    db = load_db(args.db)
    rules, rules_origin = _load_rules(args)
    policy = FallbackPolicy(args.fallback)
    pred = predict(graph, config, db, rules, policy)
    if args.table:
        _emit(format_prediction_table(pred, config), args.out)
        return 0
    payload = {
        "prediction": prediction_to_json(pred),
        "config": config_to_json(config),
        "inputs": {
            "graph": {"path": args.graph, "sha256": _sha256(args.graph)},
            "dbs": [{"path": p, "sha256": _sha256(p)} for p in args.db],
            "rules": rules_origin,
        },
    }
    _emit(_dump(payload), args.out)
    return 0


def _cmd_sweep(args) -> int:
    graph = load_graph(args.graph)
    configs = _load_sweep_configs(args.configs)
    db = load_db(args.db)
    rules, _ = _load_rules(args)
    policy = FallbackPolicy(args.fallback)
    entries = sweep(graph, configs, db, rules, policy)
    if args.table:
        header = (
            f"{'dp':>3} {'tp':>3} {'pp':>3} {'precision':<9} {'total_ms':>10} "
            f"{'comp_ms':>10} {'dp_ms':>8} {'tp_ms':>8} {'pp_ms':>8}"
        )
        lines = [header, "-" * len(header)]
        for e in entries:
            c = e.config
            if e.prediction is None:
                lines.append(
                    f"{c.dp:>3} {c.tp:>3} {c.pp:>3} {c.precision.value:<9} error: {e.error}"
                )
            else:
                p = e.prediction
                lines.append(
                    f"{c.dp:>3} {c.tp:>3} {c.pp:>3} {c.precision.value:<9} {p.total_ms:>10.3f} "
                    f"{p.comp_ms:>10.3f} {p.dp_ms:>8.3f} {p.tp_ms:>8.3f} {p.pp_ms:>8.3f}"
                )
        _emit("\n".join(lines), args.out)
        return 0
    rows = []
    for e in entries:
        row = {"config": config_to_json(e.config)}
        if e.prediction is None:
            row["error"] = e.error
        else:
            row["prediction"] = prediction_to_json(e.prediction)
        rows.append(row)
    _emit(_dump({"rows": rows}), args.out)
    return 0


def _cmd_mape(args) -> int:
    try:
        with open(args.predictions, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{args.predictions}: not valid JSON ({exc})") from exc
    if not isinstance(raw, dict) or not isinstance(raw.get("rows"), list):
        raise ParseError(f"{args.predictions}: expected an object with a rows array")
    pairs = []
    for i, row in enumerate(raw["rows"]):
        if not isinstance(row, dict) or "config" not in row:
            raise ParseError(f"{args.predictions}: row {i} missing config")
        if "prediction" not in row:
            continue  # failed sweep cells carry errors, not predictions
        config = config_from_json(row["config"], where=f"{args.predictions}: row {i}")
        total = row["prediction"].get("total_ms")
        if not isinstance(total, (int, float)) or isinstance(total, bool):
            raise ParseError(f"{args.predictions}: row {i}: prediction.total_ms must be a number")
        pairs.append((config, float(total)))
    measurements = load_measurements(args.measurements)
    report = build_report(pairs, measurements)
    if args.table:
        _emit(format_report_table(report), args.out)
    else:
        _emit(_dump(report_to_json(report)), args.out)
    return 0


def _cmd_validate(args) -> int:
    graph = load_graph(args.graph)
    op_count = sum(1 for _ in graph.operators())
    lines = [
        f"graph ok: model={graph.model_name} layers={graph.layer_count} "
        f"operators={op_count} traced_batch={graph.global_batch_size}"
    ]
    if args.config:
        config = load_config(args.config)
        bounds = stage_bounds(graph, config)
        sizes = [end - start for start, end in bounds]
        subgraphs = partition(graph, config)
        lines.append(
            f"config ok: dp={config.dp} tp={config.tp} pp={config.pp} "
            f"precision={config.precision.value} gpus={config.gpu_count}"
        )
        lines.append(f"stage sizes: {sizes}")
        lines.append(f"partition ok: {len(subgraphs)} subgraphs")
    _emit("\n".join(lines), args.out)
    return 0


def _cmd_show_partition(args) -> int:
    graph = load_graph(args.graph)
    config = load_config(args.config)
    rules, _ = _load_rules(args)
    typed = assign_precision(graph, config.precision, rules)
    subgraphs = partition(typed, config)
    bounds = stage_bounds(graph, config)
    if args.json:
        rows = []
        for sg in subgraphs:
            start, end = bounds[sg.pp_stage]
            rows.append(
                {
                    "pp_stage": sg.pp_stage,
                    "dp_rank": sg.dp_rank,
                    "tp_rank": sg.tp_rank,
                    "layer_start": start,
                    "layer_end": end,
                    "op_count": sum(1 for _ in sg.operators()),
                    "sliced_weights": sorted(sg.sliced_weight_names),
                }
            )
        _emit(_dump({"model": graph.model_name, "gpus": config.gpu_count, "subgraphs": rows}), args.out)
        return 0
    lines = [
        f"model={graph.model_name} layers={graph.layer_count} "
        f"gpus={config.gpu_count} (dp={config.dp} tp={config.tp} pp={config.pp})"
    ]
    for sg in subgraphs:
        start, end = bounds[sg.pp_stage]
        ops = sum(1 for _ in sg.operators())
        lines.append(
            f"stage {sg.pp_stage} dp {sg.dp_rank} tp {sg.tp_rank}: "
            f"layers {start}-{end - 1} ops {ops} sliced_weights {len(sg.sliced_weight_names)}"
        )
    _emit("\n".join(lines), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="traintime", description="Distributed-training iteration-time predictor")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_output_flags(p, default_json=True):
        group = p.add_mutually_exclusive_group()
        if default_json:
            group.add_argument("--json", action="store_true", default=True, help="JSON output (default)")
            group.add_argument("--table", action="store_true", help="aligned text table instead of JSON")
        else:
            group.add_argument("--json", action="store_true", help="JSON output instead of text")
        p.add_argument("--out", help="also write output to this file")

    p = sub.add_parser("predict", help="predict iteration time for one job config")
    p.add_argument("--graph", required=True, help="graph-JSON file")
    p.add_argument("--config", required=True, help="job-config JSON file")
    p.add_argument("--db", required=True, action="append", help="latency DB file (repeatable)")
    p.add_argument("--rules", help=f"cast-rule file (default: ${RULES_ENV_VAR} or builtin)")
    p.add_argument("--fallback", choices=["strict", "interpolate"], default="strict")
    add_output_flags(p)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("sweep", help="predict across a list of job configs")
    p.add_argument("--graph", required=True)
    p.add_argument("--configs", required=True, help="JSON array of config objects")
    p.add_argument("--db", required=True, action="append")
    p.add_argument("--rules")
    p.add_argument("--fallback", choices=["strict", "interpolate"], default="strict")
    add_output_flags(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("mape", help="compare sweep predictions against measurements")
    p.add_argument("--predictions", required=True, help="sweep --json output file")
    p.add_argument("--measurements", required=True, help="JSON array of {config, measured_ms, source}")
    add_output_flags(p)
    p.set_defaults(func=_cmd_mape)

    p = sub.add_parser("validate", help="check a graph file, optionally against a config")
    p.add_argument("--graph", required=True)
    p.add_argument("--config")
    p.add_argument("--out", help="also write output to this file")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("show-partition", help="per-GPU subgraph summary")
    p.add_argument("--graph", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--rules")
    add_output_flags(p, default_json=False)
    p.set_defaults(func=_cmd_show_partition)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except TraintimeError as exc:
        phase = f" phase={exc.phase}" if exc.phase else ""
        print(f"error{phase}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except AssertionError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
