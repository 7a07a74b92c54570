"""Evaluation harness: reference predictor, config sweeps, MAPE.

oracle_predict re-derives the whole prediction by the most naive route
available so the fast path in predictor.py can be checked against it
exactly. It deliberately shares no partitioning, precision-assignment, or
aggregation code with predictor.py; the only shared pieces are data types,
the latency lookup (the data source itself), and the bytes-per-element
table.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import (
    ConfigError,
    DegreeError,
    EmptyInput,
    IndivisibleDim,
    NonPositiveMeasurement,
    ParseError,
    TraintimeError,
)
from .graph import ComputationGraph, Precision
from .latency import FallbackPolicy, LatencyDb, LatencyKey, lookup
from .partition import JobConfig, config_from_json, config_to_json
from .precision import CastRuleTable, PrecisionSetting
from .predictor import Prediction, predict


def oracle_predict(
    graph: ComputationGraph,
    config: JobConfig,
    db: LatencyDb,
    rules: CastRuleTable,
    policy: FallbackPolicy = FallbackPolicy.STRICT,
) -> Prediction:
    """Brute-force reference: materialize every GPU's subgraph and recount everything.

    Matches predict() bit for bit: the accumulation order (operators in
    layer order, stages in pipeline order) and the ms conversions are the
    same arithmetic, arrived at independently.
    """
    n_layers = len(graph.layers)
    if config.pp > n_layers:
        raise DegreeError(f"pp degree {config.pp} exceeds layer count {n_layers}")
    if config.batch_size % config.dp != 0:
        raise DegreeError(f"batch_size {config.batch_size} not divisible by dp={config.dp}")
    per_gpu = config.batch_size // config.dp
    traced = graph.global_batch_size

    # per-node precision, one brute-force pass over the rule table
    prec_of = {}
    for layer in graph.layers:
        for node in layer:
            if config.precision is PrecisionSetting.FP32:
                p = Precision.FP32
            elif config.precision is PrecisionSetting.FP16:
                p = Precision.FP16
            elif node.kind in rules.low_kinds:
                p = Precision.FP16
            elif node.kind in rules.high_kinds:
                p = Precision.FP32
            else:
                p = rules.default_rule
            prec_of[node.id] = p

    # stage ownership by repeatedly ceil-splitting whatever layers remain
    stage_layers = []
    remaining = list(graph.layers)
    for s in range(config.pp):
        take = -(-len(remaining) // (config.pp - s))
        stage_layers.append(remaining[:take])
        remaining = remaining[take:]
    assert not remaining

    # every GPU's operator list: (node, input shapes scaled, weight rows)
    # weight row = (shape after slicing, trainable, was_sliced)
    all_subgraphs = []
    for s in range(config.pp):
        for d_r in range(config.dp):
            for t_r in range(config.tp):
                ops = []
                for layer in stage_layers[s]:
                    for node in layer:
                        in_shapes = []
                        for spec in node.inputs:
                            shape = list(spec.shape)
                            if per_gpu != traced:
                                scaled = shape[0] * per_gpu
                                if scaled % traced != 0:
                                    raise ConfigError(
                                        f"leading dim {shape[0]} cannot scale from traced batch "
                                        f"{traced} to per-GPU batch {per_gpu}"
                                    )
                                shape[0] = scaled // traced
                            in_shapes.append(tuple(shape))
                        w_rows = []
                        for w in node.weights:
                            shape = list(w.shape)
                            sliced = (
                                config.tp > 1 and w.slice_dim is not None and w.trainable
                            )
                            if sliced:
                                if shape[w.slice_dim] % config.tp != 0:
                                    raise IndivisibleDim(
                                        f"weight {w.name!r}: dimension {w.slice_dim} of size "
                                        f"{shape[w.slice_dim]} not divisible by tp={config.tp}"
                                    )
                                shape[w.slice_dim] = shape[w.slice_dim] // config.tp
                            w_rows.append((tuple(shape), w.trainable, sliced))
                        ops.append((node, tuple(in_shapes), tuple(w_rows)))
                all_subgraphs.append((d_r, t_r, s, ops))

    # compute: walk every subgraph; stage value taken from the (0,0) replica
    per_stage = []
    interp = 0
    comp_ms = 0.0
    for s in range(config.pp):
        rep_ms = None
        for d_r, t_r, stage, ops in all_subgraphs:
            if stage != s:
                continue
            stage_us = 0.0
            for node, in_shapes, w_rows in ops:
                shapes = in_shapes + tuple(shape for shape, _, _ in w_rows)
                key = LatencyKey(kind=node.kind, shapes=shapes, precision=prec_of[node.id])
                rec, tag = lookup(db, key, policy)
                if d_r == 0 and t_r == 0 and tag == "interpolated":
                    interp += 1
                stage_us += rec.fwd_us + rec.bwd_us
            if d_r == 0 and t_r == 0:
                rep_ms = stage_us / 1000.0
        per_stage.append(rep_ms)
        comp_ms += rep_ms

    # volumes by explicit recount
    v_dp = 0
    if config.dp > 1:
        for d_r, t_r, stage, ops in all_subgraphs:
            if d_r != 0:
                continue
            for node, _, w_rows in ops:
                for shape, trainable, _ in w_rows:
                    if trainable:
                        count = 1
                        for dim in shape:
                            count *= dim
                        v_dp += count * prec_of[node.id].bytes_per_element
    v_tp = 0
    if config.tp > 1:
        for d_r, t_r, stage, ops in all_subgraphs:
            if d_r != 0 or t_r != 0:
                continue
            for node, _, w_rows in ops:
                for shape, _, sliced in w_rows:
                    if sliced:
                        count = 1
                        for dim in shape:
                            count *= dim
                        v_tp += count * prec_of[node.id].bytes_per_element

    dp_ms = (v_dp / config.link_bandwidth) * 1000.0
    tp_ms = (v_tp / config.link_bandwidth) * 1000.0
    pp_ms = comp_ms * (config.pp - 1)
    total_ms = comp_ms + dp_ms + tp_ms + pp_ms
    return Prediction(
        total_ms=total_ms,
        comp_ms=comp_ms,
        dp_ms=dp_ms,
        tp_ms=tp_ms,
        pp_ms=pp_ms,
        v_dp_bytes=v_dp,
        v_tp_bytes=v_tp,
        per_stage_comp_ms=tuple(per_stage),
        interpolated_lookup_count=interp,
    )


def mape(rows: list[tuple[float, float]]) -> float:
    """Mean absolute percentage error over (predicted_ms, measured_ms) pairs."""
    if not rows:
        raise EmptyInput("no rows to average")
    total = 0.0
    for predicted, measured in rows:
        if not measured > 0:
            raise NonPositiveMeasurement(f"measured_ms must be > 0, got {measured!r}")
        total += abs(predicted - measured) / measured * 100.0
    return total / len(rows)


@dataclass(frozen=True)
class SweepEntry:
    config: JobConfig
    prediction: Prediction | None
    error: str | None  # set iff prediction is None


def sweep(
    graph: ComputationGraph,
    configs: list[JobConfig],
    db: LatencyDb,
    rules: CastRuleTable,
    policy: FallbackPolicy = FallbackPolicy.STRICT,
) -> list[SweepEntry]:
    """predict() per config, order-preserving; per-config failures become rows."""
    if not configs:
        raise EmptyInput("no configs to sweep")
    entries = []
    for config in configs:
        try:
            pred = predict(graph, config, db, rules, policy)
        except TraintimeError as exc:
            entries.append(
                SweepEntry(config=config, prediction=None, error=f"{type(exc).__name__}: {exc}")
            )
        else:
            entries.append(SweepEntry(config=config, prediction=pred, error=None))
    return entries


@dataclass(frozen=True)
class Measurement:
    config: JobConfig
    measured_ms: float
    source: str = ""

    def __post_init__(self) -> None:
        if not self.measured_ms > 0:
            raise NonPositiveMeasurement(f"measured_ms must be > 0, got {self.measured_ms!r}")


@dataclass(frozen=True)
class EvalRow:
    config: JobConfig
    predicted_ms: float
    measured_ms: float
    abs_pct_error: float


@dataclass(frozen=True)
class EvalReport:
    rows: tuple[EvalRow, ...]
    mape: float


def load_measurements(path: str) -> list[Measurement]:
    """Measurement file: JSON array of {config, measured_ms, source}."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(raw, list):
        raise ParseError(f"{path}: top level must be a JSON array")
    out = []
    for i, row in enumerate(raw):
        if not isinstance(row, dict) or "config" not in row or "measured_ms" not in row:
            raise ParseError(f"{path}: entry {i} must be an object with config and measured_ms")
        value = row["measured_ms"]
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ParseError(f"{path}: entry {i}: measured_ms must be a number")
        out.append(
            Measurement(
                config=config_from_json(row["config"], where=f"{path}: entry {i}"),
                measured_ms=float(value),
                source=str(row.get("source", "")),
            )
        )
    return out


def build_report(
    predictions: list[tuple[JobConfig, float]], measurements: list[Measurement]
) -> EvalReport:
    """Join predictions to measurements by config; every measurement must match."""
    if not measurements:
        raise EmptyInput("no measurements")
    by_config = {config: ms for config, ms in predictions}
    rows = []
    for m in measurements:
        if m.config not in by_config:
            raise ConfigError(
                "no prediction for measured config "
                + json.dumps(config_to_json(m.config), sort_keys=True)
            )
        predicted = by_config[m.config]
        error = abs(predicted - m.measured_ms) / m.measured_ms * 100.0
        rows.append(
            EvalRow(
                config=m.config,
                predicted_ms=predicted,
                measured_ms=m.measured_ms,
                abs_pct_error=error,
            )
        )
    return EvalReport(
        rows=tuple(rows), mape=mape([(r.predicted_ms, r.measured_ms) for r in rows])
    )


def report_to_json(report: EvalReport) -> dict:
    return {
        "mape_pct": report.mape,
        "rows": [
            {
                "config": config_to_json(r.config),
                "predicted_ms": r.predicted_ms,
                "measured_ms": r.measured_ms,
                "abs_pct_error": r.abs_pct_error,
            }
            for r in report.rows
        ],
    }


def format_report_table(report: EvalReport) -> str:
    header = f"{'dp':>3} {'tp':>3} {'pp':>3} {'precision':<9} {'predicted_ms':>13} {'measured_ms':>12} {'err_pct':>8}"
    lines = [header, "-" * len(header)]
    for r in report.rows:
        lines.append(
            f"{r.config.dp:>3} {r.config.tp:>3} {r.config.pp:>3} {r.config.precision.value:<9} "
            f"{r.predicted_ms:>13.3f} {r.measured_ms:>12.3f} {r.abs_pct_error:>8.3f}"
        )
    lines.append(f"MAPE: {report.mape:.3f}%  ({len(report.rows)} rows)")
    return "\n".join(lines)
