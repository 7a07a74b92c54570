"""Iteration-time prediction.

Total time = compute + DP sync + TP sync + pipeline bubble:

    total_ms = comp_ms + dp_ms + tp_ms + pp_ms

comp_ms walks every pipeline stage once, summing per-operator forward plus
backward latencies. dp_ms and tp_ms are gradient volumes divided by link
bandwidth. pp_ms charges one extra full traversal per additional stage,
comp_ms * (pp - 1).
"""

from __future__ import annotations

import json
from contextlib import contextmanager
from dataclasses import dataclass

from .errors import ConfigError, TraintimeError
from .graph import ComputationGraph, OperatorNode, Precision, element_count
from .latency import FallbackPolicy, LatencyDb, LatencyKey, lookup
from .partition import JobConfig, Subgraph, partition
from .precision import CastRuleTable, assign_precision


@dataclass(frozen=True)
class Prediction:
    total_ms: float
    comp_ms: float
    dp_ms: float
    tp_ms: float
    pp_ms: float
    v_dp_bytes: int
    v_tp_bytes: int
    per_stage_comp_ms: tuple[float, ...]
    interpolated_lookup_count: int


def scale_leading_dim(shape: tuple[int, ...], per_gpu_batch: int, traced_batch: int) -> tuple[int, ...]:
    """Rescale a traced input shape's leading dimension to the per-GPU batch.

    The traced graph carries shapes for the batch it was exported at; under
    DP each GPU sees batch/dp samples, so leading dims shrink by the same
    ratio. Non-integral results are a hard error, not rounded.
    """
    if per_gpu_batch == traced_batch:
        return shape
    lead = shape[0] * per_gpu_batch
    if lead % traced_batch != 0:
        raise ConfigError(
            f"leading dim {shape[0]} cannot scale from traced batch {traced_batch} "
            f"to per-GPU batch {per_gpu_batch}"
        )
    return (lead // traced_batch,) + shape[1:]


def node_precision(node: OperatorNode) -> Precision:
    prec = node.inputs[0].elem_precision
    assert prec is not None, f"operator {node.id!r}: precision not assigned before lookup"
    return prec


def node_latency_key(node: OperatorNode, per_gpu_batch: int, traced_batch: int) -> LatencyKey:
    """Latency key for one operator: scaled input shapes, then weight shapes."""
    shapes = [scale_leading_dim(t.shape, per_gpu_batch, traced_batch) for t in node.inputs]
    shapes.extend(w.shape for w in node.weights)
    return LatencyKey(kind=node.kind, shapes=tuple(shapes), precision=node_precision(node))


@dataclass(frozen=True)
class CompTimes:
    comp_ms: float
    per_stage_ms: tuple[float, ...]
    interpolated_lookups: int


def comp_time(
    subgraphs: list[Subgraph],
    db: LatencyDb,
    config: JobConfig,
    policy: FallbackPolicy = FallbackPolicy.STRICT,
) -> CompTimes:
    """Sum forward+backward latency over each stage, then over stages.

    All d*t replicas of a stage are computed and asserted equal (they are
    structurally identical by construction; divergence means a partitioner
    bug). Interpolated lookups are counted on the (dp 0, tp 0) replica only,
    so the count matches a single traversal of the pipeline.
    """
    by_stage: dict[int, list[Subgraph]] = {}
    for sg in subgraphs:
        by_stage.setdefault(sg.pp_stage, []).append(sg)

    per_stage = []
    interp = 0
    comp_ms = 0.0
    for stage in sorted(by_stage):
        stage_ms = None
        for sg in by_stage[stage]:
            is_rep = sg.dp_rank == 0 and sg.tp_rank == 0
            stage_us = 0.0
            for node in sg.operators():
                key = node_latency_key(node, sg.per_gpu_batch, sg.traced_batch_size)
                try:
                    rec, tag = lookup(db, key, policy)
                except TraintimeError as exc:
                    exc.args = (
                        f"{exc.args[0]} (operator {node.id!r}, stage {sg.pp_stage}, "
                        f"dp {sg.dp_rank}, tp {sg.tp_rank})",
                    )
                    raise
                if is_rep and tag == "interpolated":
                    interp += 1
                stage_us += rec.fwd_us + rec.bwd_us
            ms = stage_us / 1000.0
            if stage_ms is None:
                stage_ms = ms
            else:
                assert ms == stage_ms, f"stage {stage}: replica times diverge ({ms} vs {stage_ms})"
        per_stage.append(stage_ms)
        comp_ms += stage_ms
    return CompTimes(comp_ms=comp_ms, per_stage_ms=tuple(per_stage), interpolated_lookups=interp)


def weight_bytes(weight) -> int:
    prec = weight.elem_precision
    assert prec is not None, f"weight {weight.name!r}: precision not assigned"
    return element_count(weight) * prec.bytes_per_element


def dp_volume(subgraphs: list[Subgraph], config: JobConfig) -> int:
    """Gradient bytes all-reduced across DP replicas each iteration.

    One replica's worth: every trainable weight of every stage and TP rank
    at dp_rank 0, at its assigned precision and post-slicing size. dp=1
    means no replicas to synchronize, volume 0.
    """
    if config.dp == 1:
        return 0
    total = 0
    for sg in subgraphs:
        if sg.dp_rank != 0:
            continue
        for node in sg.operators():
            for w in node.weights:
                if w.trainable:
                    total += weight_bytes(w)
    return total


def tp_volume(subgraphs: list[Subgraph], config: JobConfig) -> int:
    """Partial-gradient bytes synchronized across TP ranks: one rank's sliced weights."""
    if config.tp == 1:
        return 0
    total = 0
    for sg in subgraphs:
        if sg.dp_rank != 0 or sg.tp_rank != 0:
            continue
        for node in sg.operators():
            for w in node.weights:
                if w.name in sg.sliced_weight_names:
                    total += weight_bytes(w)
    return total


def comm_times(v_dp: int, v_tp: int, config: JobConfig) -> tuple[float, float]:
    """Volume over bandwidth, reported in ms; linear in both arguments."""
    dp_ms = (v_dp / config.link_bandwidth) * 1000.0
    tp_ms = (v_tp / config.link_bandwidth) * 1000.0
    return dp_ms, tp_ms


def pp_time(comp_ms: float, config: JobConfig) -> float:
    """Pipeline bubble: one extra traversal per stage beyond the first."""
    return comp_ms * (config.pp - 1)


@contextmanager
def _phase(name: str):
    try:
        yield
    except TraintimeError as exc:
        if exc.phase is None:
            exc.phase = name
        raise


def predict(
    graph: ComputationGraph,
    config: JobConfig,
    db: LatencyDb,
    rules: CastRuleTable,
    policy: FallbackPolicy = FallbackPolicy.STRICT,
) -> Prediction:
    """Full pipeline: assign precision, partition, time, aggregate.

    Deterministic: identical inputs give an identical Prediction. Errors
    carry the pipeline phase they surfaced in.
    """
    with _phase("precision"):
        typed = assign_precision(graph, config.precision, rules)
    with _phase("partition"):
        subgraphs = partition(typed, config)
    with _phase("compute"):
        times = comp_time(subgraphs, db, config, policy)
    with _phase("volume"):
        v_dp = dp_volume(subgraphs, config)
        v_tp = tp_volume(subgraphs, config)
    dp_ms, tp_ms = comm_times(v_dp, v_tp, config)
    pp_ms = pp_time(times.comp_ms, config)
    total_ms = times.comp_ms + dp_ms + tp_ms + pp_ms
    return Prediction(
        total_ms=total_ms,
        comp_ms=times.comp_ms,
        dp_ms=dp_ms,
        tp_ms=tp_ms,
        pp_ms=pp_ms,
        v_dp_bytes=v_dp,
        v_tp_bytes=v_tp,
        per_stage_comp_ms=times.per_stage_ms,
        interpolated_lookup_count=times.interpolated_lookups,
    )


def prediction_to_json(pred: Prediction) -> dict:
    return {
        "total_ms": pred.total_ms,
        "comp_ms": pred.comp_ms,
        "dp_ms": pred.dp_ms,
        "tp_ms": pred.tp_ms,
        "pp_ms": pred.pp_ms,
        "v_dp_bytes": pred.v_dp_bytes,
        "v_tp_bytes": pred.v_tp_bytes,
        "per_stage_comp_ms": list(pred.per_stage_comp_ms),
        "interpolated_lookup_count": pred.interpolated_lookup_count,
    }


def format_prediction_table(pred: Prediction, config: JobConfig) -> str:
    rows = [
        ("total_ms", f"{pred.total_ms:.3f}"),
        ("comp_ms", f"{pred.comp_ms:.3f}"),
        ("dp_ms", f"{pred.dp_ms:.3f}"),
        ("tp_ms", f"{pred.tp_ms:.3f}"),
        ("pp_ms", f"{pred.pp_ms:.3f}"),
        ("v_dp_bytes", str(pred.v_dp_bytes)),
        ("v_tp_bytes", str(pred.v_tp_bytes)),
        ("per_stage_comp_ms", json.dumps([round(v, 3) for v in pred.per_stage_comp_ms])),
        ("interpolated_lookups", str(pred.interpolated_lookup_count)),
        ("gpus (dp*tp*pp)", f"{config.gpu_count} ({config.dp}*{config.tp}*{config.pp})"),
        ("precision", config.precision.value),
    ]
    width = max(len(name) for name, _ in rows)
    return "\n".join(f"{name.ljust(width)}  {value}" for name, value in rows)
