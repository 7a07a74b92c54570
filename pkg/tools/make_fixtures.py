#!/usr/bin/env python3
"""Regenerates everything under tests/fixtures/.

Deterministic: fixed RNG seed, sorted DB rows, stable JSON writers. Run
from the repo root after changing fixture recipes, then commit the diff.

The latency numbers are synthetic (a linear cost per element with a per-kind
multiplier and an FP16 speedup), not measurements of any real device. The
measurement fixture perturbs the predictor's own output by bounded uniform
noise so the evaluation pipeline has a known ground truth.
"""

from __future__ import annotations

import json
import os
import random
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from traintime.graph import (
    ComputationGraph,
    OperatorNode,
    OpKind,
    Precision,
    TensorSpec,
    WeightSpec,
    save_graph,
    validate_graph,
)
from traintime.latency import LatencyDb, LatencyKey, LatencyRecord, save_db
from traintime.partition import JobConfig, config_to_json, partition, save_config
from traintime.precision import PrecisionSetting, assign_precision, default_cast_rules
from traintime.predictor import node_latency_key, predict

FIXTURES = os.path.join(os.path.dirname(__file__), "..", "tests", "fixtures")

# batch, sequence, hidden, feed-forward dims; all divisible by 8 so every
# sweep degree in {1,2,4,8} slices and scales cleanly
B, S, H, FF = 8, 128, 512, 2048
LAYERS = 32

KIND_COST = {
    "matmul": 3.0,
    "conv": 4.0,
    "embedding": 2.0,
    "norm": 1.5,
    "softmax": 1.2,
    "reduction": 1.1,
    "elementwise": 0.7,
}

DEGREE_TRIPLES = sorted(
    (d, t, p)
    for d in (1, 2, 4, 8)
    for t in (1, 2, 4, 8)
    for p in (1, 2, 4, 8)
    if d * t * p == 8
)
PRECISIONS = [PrecisionSetting.FP32, PrecisionSetting.FP16, PrecisionSetting.MIXED]
LINK_BW = 400e9  # bytes/s
SEED = 20260816


def transformer_layer(i: int) -> tuple[OperatorNode, ...]:
    return (
        OperatorNode(
            id=f"l{i}_qkv",
            kind=OpKind.MATMUL,
            inputs=(TensorSpec(shape=(B, S, H)),),
            weights=(WeightSpec(name=f"l{i}_qkv_w", shape=(H, H), slice_dim=0),),
            layer_index=i,
        ),
        OperatorNode(
            id=f"l{i}_softmax",
            kind=OpKind.SOFTMAX,
            inputs=(TensorSpec(shape=(B, S, S)),),
            layer_index=i,
        ),
        OperatorNode(
            id=f"l{i}_norm",
            kind=OpKind.NORM,
            inputs=(TensorSpec(shape=(B, S, H)),),
            weights=(WeightSpec(name=f"l{i}_norm_w", shape=(H,)),),
            layer_index=i,
        ),
        OperatorNode(
            id=f"l{i}_mlp",
            kind=OpKind.MATMUL,
            inputs=(TensorSpec(shape=(B, S, H)),),
            weights=(WeightSpec(name=f"l{i}_mlp_w", shape=(H, FF), slice_dim=1),),
            layer_index=i,
        ),
        OperatorNode(
            id=f"l{i}_act",
            kind=OpKind.ELEMENTWISE,
            inputs=(TensorSpec(shape=(B, S, FF)),),
            layer_index=i,
        ),
    )


def make_transformer() -> ComputationGraph:
    graph = ComputationGraph(
        model_name="transformer_32l",
        layers=tuple(transformer_layer(i) for i in range(LAYERS)),
        global_batch_size=B,
    )
    validate_graph(graph)
    return graph


def make_single_op() -> ComputationGraph:
    graph = ComputationGraph(
        model_name="single_op",
        layers=(
            (
                OperatorNode(
                    id="n0",
                    kind=OpKind.MATMUL,
                    inputs=(TensorSpec(shape=(4, 8)),),
                    layer_index=0,
                ),
            ),
        ),
        global_batch_size=4,
    )
    validate_graph(graph)
    return graph


def sweep_configs() -> list[JobConfig]:
    configs = []
    for d, t, p in DEGREE_TRIPLES:
        for prec in PRECISIONS:
            configs.append(
                JobConfig(
                    dp=d, tp=t, pp=p, precision=prec,
                    batch_size=B, link_bandwidth=LINK_BW,
                )
            )
    return configs


def synth_record(key: LatencyKey) -> LatencyRecord:
    cost = KIND_COST[key.kind.value]
    speed = 1.0 if key.precision is Precision.FP32 else 0.6
    fwd = round(cost * key.element_count() * speed / 2000.0, 3)
    return LatencyRecord(fwd_us=fwd, bwd_us=round(2.1 * fwd, 3))


def needed_keys(graph: ComputationGraph, configs: list[JobConfig]) -> set[LatencyKey]:
    rules = default_cast_rules()
    keys = set()
    for config in configs:
        typed = assign_precision(graph, config.precision, rules)
        for sg in partition(typed, config):
            for node in sg.operators():
                keys.add(node_latency_key(node, sg.per_gpu_batch, sg.traced_batch_size))
    return keys


def main() -> None:
    os.makedirs(FIXTURES, exist_ok=True)
    graph = make_transformer()
    save_graph(graph, os.path.join(FIXTURES, "transformer_32l.json"))

    configs = sweep_configs()
    with open(os.path.join(FIXTURES, "sweep_configs.json"), "w", encoding="utf-8") as fh:
        fh.write(json.dumps([config_to_json(c) for c in configs], indent=2) + "\n")

    keys = needed_keys(graph, configs)
    db = LatencyDb(
        entries={k: synth_record(k) for k in sorted(keys, key=lambda k: k.canonical())},
        device="synthetic-sim",
    )
    db_path = os.path.join(FIXTURES, "latency_h100sim.jsonl")
    save_db(db, db_path)

    # measurements: predictor output per sweep config, perturbed by u in
    # (-5%, +5%); u is recorded in source so tests can recover it exactly
    rng = random.Random(SEED)
    rules = default_cast_rules()
    rows = []
    errors = []
    for config in configs:
        pred = predict(graph, config, db, rules)
        u = rng.uniform(-0.05, 0.05)
        measured = pred.total_ms * (1.0 + u)
        rows.append(
            {
                "config": config_to_json(config),
                "measured_ms": measured,
                "source": f"synthetic u={u!r}",
            }
        )
        errors.append(abs(pred.total_ms - measured) / measured * 100.0)
    mape = sum(errors) / len(errors)
    assert mape <= 5.0, f"regenerate with a new seed, synthetic MAPE {mape:.3f}% > 5%"
    print(f"synthetic MAPE over {len(rows)} rows: {mape:.4f}%")
    with open(os.path.join(FIXTURES, "measurements_synthetic.json"), "w", encoding="utf-8") as fh:
        fh.write(json.dumps(rows, indent=2) + "\n")

    single = make_single_op()
    save_graph(single, os.path.join(FIXTURES, "single_op.json"))
    single_keys = [
        LatencyKey(kind=OpKind.MATMUL, shapes=((4, 8),), precision=Precision.FP32),
        LatencyKey(kind=OpKind.MATMUL, shapes=((4, 8),), precision=Precision.FP16),
    ]
    single_db = LatencyDb(
        entries={
            single_keys[0]: LatencyRecord(fwd_us=100.0, bwd_us=200.0),
            single_keys[1]: LatencyRecord(fwd_us=50.0, bwd_us=100.0),
        },
        device="synthetic-sim",
    )
    save_db(single_db, os.path.join(FIXTURES, "single_op_db.jsonl"))

    save_config(
        JobConfig(
            dp=1, tp=1, pp=1, precision=PrecisionSetting.FP32,
            batch_size=4, link_bandwidth=LINK_BW,
        ),
        os.path.join(FIXTURES, "config_111.json"),
    )
    print(f"wrote fixtures to {FIXTURES}: db entries={len(db)}")


if __name__ == "__main__":
    main()
