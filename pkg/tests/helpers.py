"""Shared builders for randomized tests.

Graphs come out of a seeded random.Random so hypothesis can drive whole
structures through one integer. Constraints baked in so every generated
(graph, config) pair is feasible: input leading dims equal the traced
batch, sliceable weight dims are multiples of 8, batch sizes divide by
any dp in {1,2,4,8}.
"""

from __future__ import annotations

import hashlib
import random

from traintime.graph import (
    ComputationGraph,
    OperatorNode,
    OpKind,
    Precision,
    TensorSpec,
    WeightSpec,
    validate_graph,
)
from traintime.latency import LatencyDb, LatencyKey, LatencyRecord
from traintime.partition import JobConfig
from traintime.precision import CastRuleTable, PrecisionSetting

TRACED_BATCH = 8

KINDS = list(OpKind)

DEGREE_TRIPLES = [
    (d, t, p)
    for d in (1, 2, 4, 8)
    for t in (1, 2, 4, 8)
    for p in (1, 2, 4, 8)
    if d * t * p <= 8
]


def make_node(rng: random.Random, node_id: str, weight_prefix: str, layer_index: int) -> OperatorNode:
    kind = rng.choice(KINDS)
    inputs = []
    for _ in range(rng.randint(1, 2)):
        tail = tuple(rng.choice((2, 3, 4, 8)) for _ in range(rng.randint(1, 2)))
        inputs.append(TensorSpec(shape=(TRACED_BATCH,) + tail))
    weights = []
    for w in range(rng.randint(0, 2)):
        rank = rng.randint(1, 3)
        shape = [rng.choice((2, 3, 4, 8)) for _ in range(rank)]
        slice_dim = None
        if rng.random() < 0.5:
            slice_dim = rng.randrange(rank)
            shape[slice_dim] = rng.choice((8, 16, 32))  # divisible by any tp degree
        weights.append(
            WeightSpec(
                name=f"{weight_prefix}_{w}",
                shape=tuple(shape),
                slice_dim=slice_dim,
                trainable=rng.random() < 0.8,
            )
        )
    return OperatorNode(
        id=node_id, kind=kind, inputs=tuple(inputs), weights=tuple(weights), layer_index=layer_index
    )


def make_graph(rng: random.Random, max_ops: int = 50, max_layers: int = 10) -> ComputationGraph:
    total_ops = rng.randint(1, max_ops)
    n_layers = rng.randint(1, min(max_layers, total_ops))
    # at least one op per layer, leftovers spread at random
    per_layer = [1] * n_layers
    for _ in range(total_ops - n_layers):
        per_layer[rng.randrange(n_layers)] += 1
    counter = 0
    layers = []
    for li, count in enumerate(per_layer):
        row = []
        for _ in range(count):
            row.append(make_node(rng, f"n{counter}", f"w{counter}", li))
            counter += 1
        layers.append(tuple(row))
    graph = ComputationGraph(
        model_name=f"random_{total_ops}ops",
        layers=tuple(layers),
        global_batch_size=TRACED_BATCH,
    )
    validate_graph(graph)
    return graph


def make_config(rng: random.Random, n_layers: int) -> JobConfig:
    triples = [(d, t, p) for d, t, p in DEGREE_TRIPLES if p <= n_layers]
    d, t, p = rng.choice(triples)
    return JobConfig(
        dp=d,
        tp=t,
        pp=p,
        precision=rng.choice(list(PrecisionSetting)),
        batch_size=rng.choice((TRACED_BATCH, 2 * TRACED_BATCH)),
        link_bandwidth=rng.choice((1e9, 4e11, 1.6e12)),
        micro_batches=rng.choice((1, 1, 2)),
    )


def classify_kind(kind: OpKind, setting: PrecisionSetting, rules: CastRuleTable) -> Precision:
    # deliberately re-derived here so key enumeration trusts neither the
    # predictor nor the reference walker
    if setting is PrecisionSetting.FP32:
        return Precision.FP32
    if setting is PrecisionSetting.FP16:
        return Precision.FP16
    if kind in rules.low_kinds:
        return Precision.FP16
    if kind in rules.high_kinds:
        return Precision.FP32
    return rules.default_rule


def enumerate_keys(graph: ComputationGraph, config: JobConfig, rules: CastRuleTable) -> set[LatencyKey]:
    """Every latency key a prediction for (graph, config) may ask for."""
    per_gpu = config.batch_size // config.dp
    traced = graph.global_batch_size
    keys = set()
    for layer in graph.layers:
        for node in layer:
            shapes = []
            for spec in node.inputs:
                lead = spec.shape[0] * per_gpu
                assert lead % traced == 0
                shapes.append((lead // traced,) + spec.shape[1:])
            for w in node.weights:
                shape = list(w.shape)
                if config.tp > 1 and w.slice_dim is not None and w.trainable:
                    assert shape[w.slice_dim] % config.tp == 0
                    shape[w.slice_dim] //= config.tp
                shapes.append(tuple(shape))
            keys.add(
                LatencyKey(
                    kind=node.kind,
                    shapes=tuple(shapes),
                    precision=classify_kind(node.kind, config.precision, rules),
                )
            )
    return keys


def record_for_key(key: LatencyKey) -> LatencyRecord:
    # value is a pure function of the key, so a wrong key on either side of
    # an equivalence check shows up as a wrong number, not a coincidence
    h = int(hashlib.sha256(key.canonical().encode()).hexdigest()[:10], 16)
    fwd = (h % 100_000) / 16.0 + 1.0
    return LatencyRecord(fwd_us=fwd, bwd_us=fwd * 2.0 + 0.25)


def db_for(graph: ComputationGraph, configs, rules: CastRuleTable) -> LatencyDb:
    entries = {}
    for config in configs:
        for key in enumerate_keys(graph, config, rules):
            entries[key] = record_for_key(key)
    return LatencyDb(entries=entries, device="helper-synth")
