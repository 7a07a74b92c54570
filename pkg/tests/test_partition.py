import copy
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import make_config, make_graph
from traintime.errors import ConfigError, DegreeError, IndivisibleDim, ParseError
from traintime.graph import (
    ComputationGraph,
    OperatorNode,
    OpKind,
    TensorSpec,
    WeightSpec,
    element_count,
)
from traintime.partition import (
    JobConfig,
    assign_layers,
    load_config,
    partition,
    save_config,
    slice_needed,
    slice_weight,
    stage_bounds,
)
from traintime.precision import PrecisionSetting


def chain_graph(n_layers: int, batch: int = 8) -> ComputationGraph:
    layers = []
    for i in range(n_layers):
        layers.append(
            (
                OperatorNode(
                    id=f"n{i}",
                    kind=OpKind.MATMUL,
                    inputs=(TensorSpec(shape=(batch, 4)),),
                    weights=(WeightSpec(name=f"w{i}", shape=(8, 4), slice_dim=0),),
                    layer_index=i,
                ),
            )
        )
    return ComputationGraph(model_name="chain", layers=tuple(layers), global_batch_size=batch)


def cfg(d=1, t=1, p=1, batch=8, precision=PrecisionSetting.FP32, bw=4e11):
    return JobConfig(dp=d, tp=t, pp=p, precision=precision, batch_size=batch, link_bandwidth=bw)


def test_assign_layers_identity_partition():
    graph = chain_graph(8)
    assert assign_layers(graph, 0, cfg(p=1)) == graph.layers


def test_assign_layers_even_split():
    graph = chain_graph(8)
    sizes = [len(assign_layers(graph, s, cfg(p=4))) for s in range(4)]
    assert sizes == [2, 2, 2, 2]


def test_assign_layers_remainder_front_loaded():
    graph = chain_graph(7)
    config = cfg(p=2)
    stage0 = assign_layers(graph, 0, config)
    stage1 = assign_layers(graph, 1, config)
    assert [len(stage0), len(stage1)] == [4, 3]
    assert [n.id for layer in stage0 for n in layer] == ["n0", "n1", "n2", "n3"]


def test_assign_layers_degree_error():
    graph = chain_graph(3)
    with pytest.raises(DegreeError):
        assign_layers(graph, 0, cfg(p=4))


@settings(max_examples=100)
@given(
    n_layers=st.integers(min_value=1, max_value=64),
    p=st.sampled_from([1, 2, 4, 8]),
)
def test_assign_layers_concatenation(n_layers, p):
    if p > n_layers:
        return
    graph = chain_graph(n_layers)
    config = cfg(p=p)
    collected = []
    for s in range(p):
        collected.extend(assign_layers(graph, s, config))
    assert tuple(collected) == graph.layers
    sizes = [len(assign_layers(graph, s, config)) for s in range(p)]
    assert max(sizes) - min(sizes) <= 1
    assert sizes == sorted(sizes, reverse=True)  # remainder goes to the front
    bounds = stage_bounds(graph, config)
    assert [end - start for start, end in bounds] == sizes
    assert bounds[0][0] == 0 and bounds[-1][1] == n_layers


def test_slice_weight_t1_identity():
    w = WeightSpec(name="w", shape=(4096, 4096), slice_dim=0)
    assert slice_weight(w, 0, 1) is w


def test_slice_weight_quarters_dim0():
    w = WeightSpec(name="w", shape=(4096, 4096), slice_dim=0)
    sliced = slice_weight(w, 0, 4)
    assert sliced.shape == (1024, 4096)
    assert sliced.name == "w"


def test_slice_weight_indivisible():
    w = WeightSpec(name="w", shape=(6, 4), slice_dim=0)
    with pytest.raises(IndivisibleDim, match="'w'"):
        slice_weight(w, 0, 4)


@settings(max_examples=100)
@given(
    dims=st.lists(st.integers(min_value=1, max_value=16), min_size=1, max_size=4),
    axis_mult=st.integers(min_value=1, max_value=6),
    t=st.sampled_from([1, 2, 4, 8]),
    data=st.data(),
)
def test_slice_weight_mass_conservation(dims, axis_mult, t, data):
    axis = data.draw(st.integers(min_value=0, max_value=len(dims) - 1))
    dims = list(dims)
    dims[axis] = t * axis_mult  # force divisibility
    w = WeightSpec(name="w", shape=tuple(dims), slice_dim=axis)
    total = sum(element_count(slice_weight(w, r, t)) for r in range(t))
    assert total == element_count(w)


def test_slice_needed_conjuncts():
    node = OperatorNode(id="n", kind=OpKind.MATMUL, inputs=(TensorSpec(shape=(2, 2)),))
    sliceable = WeightSpec(name="w", shape=(8, 2), slice_dim=0)
    assert not slice_needed(node, sliceable, cfg(t=1))  # tp off
    assert not slice_needed(node, WeightSpec(name="w", shape=(8, 2)), cfg(t=4))  # no axis
    assert not slice_needed(
        node, WeightSpec(name="w", shape=(8, 2), slice_dim=0, trainable=False), cfg(t=4)
    )
    assert slice_needed(node, WeightSpec(name="w", shape=(8, 2), slice_dim=1), cfg(t=2))


def test_partition_trivial_degrees_reproduce_graph():
    graph = chain_graph(5)
    subs = partition(graph, cfg())
    assert len(subs) == 1
    sg = subs[0]
    assert (sg.dp_rank, sg.tp_rank, sg.pp_stage) == (0, 0, 0)
    assert sg.layers == graph.layers
    assert sg.sliced_weight_names == frozenset()
    assert sg.per_gpu_batch == 8 and sg.traced_batch_size == 8


def test_partition_cardinality_and_stage_sharing():
    graph = chain_graph(8)
    subs = partition(graph, cfg(d=2, p=2))
    assert len(subs) == 4
    stage0 = [sg for sg in subs if sg.pp_stage == 0]
    assert len(stage0) == 2
    for sg in stage0:
        assert [n.id for n in sg.operators()] == ["n0", "n1", "n2", "n3"]


def test_partition_tp_slices_weights():
    graph = ComputationGraph(
        model_name="one",
        layers=(
            (
                OperatorNode(
                    id="n0",
                    kind=OpKind.MATMUL,
                    inputs=(TensorSpec(shape=(8, 4096)),),
                    weights=(WeightSpec(name="w0", shape=(4096, 4096), slice_dim=0),),
                ),
            ),
        ),
        global_batch_size=8,
    )
    subs = partition(graph, cfg(t=2))
    assert len(subs) == 2
    for sg in subs:
        (node,) = list(sg.operators())
        assert node.weights[0].shape == (2048, 4096)
        assert sg.sliced_weight_names == frozenset({"w0"})


def test_partition_batch_not_divisible():
    graph = chain_graph(2)
    with pytest.raises(DegreeError, match="divisible"):
        partition(graph, cfg(d=4, batch=6))


def test_partition_pp_exceeds_layers():
    graph = chain_graph(2)
    with pytest.raises(DegreeError):
        partition(graph, cfg(p=4))


def test_partition_indivisible_weight_names_rank():
    graph = ComputationGraph(
        model_name="odd",
        layers=(
            (
                OperatorNode(
                    id="n0",
                    kind=OpKind.MATMUL,
                    inputs=(TensorSpec(shape=(8, 6)),),
                    weights=(WeightSpec(name="w0", shape=(6, 6), slice_dim=0),),
                ),
            ),
        ),
        global_batch_size=8,
    )
    with pytest.raises(IndivisibleDim, match="stage 0"):
        partition(graph, cfg(t=4))


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**32 - 1))
def test_partition_properties_random(seed):
    rng = random.Random(seed)
    graph = make_graph(rng, max_ops=25)
    config = make_config(rng, graph.layer_count)
    snapshot = copy.deepcopy(graph)
    subs = partition(graph, config)
    assert graph == snapshot  # purity
    assert len(subs) == config.dp * config.tp * config.pp

    # DP symmetry: same (stage, tp) cell differs only in dp_rank
    by_cell = {}
    for sg in subs:
        by_cell.setdefault((sg.pp_stage, sg.tp_rank), []).append(sg)
    for cell in by_cell.values():
        assert len(cell) == config.dp
        assert len({sg.layers for sg in cell}) == 1
        assert len({sg.sliced_weight_names for sg in cell}) == 1

    # coverage: stage ranges concatenate to the original layer list
    stage_subs = [sg for sg in subs if sg.dp_rank == 0 and sg.tp_rank == 0]
    stage_subs.sort(key=lambda sg: sg.pp_stage)
    ids = [n.id for sg in stage_subs for n in sg.operators()]
    assert ids == [n.id for n in graph.operators()]

    # sliced names actually exist in the subgraph and were actually shrunk
    original_elems = {w.name: element_count(w) for n in graph.operators() for w in n.weights}
    for sg in subs:
        names_present = {w.name for n in sg.operators() for w in n.weights}
        assert sg.sliced_weight_names <= names_present
        for node in sg.operators():
            for w in node.weights:
                if w.name in sg.sliced_weight_names:
                    assert element_count(w) * config.tp == original_elems[w.name]
                else:
                    assert element_count(w) == original_elems[w.name]


def test_job_config_validation():
    with pytest.raises(ConfigError):
        cfg(d=0)
    with pytest.raises(ConfigError):
        cfg(batch=0)
    with pytest.raises(ConfigError):
        cfg(bw=0.0)
    with pytest.raises(ConfigError):
        JobConfig(dp=1, tp=1, pp=1, precision="FP32", batch_size=8, link_bandwidth=1e9)
    with pytest.raises(ConfigError):
        JobConfig(
            dp=1, tp=1, pp=1, precision=PrecisionSetting.FP32,
            batch_size=8, link_bandwidth=1e9, micro_batches=0,
        )


def test_config_file_roundtrip(tmp_path):
    config = cfg(d=2, t=4, p=1, precision=PrecisionSetting.MIXED)
    path = tmp_path / "c.json"
    save_config(config, str(path))
    assert load_config(str(path)) == config


def test_config_file_missing_field(tmp_path):
    path = tmp_path / "c.json"
    path.write_text('{"format_version": "1", "dp": 1}')
    with pytest.raises(ParseError, match="missing"):
        load_config(str(path))


def test_config_file_unknown_precision(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(
        '{"format_version": "1", "dp": 1, "tp": 1, "pp": 1, "precision": "BF16",'
        ' "batch_size": 8, "link_bandwidth": 1e9}'
    )
    with pytest.raises(ParseError, match="BF16"):
        load_config(str(path))
