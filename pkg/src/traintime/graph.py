"""Computation-graph data model and its on-disk JSON format.

The graph is layer-structured: an ordered list of layers, each an ordered
list of operator nodes. This is the neutral contract between whatever
produced the graph (a tracer, a fixture generator, a hand-written file)
and the predictor. Loaded graphs are immutable values and safe to share
across threads.

File format (version "1") is documented in docs/formats.md.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Union

from .errors import ParseError, SchemaError, VersionMismatch

GRAPH_FORMAT_VERSION = "1"


class Precision(str, Enum):
    """Per-element floating-point precision of a tensor."""

    FP32 = "FP32"
    FP16 = "FP16"

    @property
    def bytes_per_element(self) -> int:
        """Byte width of one element; the only source of byte widths in the package."""
        return 4 if self is Precision.FP32 else 2


class OpKind(str, Enum):
    """Closed enumeration of operator kinds; unknown kinds are a hard load error."""

    MATMUL = "matmul"
    CONV = "conv"
    SOFTMAX = "softmax"
    REDUCTION = "reduction"
    ELEMENTWISE = "elementwise"
    EMBEDDING = "embedding"
    NORM = "norm"


@dataclass(frozen=True)
class TensorSpec:
    """Shape (and, once assigned, precision) of one operator input tensor."""

    shape: tuple[int, ...]
    elem_precision: Precision | None = None  # unset on load; set by assign_precision


@dataclass(frozen=True)
class WeightSpec:
    """A named parameter tensor attached to an operator.

    slice_dim, when set, names the dimension eligible for tensor-parallel
    slicing. Only trainable weights contribute to gradient volume.
    """

    name: str
    shape: tuple[int, ...]
    slice_dim: int | None = None
    trainable: bool = True
    elem_precision: Precision | None = None


@dataclass(frozen=True)
class OperatorNode:
    id: str
    kind: OpKind
    inputs: tuple[TensorSpec, ...]
    weights: tuple[WeightSpec, ...] = ()
    layer_index: int = 0


@dataclass(frozen=True)
class ComputationGraph:
    """Ordered layers of operator nodes plus the batch size the shapes were traced at."""

    model_name: str
    layers: tuple[tuple[OperatorNode, ...], ...]
    global_batch_size: int

    @property
    def layer_count(self) -> int:
        return len(self.layers)

    def operators(self) -> Iterator[OperatorNode]:
        """All nodes in layer order, then intra-layer order."""
        for layer in self.layers:
            yield from layer


def element_count(spec: Union[TensorSpec, WeightSpec]) -> int:
    """Product of the spec's shape dimensions (>= 1 for any valid spec)."""
    return math.prod(spec.shape)


def _check_shape(shape: object, owner: str) -> tuple[int, ...]:
    if not isinstance(shape, (list, tuple)) or len(shape) == 0:
        raise SchemaError(f"{owner}: shape must be a non-empty list of dimensions")
    for dim in shape:
        if isinstance(dim, bool) or not isinstance(dim, int) or dim < 1:
            raise SchemaError(f"{owner}: shape dimension {dim!r} is not a positive integer")
    return tuple(shape)


def validate_graph(graph: ComputationGraph) -> None:
    """Check every graph invariant; raise SchemaError naming the offending node.

    Enforced: at least one layer, no empty layers, unique operator ids,
    unique weight names, layer_index consistent with actual placement,
    well-formed shapes, valid slice_dim indices.
    """
    if not isinstance(graph.global_batch_size, int) or graph.global_batch_size < 1:
        raise SchemaError(f"global_batch_size {graph.global_batch_size!r} is not a positive integer")
    if graph.layer_count < 1:
        raise SchemaError("graph has no layers")

    seen_ids: set[str] = set()
    seen_weights: set[str] = set()
    for layer_idx, layer in enumerate(graph.layers):
        if len(layer) == 0:
            raise SchemaError(f"layer {layer_idx} is empty")
        for node in layer:
            if node.id in seen_ids:
                raise SchemaError(f"duplicate operator id {node.id!r}")
            seen_ids.add(node.id)
            if not isinstance(node.kind, OpKind):
                raise SchemaError(f"node {node.id!r}: unknown operator kind {node.kind!r}")
            if node.layer_index != layer_idx:
                raise SchemaError(
                    f"node {node.id!r}: layer_index {node.layer_index} but placed in layer {layer_idx}"
                )
            if len(node.inputs) == 0:
                raise SchemaError(f"node {node.id!r}: operator has no inputs")
            for spec in node.inputs:
                _check_shape(spec.shape, f"node {node.id!r} input")
            for w in node.weights:
                _check_shape(w.shape, f"node {node.id!r} weight {w.name!r}")
                if w.name in seen_weights:
                    raise SchemaError(f"node {node.id!r}: duplicate weight name {w.name!r}")
                seen_weights.add(w.name)
                if w.slice_dim is not None and not (0 <= w.slice_dim < len(w.shape)):
                    raise SchemaError(
                        f"node {node.id!r}: weight {w.name!r} slice_dim {w.slice_dim} "
                        f"out of range for shape {list(w.shape)}"
                    )


def _node_from_json(obj: dict, layer_idx: int) -> OperatorNode:
    node_id = obj.get("id")
    if not isinstance(node_id, str) or not node_id:
        raise SchemaError(f"layer {layer_idx}: node without a string id")
    kind_name = obj.get("kind")
    try:
        kind = OpKind(kind_name)
    except ValueError:
        raise SchemaError(f"node {node_id!r}: unknown operator kind {kind_name!r}") from None

    inputs = []
    for spec in obj.get("inputs", []):
        if not isinstance(spec, dict) or "shape" not in spec:
            raise SchemaError(f"node {node_id!r}: input entries must be objects with a shape")
        inputs.append(TensorSpec(shape=_check_shape(spec["shape"], f"node {node_id!r} input")))

    weights = []
    for w in obj.get("weights", []):
        if not isinstance(w, dict) or "name" not in w or "shape" not in w:
            raise SchemaError(f"node {node_id!r}: weight entries need name and shape")
        slice_dim = w.get("slice_dim")
        if slice_dim is not None and (isinstance(slice_dim, bool) or not isinstance(slice_dim, int)):
            raise SchemaError(f"node {node_id!r}: weight {w['name']!r} slice_dim must be an integer")
        trainable = w.get("trainable", True)
        if not isinstance(trainable, bool):
            raise SchemaError(f"node {node_id!r}: weight {w['name']!r} trainable must be a boolean")
        weights.append(
            WeightSpec(
                name=str(w["name"]),
                shape=_check_shape(w["shape"], f"node {node_id!r} weight {w['name']!r}"),
                slice_dim=slice_dim,
                trainable=trainable,
            )
        )

    layer_index = obj.get("layer_index", layer_idx)
    if isinstance(layer_index, bool) or not isinstance(layer_index, int):
        raise SchemaError(f"node {node_id!r}: layer_index must be an integer")
    return OperatorNode(
        id=node_id, kind=kind, inputs=tuple(inputs), weights=tuple(weights), layer_index=layer_index
    )


def load_graph(path: str) -> ComputationGraph:
    """Load and validate a graph-JSON file.

    Raises ParseError for malformed files and SchemaError (naming the node)
    for invariant violations: duplicate ids, unknown kinds, empty layers.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON ({exc})") from exc

    if not isinstance(raw, dict):
        raise ParseError(f"{path}: top level must be a JSON object")
    version = raw.get("format_version")
    if version != GRAPH_FORMAT_VERSION:
        raise VersionMismatch(
            f"{path}: format_version {version!r}, this reader handles {GRAPH_FORMAT_VERSION!r}"
        )
    model_name = raw.get("model_name")
    if not isinstance(model_name, str):
        raise SchemaError(f"{path}: model_name must be a string")
    gbs = raw.get("global_batch_size")
    if isinstance(gbs, bool) or not isinstance(gbs, int):
        raise SchemaError(f"{path}: global_batch_size must be an integer")
    layers_raw = raw.get("layers")
    if not isinstance(layers_raw, list):
        raise SchemaError(f"{path}: layers must be an array of arrays")

    layers = []
    for layer_idx, layer_raw in enumerate(layers_raw):
        if not isinstance(layer_raw, list):
            raise SchemaError(f"{path}: layer {layer_idx} must be an array of nodes")
        layers.append(tuple(_node_from_json(obj, layer_idx) for obj in layer_raw))

    graph = ComputationGraph(
        model_name=model_name, layers=tuple(layers), global_batch_size=gbs
    )
    validate_graph(graph)
    return graph


def _node_to_json(node: OperatorNode) -> dict:
    weights = []
    for w in node.weights:
        entry: dict = {"name": w.name, "shape": list(w.shape)}
        if w.slice_dim is not None:
            entry["slice_dim"] = w.slice_dim
        entry["trainable"] = w.trainable
        weights.append(entry)
    return {
        "id": node.id,
        "kind": node.kind.value,
        "layer_index": node.layer_index,
        "inputs": [{"shape": list(spec.shape)} for spec in node.inputs],
        "weights": weights,
    }


def graph_to_json(graph: ComputationGraph) -> dict:
    """Graph as a plain JSON-ready dict in canonical key order."""
    return {
        "format_version": GRAPH_FORMAT_VERSION,
        "model_name": graph.model_name,
        "global_batch_size": graph.global_batch_size,
        "layers": [[_node_to_json(node) for node in layer] for layer in graph.layers],
    }


def save_graph(graph: ComputationGraph, path: str) -> None:
    """Serialize a validated graph; byte-stable (saving twice yields identical files).

    Assigned precisions are an in-memory annotation and are not persisted;
    the wire format carries structure only.
    """
    validate_graph(graph)
    text = json.dumps(graph_to_json(graph), indent=2) + "\n"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
