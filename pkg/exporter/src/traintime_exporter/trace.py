"""Trace a torch module into the neutral graph-JSON format.

The emitted file is the contract: it must load cleanly through the predictor
package's graph loader. Nothing here imports that package; the format is
produced directly (format_version "1", one node list per pipeline layer,
nodes carrying input shapes and weight specs).
"""

import json

import torch
import torch.fx
from torch import nn
from torch.fx.passes.shape_prop import ShapeProp

from .errors import TraceError

KIND_BY_MODULE = {
    nn.Linear: "matmul",
    nn.Conv1d: "conv",
    nn.Conv2d: "conv",
    nn.Conv3d: "conv",
    nn.LayerNorm: "norm",
    nn.BatchNorm1d: "norm",
    nn.BatchNorm2d: "norm",
    nn.Embedding: "embedding",
    nn.Softmax: "softmax",
    nn.ReLU: "elementwise",
    nn.GELU: "elementwise",
    nn.Sigmoid: "elementwise",
    nn.Tanh: "elementwise",
    nn.Dropout: "elementwise",
}

# call_function and call_method targets, keyed by bare name
KIND_BY_NAME = {
    "linear": "matmul",
    "matmul": "matmul",
    "mm": "matmul",
    "bmm": "matmul",
    "conv1d": "conv",
    "conv2d": "conv",
    "conv3d": "conv",
    "softmax": "softmax",
    "log_softmax": "softmax",
    "layer_norm": "norm",
    "mean": "reduction",
    "sum": "reduction",
    "embedding": "embedding",
    "relu": "elementwise",
    "gelu": "elementwise",
    "sigmoid": "elementwise",
    "tanh": "elementwise",
    "add": "elementwise",
    "sub": "elementwise",
    "mul": "elementwise",
    "truediv": "elementwise",
}


def _node_kind(gm: torch.fx.GraphModule, node: torch.fx.Node) -> str:
    if node.op == "call_module":
        module = gm.get_submodule(node.target)
        for cls, kind in KIND_BY_MODULE.items():
            if isinstance(module, cls):
                return kind
        raise TraceError(f"no operator kind for module {type(module).__name__} at {node.target}")
    name = node.target if node.op == "call_method" else getattr(node.target, "__name__", "")
    kind = KIND_BY_NAME.get(str(name).strip("_"))
    if kind is None:
        raise TraceError(f"no operator kind for {node.op} target {name!r}")
    return kind


def _layer_of_module_path(target: str) -> int | None:
    # "blocks.3.qkv" -> 3; the first numeric path component is the layer
    for part in str(target).split("."):
        if part.isdigit():
            return int(part)
    return None


def _tensor_args(node: torch.fx.Node) -> list:
    seen, flat = set(), []

    def walk(arg):
        if isinstance(arg, torch.fx.Node):
            if arg.name not in seen:
                seen.add(arg.name)
                flat.append(arg)
        elif isinstance(arg, (list, tuple)):
            for item in arg:
                walk(item)

    for arg in node.args:
        walk(arg)
    return flat


def _output_shape(node: torch.fx.Node):
    meta = node.meta.get("tensor_meta")
    shape = getattr(meta, "shape", None)
    return None if shape is None else [int(d) for d in shape]


def _weight_entries(module: nn.Module, target: str) -> list:
    slice_dim = getattr(module, "tp_slice_dim", None)
    entries = []
    for pname, param in module.named_parameters(recurse=False):
        entry = {"name": f"{target}.{pname}", "shape": [int(d) for d in param.shape]}
        if pname == "weight" and slice_dim is not None:
            entry["slice_dim"] = int(slice_dim)
        entry["trainable"] = bool(param.requires_grad)
        entries.append(entry)
    return entries


def trace_graph(model: nn.Module, example_input: torch.Tensor, model_name: str) -> dict:
    """Symbolically trace `model` and return the graph-JSON dict."""
    try:
        gm = torch.fx.symbolic_trace(model)
    except torch.fx.proxy.TraceError as exc:
        raise TraceError(str(exc)) from exc
    ShapeProp(gm).propagate(example_input)

    layer_of: dict[str, int] = {}
    nodes_by_layer: dict[int, list] = {}
    for node in gm.graph.nodes:
        if node.op in ("placeholder", "output", "get_attr"):
            if node.op == "placeholder":
                layer_of[node.name] = 0
            continue
        kind = _node_kind(gm, node)

        args = _tensor_args(node)
        inputs = []
        for arg in args:
            shape = _output_shape(arg)
            if shape is not None:
                inputs.append({"shape": shape})
        if not inputs:
            raise TraceError(f"operator {node.name} consumes no traced tensors")

        if node.op == "call_module":
            layer = _layer_of_module_path(node.target)
            weights = _weight_entries(gm.get_submodule(node.target), str(node.target))
        else:
            layer = None
            weights = []
        if layer is None:
            # functional ops inherit the deepest layer among their producers
            layer = max((layer_of.get(a.name, 0) for a in args), default=0)
        layer_of[node.name] = layer

        nodes_by_layer.setdefault(layer, []).append(
            {
                "id": node.name,
                "kind": kind,
                "layer_index": layer,
                "inputs": inputs,
                "weights": weights,
            }
        )

    if not nodes_by_layer:
        raise TraceError("trace produced no operators")
    indices = sorted(nodes_by_layer)
    if indices != list(range(len(indices))):
        raise TraceError(f"layer indices are not contiguous: {indices}")

    return {
        "format_version": "1",
        "model_name": model_name,
        "global_batch_size": int(example_input.shape[0]),
        "layers": [nodes_by_layer[i] for i in indices],
    }


def export_graph(model, example_input, model_name: str, out_path: str) -> dict:
    graph = trace_graph(model, example_input, model_name)
    with open(out_path, "w") as fh:
        fh.write(json.dumps(graph, indent=2) + "\n")
    return graph
