"""Time graph operators and emit a latency database file.

Every (operator, precision) pair the graph needs becomes one DB line with
median forward and backward microseconds over `repetitions` timed runs,
after discarding warm-up runs. Operators are rebuilt from their recorded
shapes; anything that cannot be rebuilt or executed at the requested
precision is recorded as a failure and skipped, never fabricated.
"""

import json
import math
import statistics
import time
from dataclasses import dataclass, field

import torch
import torch.nn.functional as F

from .errors import DeviceError

WARMUP_RUNS = 5

DTYPES = {"FP32": torch.float32, "FP16": torch.float16}

# shapes this large get the FP16-should-not-be-slower sanity check
SANITY_MIN_ELEMENTS = 1 << 16


def load_graph_file(path: str) -> dict:
    with open(path) as fh:
        graph = json.load(fh)
    if graph.get("format_version") != "1":
        raise DeviceError(f"unsupported graph format_version in {path}")
    return graph


def _sliced(shape: list, slice_dim, tp: int):
    if tp <= 1 or slice_dim is None:
        return tuple(shape)
    full = shape[slice_dim]
    if full % tp != 0:
        raise ValueError(f"dim {full} not divisible by tp={tp}")
    out = list(shape)
    out[slice_dim] = full // tp
    return tuple(out)


def iter_op_shapes(graph: dict, tp: int = 1):
    """Yield (node id, kind, shapes) with TP slicing applied to weights."""
    for layer in graph["layers"]:
        for node in layer:
            shapes = [tuple(t["shape"]) for t in node["inputs"]]
            for w in node["weights"]:
                slice_dim = w.get("slice_dim")
                if not w.get("trainable", True):
                    slice_dim = None
                shapes.append(_sliced(w["shape"], slice_dim, tp))
            yield node["id"], node["kind"], tuple(shapes)


def _build_op(kind: str, shapes, dtype, generator):
    """Return (callable, leaf tensors) reconstructing the operator."""

    def randn(shape, grad=True):
        t = torch.randn(shape, dtype=dtype, generator=generator)
        return t.requires_grad_(grad)

    if kind == "matmul":
        if (
            len(shapes) >= 2
            and len(shapes[1]) == 2
            and shapes[0][-1] % shapes[1][1] == 0
        ):
            # contraction dim smaller than the stored input means the weight
            # was sliced along its input axis (row-parallel); each rank
            # multiplies only its slice of the activation, so that is what
            # gets timed
            x = randn(shapes[0][:-1] + (shapes[1][1],))
            w = randn(shapes[1])
            bias = randn(shapes[2]) if len(shapes) > 2 and shapes[2] == (shapes[1][0],) else None
            if bias is not None:
                return (lambda: F.linear(x, w, bias)), (x, w, bias)
            return (lambda: F.linear(x, w)), (x, w)
        if len(shapes) == 1 and len(shapes[0]) >= 2:
            x = randn(shapes[0])
            return (lambda: torch.matmul(x, x.transpose(-1, -2))), (x,)
        if len(shapes) == 2 and shapes[0][-1] == shapes[1][-2]:
            x, y = randn(shapes[0]), randn(shapes[1])
            return (lambda: torch.matmul(x, y)), (x, y)
    elif kind == "conv":
        if len(shapes) >= 2 and len(shapes[0]) == 4 and len(shapes[1]) == 4:
            x, w = randn(shapes[0]), randn(shapes[1])
            return (lambda: F.conv2d(x, w)), (x, w)
    elif kind == "softmax":
        x = randn(shapes[0])
        return (lambda: torch.softmax(x, dim=-1)), (x,)
    elif kind == "norm":
        x = randn(shapes[0])
        last = (shapes[0][-1],)
        params = [randn(s) for s in shapes[1:] if tuple(s) == last]
        weight = params[0] if params else None
        bias = params[1] if len(params) > 1 else None
        return (lambda: F.layer_norm(x, last, weight, bias)), (x, weight, bias)
    elif kind == "reduction":
        x = randn(shapes[0])
        return (lambda: x.mean()), (x,)
    elif kind == "elementwise":
        if len(shapes) >= 2 and shapes[0] == shapes[1]:
            x, y = randn(shapes[0]), randn(shapes[1])
            return (lambda: x + y), (x, y)
        x = randn(shapes[0])
        return (lambda: torch.relu(x)), (x,)
    elif kind == "embedding":
        if len(shapes) >= 2 and len(shapes[-1]) == 2:
            w = randn(shapes[-1])
            idx = torch.randint(0, shapes[-1][0], shapes[0], generator=generator)
            return (lambda: F.embedding(idx, w)), (idx, w)
    raise ValueError(f"cannot rebuild {kind} from shapes {list(shapes)}")


def _median_us(fn, repetitions: int) -> float:
    for _ in range(WARMUP_RUNS):
        fn()
    samples = []
    for _ in range(repetitions):
        start = time.perf_counter()
        fn()
        samples.append((time.perf_counter() - start) * 1e6)
    return statistics.median(samples)


def _time_op(kind: str, shapes, dtype, repetitions: int, generator) -> tuple[float, float]:
    run, leaves = _build_op(kind, shapes, dtype, generator)
    fwd_us = _median_us(run, repetitions)
    loss = run().float().sum()
    bwd_us = _median_us(lambda: loss.backward(retain_graph=True), repetitions)
    for leaf in leaves:
        if isinstance(leaf, torch.Tensor):
            leaf.grad = None
    return fwd_us, bwd_us


@dataclass
class ProfileSummary:
    device: str
    written: int = 0
    failures: list = field(default_factory=list)  # (key description, reason)
    warnings: list = field(default_factory=list)


def profile_ops(graph_path: str, precisions, repetitions: int, out_path: str,
                tp: int = 1, device: str = "cpu", seed: int = 0) -> ProfileSummary:
    try:
        dev = torch.device(device)
    except RuntimeError as exc:
        raise DeviceError(str(exc)) from exc
    if dev.type == "cuda" and not torch.cuda.is_available():
        raise DeviceError("cuda requested but no cuda device is available")
    if dev.type != "cpu":
        raise DeviceError(f"only cpu profiling is supported here, not {dev.type!r}")
    for p in precisions:
        if p not in DTYPES:
            raise DeviceError(f"unknown precision {p!r}; expected FP32 or FP16")
    if repetitions < 1:
        raise DeviceError("repetitions must be positive")

    graph = load_graph_file(graph_path)
    descriptor = f"{dev.type} torch-{torch.__version__}"
    summary = ProfileSummary(device=descriptor)
    generator = torch.Generator().manual_seed(seed)

    keys = {}
    for node_id, kind, shapes in iter_op_shapes(graph, tp):
        for precision in sorted(precisions):
            keys.setdefault((kind, shapes, precision), node_id)

    results = {}
    torch.set_num_threads(1)  # keep timings stable on shared machines
    for (kind, shapes, precision), node_id in sorted(
        keys.items(), key=lambda kv: (kv[0][0], json.dumps(kv[0][1]), kv[0][2])
    ):
        try:
            fwd, bwd = _time_op(kind, shapes, DTYPES[precision], repetitions, generator)
        except Exception as exc:
            summary.failures.append(
                (f"{kind} {list(map(list, shapes))} {precision} (op {node_id})", str(exc))
            )
            continue
        results[(kind, shapes, precision)] = (fwd, bwd)

    for (kind, shapes, p16), (f16, _) in results.items():
        if p16 != "FP16":
            continue
        f32 = results.get((kind, shapes, "FP32"))
        total = sum(math.prod(s) for s in shapes)
        if f32 and total >= SANITY_MIN_ELEMENTS and f16 > f32[0]:
            summary.warnings.append(
                f"FP16 slower than FP32 for {kind} {list(map(list, shapes))}: "
                f"{f16:.1f}us > {f32[0]:.1f}us"
            )

    with open(out_path, "w") as fh:
        fh.write(json.dumps({"format_version": "1", "device": descriptor}) + "\n")
        for (kind, shapes, precision), (fwd, bwd) in sorted(
            results.items(), key=lambda kv: (kv[0][0], json.dumps(kv[0][1]), kv[0][2])
        ):
            fh.write(
                json.dumps(
                    {
                        "kind": kind,
                        "shapes": [list(s) for s in shapes],
                        "precision": precision,
                        "fwd_us": round(fwd, 3),
                        "bwd_us": round(bwd, 3),
                    }
                )
                + "\n"
            )
            summary.written += 1
    return summary
