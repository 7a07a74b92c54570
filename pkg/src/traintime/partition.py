"""Splits a computation graph into per-GPU subgraphs.

A job runs on d*t*p GPUs: p pipeline stages, each holding a contiguous
layer range, replicated across d data-parallel ranks, with weights sliced
across t tensor-parallel ranks. Partitioning is pure: the input graph is
never mutated, every subgraph gets its own node objects.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

from .errors import ConfigError, DegreeError, IndivisibleDim, ParseError, VersionMismatch
from .graph import ComputationGraph, OperatorNode, WeightSpec
from .precision import PrecisionSetting

CONFIG_FORMAT_VERSION = "1"


@dataclass(frozen=True)
class JobConfig:
    """Degrees, precision setting, batch size, and link bandwidth for one job."""

    dp: int
    tp: int
    pp: int
    precision: PrecisionSetting
    batch_size: int
    link_bandwidth: float  # bytes/second
    micro_batches: int = 1  # recorded for reports, no time term uses it

    def __post_init__(self) -> None:
        for name, value in (("dp", self.dp), ("tp", self.tp), ("pp", self.pp)):
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if not isinstance(self.batch_size, int) or isinstance(self.batch_size, bool) or self.batch_size < 1:
            raise ConfigError(f"batch_size must be a positive integer, got {self.batch_size!r}")
        if not isinstance(self.precision, PrecisionSetting):
            raise ConfigError(f"precision must be a PrecisionSetting, got {self.precision!r}")
        if not (self.link_bandwidth > 0):
            raise ConfigError(f"link_bandwidth must be > 0 bytes/s, got {self.link_bandwidth!r}")
        if not isinstance(self.micro_batches, int) or isinstance(self.micro_batches, bool) or self.micro_batches < 1:
            raise ConfigError(f"micro_batches must be a positive integer, got {self.micro_batches!r}")

    @property
    def gpu_count(self) -> int:
        return self.dp * self.tp * self.pp


@dataclass(frozen=True)
class Subgraph:
    """One GPU's share of the graph, identified by (dp_rank, tp_rank, pp_stage).

    layers holds this stage's contiguous layer range with weights already
    sliced for tp_rank. per_gpu_batch is the DP share of the job batch;
    traced_batch_size echoes the batch the graph was traced at so latency
    lookups can rescale leading dimensions.
    """

    dp_rank: int
    tp_rank: int
    pp_stage: int
    layers: tuple[tuple[OperatorNode, ...], ...]
    sliced_weight_names: frozenset[str]
    per_gpu_batch: int
    traced_batch_size: int

    def operators(self):
        for layer in self.layers:
            yield from layer


def assign_layers(graph: ComputationGraph, stage: int, config: JobConfig) -> tuple[tuple[OperatorNode, ...], ...]:
    """Contiguous layer range owned by a pipeline stage.

    Base size is floor(layers/pp); the remainder layers go one each to the
    earliest stages, so stage sizes differ by at most 1 and concatenating
    the ranges in stage order reproduces the full layer list.
    """
    n = graph.layer_count
    p = config.pp
    if p > n:
        raise DegreeError(f"pp degree {p} exceeds layer count {n}")
    if not (0 <= stage < p):
        raise DegreeError(f"stage {stage} out of range for pp={p}")
    base, rem = divmod(n, p)
    start = stage * base + min(stage, rem)
    size = base + (1 if stage < rem else 0)
    return graph.layers[start : start + size]


def stage_bounds(graph: ComputationGraph, config: JobConfig) -> list[tuple[int, int]]:
    """Half-open [start, end) layer-index range of every pipeline stage."""
    n = graph.layer_count
    p = config.pp
    if p > n:
        raise DegreeError(f"pp degree {p} exceeds layer count {n}")
    base, rem = divmod(n, p)
    bounds = []
    for s in range(p):
        start = s * base + min(s, rem)
        bounds.append((start, start + base + (1 if s < rem else 0)))
    return bounds


def slice_needed(op: OperatorNode, weight: WeightSpec, config: JobConfig) -> bool:
    """True iff TP is on, the weight declares a slice axis, and it is trainable."""
    return config.tp > 1 and weight.slice_dim is not None and weight.trainable


def slice_weight(weight: WeightSpec, tp_rank: int, tp_degree: int) -> WeightSpec:
    """Shrink the declared slice dimension by the TP degree.

    Every rank receives the same shape (1/t of the original along
    slice_dim), so the result does not depend on tp_rank; the rank argument
    exists to mirror how the partitioner calls this per rank.
    """
    if tp_degree == 1:
        return weight
    dim = weight.slice_dim
    assert dim is not None, "slice_weight called without a slice axis"
    full = weight.shape[dim]
    if full % tp_degree != 0:
        raise IndivisibleDim(
            f"weight {weight.name!r}: dimension {dim} of size {full} not divisible by tp={tp_degree}"
        )
    shape = weight.shape[:dim] + (full // tp_degree,) + weight.shape[dim + 1 :]
    return dataclasses.replace(weight, shape=shape)


def _slice_node(node: OperatorNode, tp_rank: int, config: JobConfig) -> tuple[OperatorNode, set[str]]:
    sliced_names: set[str] = set()
    weights = []
    for w in node.weights:
        if slice_needed(node, w, config):
            weights.append(slice_weight(w, tp_rank, config.tp))
            sliced_names.add(w.name)
        else:
            weights.append(w)
    return dataclasses.replace(node, weights=tuple(weights)), sliced_names


def partition(graph: ComputationGraph, config: JobConfig) -> list[Subgraph]:
    """Build all d*t*p subgraphs, in (stage, dp_rank, tp_rank) order.

    DP replicas of a (stage, tp_rank) cell are structurally identical;
    TP ranks of a cell differ only in sliced weight shapes.
    """
    if config.pp > graph.layer_count:
        raise DegreeError(
            f"pp degree {config.pp} exceeds layer count {graph.layer_count}"
        )
    if config.batch_size % config.dp != 0:
        raise DegreeError(
            f"batch_size {config.batch_size} not divisible by dp={config.dp}"
        )
    per_gpu_batch = config.batch_size // config.dp

    subgraphs = []
    for s in range(config.pp):
        stage_layers = assign_layers(graph, s, config)
        for d in range(config.dp):
            for t in range(config.tp):
                sliced_names: set[str] = set()
                layers = []
                for layer in stage_layers:
                    row = []
                    for node in layer:
                        try:
                            new_node, names = _slice_node(node, t, config)
                        except IndivisibleDim as exc:
                            exc.args = (f"{exc.args[0]} (stage {s}, dp {d}, tp rank {t})",)
                            raise
                        row.append(new_node)
                        sliced_names |= names
                    layers.append(tuple(row))
                subgraphs.append(
                    Subgraph(
                        dp_rank=d,
                        tp_rank=t,
                        pp_stage=s,
                        layers=tuple(layers),
                        sliced_weight_names=frozenset(sliced_names),
                        per_gpu_batch=per_gpu_batch,
                        traced_batch_size=graph.global_batch_size,
                    )
                )
    return subgraphs


def config_to_json(config: JobConfig) -> dict:
    return {
        "format_version": CONFIG_FORMAT_VERSION,
        "dp": config.dp,
        "tp": config.tp,
        "pp": config.pp,
        "precision": config.precision.value,
        "batch_size": config.batch_size,
        "link_bandwidth": config.link_bandwidth,
        "micro_batches": config.micro_batches,
    }


def config_from_json(raw: dict, where: str = "<config>") -> JobConfig:
    if not isinstance(raw, dict):
        raise ParseError(f"{where}: config must be a JSON object")
    version = raw.get("format_version", CONFIG_FORMAT_VERSION)
    if version != CONFIG_FORMAT_VERSION:
        raise VersionMismatch(
            f"{where}: format_version {version!r}, this reader handles {CONFIG_FORMAT_VERSION!r}"
        )
    required = ("dp", "tp", "pp", "precision", "batch_size", "link_bandwidth")
    missing = [k for k in required if k not in raw]
    if missing:
        raise ParseError(f"{where}: missing config fields: {', '.join(missing)}")
    try:
        precision = PrecisionSetting(raw["precision"])
    except ValueError:
        raise ParseError(f"{where}: unknown precision {raw['precision']!r}") from None
    try:
        return JobConfig(
            dp=raw["dp"],
            tp=raw["tp"],
            pp=raw["pp"],
            precision=precision,
            batch_size=raw["batch_size"],
            link_bandwidth=float(raw["link_bandwidth"]),
            micro_batches=raw.get("micro_batches", 1),
        )
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{where}: {exc}") from exc


def load_config(path: str) -> JobConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON ({exc})") from exc
    return config_from_json(raw, where=path)


def save_config(config: JobConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(config_to_json(config), indent=2) + "\n")
