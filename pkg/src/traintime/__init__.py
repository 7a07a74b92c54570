"""Iteration-time prediction for distributed training jobs.

Pipeline: load a traced computation graph, assign per-operator precision,
partition across DP/TP/PP ranks, look up operator latencies, and aggregate
compute, communication, and pipeline-bubble terms into one predicted
iteration time.
"""

from .errors import (
    ConfigError,
    DegreeError,
    EmptyInput,
    IndivisibleDim,
    MergeConflict,
    MissingLatency,
    NonPositiveMeasurement,
    ParseError,
    RuleConflict,
    SchemaError,
    TraintimeError,
    UnknownKind,
    VersionMismatch,
)
from .evaluate import (
    EvalReport,
    EvalRow,
    Measurement,
    SweepEntry,
    build_report,
    load_measurements,
    mape,
    oracle_predict,
    sweep,
)
from .graph import (
    ComputationGraph,
    OperatorNode,
    OpKind,
    Precision,
    TensorSpec,
    WeightSpec,
    element_count,
    load_graph,
    save_graph,
    validate_graph,
)
from .latency import (
    FallbackPolicy,
    LatencyDb,
    LatencyKey,
    LatencyRecord,
    load_db,
    lookup,
    save_db,
)
from .partition import (
    JobConfig,
    Subgraph,
    assign_layers,
    load_config,
    partition,
    save_config,
    slice_needed,
    slice_weight,
    stage_bounds,
)
from .precision import (
    CastRuleTable,
    PrecisionSetting,
    assign_precision,
    default_cast_rules,
    load_cast_rules,
    save_cast_rules,
)
from .predictor import (
    Prediction,
    comm_times,
    comp_time,
    dp_volume,
    pp_time,
    predict,
    tp_volume,
)

__version__ = "0.1.0"

__all__ = [
    "ComputationGraph",
    "OperatorNode",
    "OpKind",
    "Precision",
    "TensorSpec",
    "WeightSpec",
    "element_count",
    "load_graph",
    "save_graph",
    "validate_graph",
    "PrecisionSetting",
    "CastRuleTable",
    "assign_precision",
    "default_cast_rules",
    "load_cast_rules",
    "save_cast_rules",
    "JobConfig",
    "Subgraph",
    "assign_layers",
    "partition",
    "slice_needed",
    "slice_weight",
    "stage_bounds",
    "load_config",
    "save_config",
    "FallbackPolicy",
    "LatencyDb",
    "LatencyKey",
    "LatencyRecord",
    "load_db",
    "save_db",
    "lookup",
    "Prediction",
    "predict",
    "comp_time",
    "dp_volume",
    "tp_volume",
    "comm_times",
    "pp_time",
    "oracle_predict",
    "mape",
    "sweep",
    "SweepEntry",
    "Measurement",
    "EvalRow",
    "EvalReport",
    "build_report",
    "load_measurements",
    "TraintimeError",
    "ParseError",
    "SchemaError",
    "VersionMismatch",
    "UnknownKind",
    "RuleConflict",
    "ConfigError",
    "DegreeError",
    "IndivisibleDim",
    "MergeConflict",
    "MissingLatency",
    "EmptyInput",
    "NonPositiveMeasurement",
    "__version__",
]
