"""Bridge live torch models into the predictor's neutral file formats.

Three producers, one format each: `export_graph` traces a module into graph
JSON, `record_casts` observes autocast into a cast-rule file, `profile_ops`
times operators into a latency DB. This package never predicts anything and
never imports the predictor; the files are the only contract.
"""

from .casts import export_casts, record_casts
from .errors import (
    DeviceError,
    ExportError,
    RuntimeUnavailable,
    TraceError,
    UnknownModel,
    UnsupportedPrecision,
)
from .model_zoo import ToyTransformer, build_model, example_input
from .profiling import ProfileSummary, profile_ops
from .session import ExportSession, export_all
from .trace import export_graph, trace_graph

__version__ = "0.1.0"

__all__ = [
    "DeviceError",
    "ExportError",
    "ExportSession",
    "ProfileSummary",
    "RuntimeUnavailable",
    "ToyTransformer",
    "TraceError",
    "UnknownModel",
    "UnsupportedPrecision",
    "build_model",
    "example_input",
    "export_all",
    "export_casts",
    "export_graph",
    "profile_ops",
    "record_casts",
    "trace_graph",
]
