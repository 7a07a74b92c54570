"""One-stop programmatic entry: trace, record casts, and profile in one go."""

from dataclasses import dataclass

from .casts import export_casts
from .model_zoo import build_model, example_input
from .profiling import ProfileSummary, profile_ops
from .trace import export_graph


@dataclass(frozen=True)
class ExportSession:
    model_name: str
    batch_size: int
    seq_len: int
    device: str
    graph_path: str
    rules_path: str
    db_path: str
    layers: int = 2
    d_model: int = 64
    d_ff: int = 128


def export_all(session: ExportSession, precisions=("FP32",),
               repetitions: int = 20, tp: int = 1) -> ProfileSummary:
    """Emit all three files for a zoo model; returns the profiling summary."""
    model = build_model(session.model_name, session.layers, session.d_model, session.d_ff)
    batch = example_input(model, session.batch_size, session.seq_len)
    export_graph(model, batch, session.model_name, session.graph_path)
    export_casts(model, batch, session.rules_path, device_type=session.device)
    return profile_ops(
        session.graph_path, set(precisions), repetitions, session.db_path,
        tp=tp, device=session.device,
    )
