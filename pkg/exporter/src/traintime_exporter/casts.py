"""Record which operator kinds autocast actually lowers, as a rule file.

One mixed-precision forward/backward pass runs under a torch function mode.
Every intercepted op is re-executed on FP32 copies of its tensor arguments
inside the same autocast region; if the probe comes back in the reduced
dtype the kind is actively lowered (low set), if it stays FP32 the kind is
kept at full precision (high set).

The probe matters: autocast is fall-through for many ops (softmax given a
bf16 input returns bf16), so classifying by the dtype an op happened to
produce in the real pass would mislabel every fall-through kind that sits
downstream of a lowered one.
"""

import json
import warnings

import torch
from torch.overrides import TorchFunctionMode

from .errors import RuntimeUnavailable, UnsupportedPrecision
from .trace import KIND_BY_NAME


def _kind_of(func) -> str | None:
    name = getattr(func, "__name__", "")
    return KIND_BY_NAME.get(str(name).strip("_"))


class CastRecorder(TorchFunctionMode):
    def __init__(self, device_type: str):
        super().__init__()
        self.device_type = device_type
        self.lowered: dict[str, bool] = {}
        self.conflicts: list[str] = []

    def __torch_function__(self, func, types, args=(), kwargs=None):
        kwargs = kwargs or {}
        out = func(*args, **kwargs)
        kind = _kind_of(func)
        if kind is not None and torch.is_autocast_enabled(self.device_type):
            observed = self._probe(func, args, kwargs, out)
            if observed is not None:
                prev = self.lowered.get(kind)
                if prev is None:
                    self.lowered[kind] = observed
                elif prev != observed and kind not in self.conflicts:
                    # first observation on the forward path wins
                    self.conflicts.append(kind)
        return out

    def _probe(self, func, args, kwargs, out):
        if not isinstance(out, torch.Tensor) or not out.is_floating_point():
            return None
        try:
            fp32 = tuple(
                a.detach().to(torch.float32)
                if isinstance(a, torch.Tensor) and a.is_floating_point()
                else a
                for a in args
            )
            probed = func(*fp32, **kwargs)
        except Exception:
            return out.dtype != torch.float32  # best effort: direct observation
        if not isinstance(probed, torch.Tensor):
            return None
        return probed.dtype != torch.float32


def record_casts(model, example_input, setting: str = "MIXED", device_type: str = "cpu") -> tuple[dict, list]:
    """Run one autocast forward/backward pass; return (rule dict, warnings)."""
    if setting != "MIXED":
        raise UnsupportedPrecision(
            f"casts are only observable under MIXED precision, not {setting}"
        )
    try:
        available = torch.amp.is_autocast_available(device_type)
    except Exception as exc:
        raise RuntimeUnavailable(f"autocast probe failed for {device_type!r}: {exc}") from exc
    if not available:
        raise RuntimeUnavailable(f"autocast is not available for device type {device_type!r}")

    recorder = CastRecorder(device_type)
    model.train()
    with torch.autocast(device_type=device_type):
        with recorder:
            out = model(example_input)
    out.float().sum().backward()
    model.zero_grad(set_to_none=True)

    notes = [
        f"kind {kind}: conflicting cast observations; keeping the first one seen"
        for kind in recorder.conflicts
    ]
    for note in notes:
        warnings.warn(note, stacklevel=2)

    rules = {
        "format_version": "1",
        "low": sorted(k for k, lowered in recorder.lowered.items() if lowered),
        "high": sorted(k for k, lowered in recorder.lowered.items() if not lowered),
        "default": "FP32",
    }
    return rules, notes


def export_casts(model, example_input, out_path: str, setting: str = "MIXED",
                 device_type: str = "cpu") -> tuple[dict, list]:
    rules, notes = record_casts(model, example_input, setting, device_type)
    with open(out_path, "w") as fh:
        fh.write(json.dumps(rules, indent=2) + "\n")
    return rules, notes
