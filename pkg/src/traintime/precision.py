"""Per-operator precision assignment.

Autocast behavior is modeled as a static, data-driven table: operator kinds
the runtime casts down, kinds it keeps high, and a default for everything
else. Uniform FP32/FP16 settings bypass the table entirely. Keeping the
policy in data means an exporter can overwrite it with casts observed from
a real autocast run without touching this code.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from enum import Enum

from .errors import ParseError, RuleConflict, UnknownKind, VersionMismatch
from .graph import ComputationGraph, OperatorNode, OpKind, Precision

RULES_FORMAT_VERSION = "1"


class PrecisionSetting(str, Enum):
    """Job-level precision mode: uniform FP32, uniform FP16, or rule-table MIXED."""

    FP32 = "FP32"
    FP16 = "FP16"
    MIXED = "MIXED"


@dataclass(frozen=True)
class CastRuleTable:
    """Per-kind casting policy for the MIXED setting.

    low_kinds run in FP16, high_kinds in FP32; kinds in neither set fall
    back to default_rule. The two sets must be disjoint.
    """

    low_kinds: frozenset[OpKind]
    high_kinds: frozenset[OpKind]
    default_rule: Precision = Precision.FP32

    def __post_init__(self) -> None:
        overlap = self.low_kinds & self.high_kinds
        if overlap:
            names = ", ".join(sorted(k.value for k in overlap))
            raise RuleConflict(f"kinds listed as both low and high precision: {names}")

    def classify(self, kind: OpKind) -> Precision:
        if not isinstance(kind, OpKind):
            raise UnknownKind(f"operator kind {kind!r} is not in the kind enumeration")
        if kind in self.low_kinds:
            return Precision.FP16
        if kind in self.high_kinds:
            return Precision.FP32
        return self.default_rule


def default_cast_rules() -> CastRuleTable:
    """Built-in policy: compute-bound kinds cast low, numerically sensitive kept high."""
    return CastRuleTable(
        low_kinds=frozenset({OpKind.MATMUL, OpKind.CONV}),
        high_kinds=frozenset({OpKind.SOFTMAX, OpKind.REDUCTION, OpKind.NORM}),
        default_rule=Precision.FP32,
    )


def _assign_node(node: OperatorNode, target: Precision) -> OperatorNode:
    return dataclasses.replace(
        node,
        inputs=tuple(dataclasses.replace(t, elem_precision=target) for t in node.inputs),
        weights=tuple(dataclasses.replace(w, elem_precision=target) for w in node.weights),
    )


def assign_precision(
    graph: ComputationGraph, setting: PrecisionSetting, rules: CastRuleTable
) -> ComputationGraph:
    """Return a copy of the graph with elem_precision set on every input and weight.

    FP32/FP16 settings assign uniformly; MIXED classifies per kind through
    the rule table. The input graph is never modified. Idempotent and
    structure-preserving: ids, shapes, and layer membership are unchanged.
    """
    if setting is PrecisionSetting.FP32:
        target_for = lambda kind: Precision.FP32  # noqa: E731
    elif setting is PrecisionSetting.FP16:
        target_for = lambda kind: Precision.FP16  # noqa: E731
    else:
        target_for = rules.classify

    layers = tuple(
        tuple(_assign_node(node, target_for(node.kind)) for node in layer)
        for layer in graph.layers
    )
    return dataclasses.replace(graph, layers=layers)


def _kind_list(raw: object, side: str, path: str) -> frozenset[OpKind]:
    if not isinstance(raw, list):
        raise ParseError(f"{path}: {side!r} must be an array of kind names")
    kinds = set()
    for name in raw:
        try:
            kinds.add(OpKind(name))
        except ValueError:
            raise ParseError(f"{path}: unknown operator kind {name!r} in {side!r} list") from None
    return frozenset(kinds)


def load_cast_rules(path: str) -> CastRuleTable:
    """Load and validate a cast-rule file; RuleConflict if the sets overlap."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ParseError(f"{path}: top level must be a JSON object")
    version = raw.get("format_version")
    if version != RULES_FORMAT_VERSION:
        raise VersionMismatch(
            f"{path}: format_version {version!r}, this reader handles {RULES_FORMAT_VERSION!r}"
        )
    try:
        default = Precision(raw.get("default", "FP32"))
    except ValueError:
        raise ParseError(f"{path}: default must be FP32 or FP16") from None
    return CastRuleTable(
        low_kinds=_kind_list(raw.get("low", []), "low", path),
        high_kinds=_kind_list(raw.get("high", []), "high", path),
        default_rule=default,
    )


def rules_to_json(rules: CastRuleTable) -> dict:
    return {
        "format_version": RULES_FORMAT_VERSION,
        "low": sorted(k.value for k in rules.low_kinds),
        "high": sorted(k.value for k in rules.high_kinds),
        "default": rules.default_rule.value,
    }


def save_cast_rules(rules: CastRuleTable, path: str) -> None:
    """Serialize a rule table; byte-stable across repeated saves."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(rules_to_json(rules), indent=2) + "\n")
