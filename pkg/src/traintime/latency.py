"""Measured per-operator latencies, keyed by (kind, shapes, precision).

The database is a flat map loaded from JSON-lines files. Lookups either
hit exactly or, under the interpolate policy, estimate from entries of the
same kind and precision whose shapes differ only in each shape's leading
dimension, linearly in total element count.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum

from .errors import (
    MergeConflict,
    MissingLatency,
    ParseError,
    UnknownKind,
    VersionMismatch,
)
from .graph import OpKind, Precision

DB_FORMAT_VERSION = "1"


class FallbackPolicy(str, Enum):
    STRICT = "strict"
    INTERPOLATE = "interpolate"


@dataclass(frozen=True)
class LatencyKey:
    kind: OpKind
    shapes: tuple[tuple[int, ...], ...]
    precision: Precision

    def element_count(self) -> int:
        return sum(math.prod(s) for s in self.shapes)

    def canonical(self) -> str:
        shapes = json.dumps([list(s) for s in self.shapes], separators=(",", ":"))
        return f"kind={self.kind.value} shapes={shapes} precision={self.precision.value}"


@dataclass(frozen=True)
class LatencyRecord:
    fwd_us: float
    bwd_us: float


@dataclass(frozen=True)
class LatencyDb:
    entries: dict  # LatencyKey -> LatencyRecord; treat as read-only after load
    device: str = ""

    def __len__(self) -> int:
        return len(self.entries)


def _parse_shapes(raw: object, where: str) -> tuple[tuple[int, ...], ...]:
    if not isinstance(raw, list) or not raw:
        raise ParseError(f"{where}: shapes must be a non-empty array of shape arrays")
    shapes = []
    for shape in raw:
        if not isinstance(shape, list) or not shape:
            raise ParseError(f"{where}: each shape must be a non-empty array of integers")
        for dim in shape:
            if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
                raise ParseError(f"{where}: shape dimension {dim!r} is not a positive integer")
        shapes.append(tuple(shape))
    return tuple(shapes)


def _parse_record_line(raw: dict, where: str) -> tuple[LatencyKey, LatencyRecord]:
    try:
        kind = OpKind(raw["kind"])
    except KeyError:
        raise ParseError(f"{where}: record missing 'kind'") from None
    except ValueError:
        raise UnknownKind(f"{where}: unknown operator kind {raw['kind']!r}") from None
    try:
        precision = Precision(raw["precision"])
    except KeyError:
        raise ParseError(f"{where}: record missing 'precision'") from None
    except ValueError:
        raise ParseError(f"{where}: unknown precision {raw['precision']!r}") from None
    shapes = _parse_shapes(raw.get("shapes"), where)
    values = []
    for field in ("fwd_us", "bwd_us"):
        v = raw.get(field)
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v) or v < 0:
            raise ParseError(f"{where}: {field} must be a finite non-negative number, got {v!r}")
        values.append(float(v))
    return LatencyKey(kind, shapes, precision), LatencyRecord(values[0], values[1])


def load_db(paths: list[str]) -> LatencyDb:
    """Load and merge one or more latency files.

    The first line of each file is a header carrying format_version and the
    device name. The same key may appear more than once only with an equal
    record; a differing duplicate raises MergeConflict naming the key.
    """
    entries: dict[LatencyKey, LatencyRecord] = {}
    devices: list[str] = []
    for path in paths:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        header = None
        lineno = 0
        for lineno, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{where}: not valid JSON ({exc})") from exc
            if not isinstance(raw, dict):
                raise ParseError(f"{where}: each line must be a JSON object")
            if header is None:
                version = raw.get("format_version")
                if version != DB_FORMAT_VERSION:
                    raise VersionMismatch(
                        f"{where}: format_version {version!r}, this reader handles {DB_FORMAT_VERSION!r}"
                    )
                header = raw
                device = raw.get("device", "")
                if device and device not in devices:
                    devices.append(device)
                continue
            key, record = _parse_record_line(raw, where)
            existing = entries.get(key)
            if existing is not None and existing != record:
                raise MergeConflict(
                    f"{where}: conflicting records for {key.canonical()}: "
                    f"({existing.fwd_us}, {existing.bwd_us}) vs ({record.fwd_us}, {record.bwd_us})"
                )
            entries[key] = record
        if header is None:
            raise ParseError(f"{path}: empty file, expected a header line")
    return LatencyDb(entries=entries, device="+".join(devices))


def save_db(db: LatencyDb, path: str) -> None:
    """Write header plus one record per line, sorted by canonical key."""
    rows = sorted(db.entries.items(), key=lambda kv: kv[0].canonical())
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"format_version": DB_FORMAT_VERSION, "device": db.device}) + "\n")
        for key, rec in rows:
            fh.write(
                json.dumps(
                    {
                        "kind": key.kind.value,
                        "shapes": [list(s) for s in key.shapes],
                        "precision": key.precision.value,
                        "fwd_us": rec.fwd_us,
                        "bwd_us": rec.bwd_us,
                    }
                )
                + "\n"
            )


def _tails_match(a: tuple[tuple[int, ...], ...], b: tuple[tuple[int, ...], ...]) -> bool:
    # same shape count, each shape same rank, dims beyond the leading one equal
    if len(a) != len(b):
        return False
    for sa, sb in zip(a, b):
        if len(sa) != len(sb) or sa[1:] != sb[1:]:
            return False
    return True


def lookup(
    db: LatencyDb, key: LatencyKey, policy: FallbackPolicy = FallbackPolicy.STRICT
) -> tuple[LatencyRecord, str]:
    """Return (record, tag); tag is "exact" or "interpolated".

    Exact hits ignore the policy. Interpolation is linear in total element
    count between the two nearest neighbors (by count distance); a single
    neighbor scales proportionally through the origin. Extrapolated values
    are clamped at zero.
    """
    hit = db.entries.get(key)
    if hit is not None:
        return hit, "exact"
    if policy is FallbackPolicy.STRICT:
        raise MissingLatency(f"no record for {key.canonical()}")

    candidates = []
    for k, rec in db.entries.items():
        if k.kind is key.kind and k.precision is key.precision and _tails_match(k.shapes, key.shapes):
            candidates.append((k.element_count(), k.canonical(), rec))
    if not candidates:
        raise MissingLatency(f"no record or same-kind neighbor for {key.canonical()}")

    # one knot per element count, deterministic pick among same-count shapes
    candidates.sort(key=lambda c: (c[0], c[1]))
    knots = []
    seen = set()
    for x, _, rec in candidates:
        if x not in seen:
            seen.add(x)
            knots.append((x, rec))

    xq = key.element_count()
    knots.sort(key=lambda k: (abs(k[0] - xq), k[0]))
    if len(knots) == 1:
        x0, r0 = knots[0]
        scale = xq / x0
        return LatencyRecord(r0.fwd_us * scale, r0.bwd_us * scale), "interpolated"
    (x0, r0), (x1, r1) = knots[0], knots[1]
    t = (xq - x0) / (x1 - x0)
    fwd = max(0.0, r0.fwd_us + (r1.fwd_us - r0.fwd_us) * t)
    bwd = max(0.0, r0.bwd_us + (r1.bwd_us - r0.bwd_us) * t)
    return LatencyRecord(fwd, bwd), "interpolated"
