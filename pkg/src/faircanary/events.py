"""
Prediction events and their NDJSON wire format.

One JSON object per line::

    {"event_id": "d1-00000", "ts_ms": 1609459200000, "score": 123400.0,
     "groups": {"gender": "WOMAN"}, "features": {"education": "GRAD", ...},
     "attribution": {"values": {...}, "baseline_prediction": 50000.0,
                     "method": "linear-exact"},
     "label": 1.0}

``attribution`` and ``label`` are optional. ``original_score`` is written
only for events whose score was replaced by mitigation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping, TextIO

from .errors import ParseError, SchemaViolation
from .explanations import AttributionRecord

__all__ = [
    "PredictionEvent",
    "event_from_dict",
    "parse_line",
    "iter_events",
    "read_events",
    "dump_event",
    "write_events",
]

REQUIRED = ("event_id", "ts_ms", "score", "groups", "features")
OPTIONAL = ("attribution", "label", "original_score")


@dataclass(frozen=True)
class PredictionEvent:
    event_id: str
    ts_ms: int
    score: float
    groups: Mapping[str, str] = field(default_factory=dict)
    features: Mapping[str, Any] = field(default_factory=dict)
    attribution: AttributionRecord | None = None
    label: float | None = None
    original_score: float | None = None

    @property
    def model_score(self) -> float:
        """The score the model produced, before any mitigation."""
        return self.score if self.original_score is None else self.original_score

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "event_id": self.event_id,
            "ts_ms": self.ts_ms,
            "score": self.score,
            "groups": dict(self.groups),
            "features": dict(self.features),
        }
        if self.attribution is not None:
            out["attribution"] = self.attribution.to_dict()
        if self.label is not None:
            out["label"] = self.label
        if self.original_score is not None:
            out["original_score"] = self.original_score
        return out


def _is_number(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _finite(name: str, v: Any) -> float:
    if not _is_number(v):
        raise SchemaViolation(f"{name} must be a number, got {type(v).__name__}")
    v = float(v)
    if not math.isfinite(v):
        raise SchemaViolation(f"{name} must be finite, got {v}")
    return v


def event_from_dict(data: Mapping[str, Any]) -> PredictionEvent:
    if not isinstance(data, Mapping):
        raise SchemaViolation("event must be a JSON object")
    missing = [k for k in REQUIRED if k not in data]
    if missing:
        raise SchemaViolation(f"missing field(s): {', '.join(missing)}")
    unknown = sorted(set(data) - set(REQUIRED) - set(OPTIONAL))
    if unknown:
        raise SchemaViolation(f"unknown field(s): {', '.join(unknown)}")

    event_id = data["event_id"]
    if not isinstance(event_id, str) or not event_id:
        raise SchemaViolation("event_id must be a non-empty string")
    ts = data["ts_ms"]
    if not isinstance(ts, int) or isinstance(ts, bool):
        raise SchemaViolation("ts_ms must be an integer")
    score = _finite("score", data["score"])

    groups = data["groups"]
    if not isinstance(groups, Mapping) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in groups.items()
    ):
        raise SchemaViolation("groups must map strings to strings")
    features = data["features"]
    if not isinstance(features, Mapping):
        raise SchemaViolation("features must be an object")
    clean_features: dict[str, Any] = {}
    for k, v in features.items():
        if isinstance(v, str):
            clean_features[k] = v
        else:
            clean_features[k] = _finite(f"features.{k}", v)

    attribution = None
    raw = data.get("attribution")
    if raw is not None:
        if not isinstance(raw, Mapping) or set(raw) != {
            "values", "baseline_prediction", "method"
        }:
            raise SchemaViolation(
                "attribution must have exactly values, baseline_prediction, method"
            )
        values = raw["values"]
        if not isinstance(values, Mapping):
            raise SchemaViolation("attribution.values must be an object")
        if not isinstance(raw["method"], str):
            raise SchemaViolation("attribution.method must be a string")
        attribution = AttributionRecord(
            event_id=event_id,
            values={k: _finite(f"attribution.values.{k}", v) for k, v in values.items()},
            baseline_prediction=_finite(
                "attribution.baseline_prediction", raw["baseline_prediction"]
            ),
            method=raw["method"],
        )
    label = data.get("label")
    original = data.get("original_score")
    return PredictionEvent(
        event_id=event_id,
        ts_ms=ts,
        score=score,
        groups=dict(groups),
        features=clean_features,
        attribution=attribution,
        label=None if label is None else _finite("label", label),
        original_score=None if original is None else _finite("original_score", original),
    )


def parse_line(line: str, lineno: int = 0) -> PredictionEvent:
    try:
        data = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(lineno, f"invalid JSON: {exc.msg}") from exc
    try:
        return event_from_dict(data)
    except SchemaViolation as exc:
        raise ParseError(lineno, str(exc)) from exc


def iter_events(fh: TextIO) -> Iterator[PredictionEvent]:
    for lineno, line in enumerate(fh, start=1):
        if line.strip():
            yield parse_line(line, lineno)


def read_events(path: str | Path) -> list[PredictionEvent]:
    with open(path, encoding="utf-8") as fh:
        return list(iter_events(fh))


def dump_event(event: PredictionEvent) -> str:
    return json.dumps(event.to_dict(), separators=(",", ":"), allow_nan=False)


def write_events(events: Iterable[PredictionEvent], fh: TextIO) -> int:
    n = 0
    for e in events:
        fh.write(dump_event(e))
        fh.write("\n")
        n += 1
    return n
