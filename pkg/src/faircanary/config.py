"""Monitor configuration: groups, binning, windows, alert rules, base rate."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .errors import ConfigError
from .metrics import DEFAULT_BINS, GroupKey, QddReport

__all__ = [
    "ALERT_METRICS",
    "AlertRule",
    "MonitorConfig",
    "CONFIG_ENV",
    "load_config",
    "load_document",
]

CONFIG_ENV = "FAIRCANARY_CONFIG"
DAY_MS = 86_400_000

# metric -> default threshold
ALERT_METRICS = {
    "qdd": 1000.0,  # max_b |QDD_b|, score units
    "base_rate": 1000.0,  # max_b |QDD_b - training QDD_b|, score units
    "di": 0.8,  # flag outside [t, 1/t]
    "spd": 0.2,  # flag |SPD| > t
}


@dataclass(frozen=True)
class AlertRule:
    metric: str
    threshold: float

    def __post_init__(self) -> None:
        if self.metric not in ALERT_METRICS:
            raise ConfigError(
                f"unknown alert metric {self.metric!r}; expected one of {sorted(ALERT_METRICS)}"
            )
        if not self.threshold > 0:
            raise ConfigError(f"alert threshold for {self.metric} must be positive")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "AlertRule":
        if "metric" not in data:
            raise ConfigError(f"alert rule without metric: {dict(data)}")
        metric = str(data["metric"])
        return cls(metric, float(data.get("threshold", ALERT_METRICS.get(metric, 0.0))))

    def to_dict(self) -> dict[str, Any]:
        return {"metric": self.metric, "threshold": self.threshold}


@dataclass(frozen=True)
class MonitorConfig:
    protected_attribute: str = "gender"
    target_value: str = "WOMAN"
    reference_value: str = "MAN"
    conditions: Mapping[str, Any] = field(default_factory=dict)
    bins: int = DEFAULT_BINS
    window_ms: int = DAY_MS
    window_origin_ms: int = 0
    alerts: tuple[AlertRule, ...] = ()
    score_thresholds: tuple[float, ...] = ()
    base_rate: QddReport | None = None
    features: tuple[str, ...] | None = None
    optional_features: tuple[str, ...] = ()
    explain: bool = True
    top_k: int = 3
    scenario: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.protected_attribute:
            raise ConfigError("protected_attribute must be set")
        if self.target_value == self.reference_value:
            raise ConfigError("target_value and reference_value must differ")
        if self.bins < 1:
            raise ConfigError(f"bins must be >= 1, got {self.bins}")
        if self.window_ms <= 0:
            raise ConfigError(f"window_ms must be positive, got {self.window_ms}")
        if self.base_rate is not None:
            if self.base_rate.bin_count != self.bins:
                raise ConfigError(
                    f"base-rate report has {self.base_rate.bin_count} bins, config has {self.bins}"
                )
            if (self.base_rate.target_group, self.base_rate.reference_group) != (
                self.target_group, self.reference_group
            ):
                raise ConfigError("base-rate report was computed for different groups")

    @property
    def target_group(self) -> GroupKey:
        return GroupKey(self.protected_attribute, self.target_value, tuple(self.conditions.items()))

    @property
    def reference_group(self) -> GroupKey:
        return GroupKey(
            self.protected_attribute, self.reference_value, tuple(self.conditions.items())
        )

    def window_of(self, ts_ms: int) -> int:
        return (ts_ms - self.window_origin_ms) // self.window_ms

    def window_span(self, window_id: int) -> tuple[int, int]:
        start = self.window_origin_ms + window_id * self.window_ms
        return start, start + self.window_ms

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], base_dir: Path | None = None) -> "MonitorConfig":
        known = {
            "protected_attribute", "target_value", "reference_value", "conditions",
            "bins", "window_ms", "window_origin_ms", "alerts", "score_thresholds",
            "base_rate_file", "features", "optional_features", "explain", "top_k",
            "scenario",
        }
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        kwargs: dict[str, Any] = {}
        for key in ("protected_attribute", "target_value", "reference_value"):
            if key in data:
                kwargs[key] = str(data[key])
        for key in ("bins", "window_ms", "window_origin_ms", "top_k"):
            if key in data:
                kwargs[key] = int(data[key])
        if "conditions" in data:
            kwargs["conditions"] = dict(data["conditions"] or {})
        if "alerts" in data:
            kwargs["alerts"] = tuple(AlertRule.from_dict(r) for r in data["alerts"] or ())
        if "score_thresholds" in data:
            kwargs["score_thresholds"] = tuple(float(t) for t in data["score_thresholds"] or ())
        if data.get("features") is not None:
            kwargs["features"] = tuple(str(f) for f in data["features"])
        if "optional_features" in data:
            kwargs["optional_features"] = tuple(data["optional_features"] or ())
        if "explain" in data:
            kwargs["explain"] = bool(data["explain"])
        if "scenario" in data:
            kwargs["scenario"] = dict(data["scenario"] or {})
        if data.get("base_rate_file"):
            path = Path(data["base_rate_file"])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            try:
                with open(path, encoding="utf-8") as fh:
                    kwargs["base_rate"] = QddReport.from_dict(json.load(fh))
            except (OSError, ValueError, KeyError) as exc:
                raise ConfigError(f"cannot load base-rate report {path}: {exc}") from exc
        return cls(**kwargs)


def load_document(path: str | Path) -> dict[str, Any]:
    """Read a YAML (or JSON) mapping."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping")
    return data


def load_config(path: str | Path | None = None) -> MonitorConfig:
    """Load from ``path``, else ``$FAIRCANARY_CONFIG``, else defaults."""
    if path is None:
        path = os.environ.get(CONFIG_ENV) or None
    if path is None:
        return MonitorConfig()
    path = Path(path)
    try:
        return MonitorConfig.from_dict(load_document(path), base_dir=path.parent)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config {path}: {exc}") from exc
