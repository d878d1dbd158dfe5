"""
Threshold-based fairness metrics used as a baseline against QDD.

A prediction "passes" when its score is at or above the threshold.
SPD is the privileged pass rate minus the unprivileged pass rate; DI is the
unprivileged pass rate over the privileged pass rate, so DI < 1 means the
unprivileged group is passed less often.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .errors import EmptySample, UndefinedRatio
from .metrics import ScoreSample

__all__ = [
    "DI_LOWER",
    "SPD_LIMIT",
    "ThresholdMetricRow",
    "pass_rate",
    "spd",
    "di",
    "four_fifths_flags",
    "threshold_sweep",
]

DI_LOWER = 0.8
SPD_LIMIT = 0.2


def pass_rate(sample: ScoreSample, threshold: float) -> float:
    if len(sample) == 0:
        raise EmptySample("pass rate of an empty sample")
    return int(np.count_nonzero(sample.scores >= threshold)) / len(sample)


def spd(privileged: ScoreSample, unprivileged: ScoreSample, threshold: float) -> float:
    return pass_rate(privileged, threshold) - pass_rate(unprivileged, threshold)


def di(privileged: ScoreSample, unprivileged: ScoreSample, threshold: float) -> float:
    p_priv = pass_rate(privileged, threshold)
    p_unpriv = pass_rate(unprivileged, threshold)
    if p_priv == 0:
        raise UndefinedRatio(f"no privileged prediction reaches {threshold}")
    return p_unpriv / p_priv


@dataclass(frozen=True)
class ThresholdMetricRow:
    threshold: float
    spd: float
    di: float | None  # None when the privileged pass rate is zero
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "threshold": self.threshold,
            "spd": self.spd,
            "di": self.di,
            "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ThresholdMetricRow":
        return cls(
            float(data["threshold"]),
            float(data["spd"]),
            None if data.get("di") is None else float(data["di"]),
            tuple(data.get("flags", ())),
        )


def four_fifths_flags(
    row: ThresholdMetricRow, di_lower: float = DI_LOWER, spd_limit: float = SPD_LIMIT
) -> tuple[str, ...]:
    """Which of the DI 4/5ths rule and the SPD 20% rule the row violates."""
    flags = []
    if row.di is not None and (row.di < di_lower or row.di > 1.0 / di_lower):
        flags.append("di")
    if abs(row.spd) > spd_limit:
        flags.append("spd")
    return tuple(flags)


def threshold_sweep(
    privileged: ScoreSample,
    unprivileged: ScoreSample,
    thresholds: Sequence[float],
    di_lower: float = DI_LOWER,
    spd_limit: float = SPD_LIMIT,
) -> list[ThresholdMetricRow]:
    if not thresholds:
        raise ValueError("threshold sweep needs at least one threshold")
    rows = []
    for t in thresholds:
        t = float(t)
        try:
            ratio: float | None = di(privileged, unprivileged, t)
        except UndefinedRatio:
            ratio = None
        row = ThresholdMetricRow(t, spd(privileged, unprivileged, t), ratio)
        rows.append(
            ThresholdMetricRow(
                row.threshold, row.spd, row.di, four_fifths_flags(row, di_lower, spd_limit)
            )
        )
    return rows
