"""
Per-feature explanations of QDD (QDDA) built from per-prediction attributions.

A QDDA value for bin ``b`` and feature ``f`` is the mean attribution to ``f``
over the target's ``b``-th quantile bin minus the same mean over the
reference's ``b``-th bin. When every record satisfies efficiency against a
shared baseline the columns of a bin sum to that bin's QDD.

Attributions are computed once per event and cached in an
:class:`AttributionTable`; any number of group pairings can then be
explained from the same table without touching the model again.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    EmptySample,
    MismatchedReports,
    MissingAttribution,
    MissingFeature,
    MixedBaselines,
    MixedMethods,
    TooManyBins,
)
from .metrics import DEFAULT_BINS, GroupKey, QddReport, bin_bounds, bin_means

__all__ = [
    "AttributionRecord",
    "EfficiencyCheck",
    "QddaReport",
    "AttributionTable",
    "EFFICIENCY_RTOL",
    "LINEAR_METHOD",
    "check_efficiency",
    "linear_attributor",
    "linear_predict",
    "qdda",
    "qdda_for_groups",
    "reconcile",
]

EFFICIENCY_RTOL = 1e-6
LINEAR_METHOD = "linear-exact"


@dataclass(frozen=True)
class AttributionRecord:
    event_id: str
    values: Mapping[str, float]
    baseline_prediction: float
    method: str

    def total(self) -> float:
        return math.fsum(self.values.values())

    def to_dict(self) -> dict[str, Any]:
        return {
            "values": dict(self.values),
            "baseline_prediction": self.baseline_prediction,
            "method": self.method,
        }


@dataclass(frozen=True)
class EfficiencyCheck:
    passed: bool
    residual: float


def check_efficiency(
    record: AttributionRecord, prediction: float, rtol: float = EFFICIENCY_RTOL
) -> EfficiencyCheck:
    """Compare the attribution total with ``prediction - baseline``."""
    residual = abs(record.total() - (prediction - record.baseline_prediction))
    scale = max(1.0, abs(prediction), abs(record.baseline_prediction))
    return EfficiencyCheck(residual <= rtol * scale, residual)


def _require(features: Mapping[str, float], names: Iterable[str]) -> None:
    for name in names:
        if name not in features:
            raise MissingFeature(name)


def linear_predict(
    coefficients: Mapping[str, float], intercept: float, features: Mapping[str, float]
) -> float:
    _require(features, coefficients)
    return intercept + math.fsum(c * float(features[f]) for f, c in coefficients.items())


def linear_attributor(
    coefficients: Mapping[str, float],
    intercept: float,
    baseline_input: Mapping[str, float],
    event_features: Mapping[str, float],
    event_id: str = "",
) -> AttributionRecord:
    """Exact attributions of a linear model: ``coef * (x - baseline)`` per feature.

    This is what Integrated Gradients and exact Shapley values both reduce to
    for a linear model, so efficiency holds up to rounding.
    """
    _require(baseline_input, coefficients)
    _require(event_features, coefficients)
    values = {
        f: c * (float(event_features[f]) - float(baseline_input[f]))
        for f, c in coefficients.items()
    }
    return AttributionRecord(
        event_id=event_id,
        values=values,
        baseline_prediction=linear_predict(coefficients, intercept, baseline_input),
        method=LINEAR_METHOD,
    )


@dataclass(frozen=True)
class QddaReport:
    """A bins x features matrix of QDD attributions plus decomposition residuals."""

    features: tuple[str, ...]
    per_bin_per_feature: tuple[tuple[float, ...], ...]
    residual_per_bin: tuple[float, ...]
    method: str
    bin_count: int
    target_group: GroupKey | None = None
    reference_group: GroupKey | None = None
    window_id: int | None = None
    per_bin_qdd: tuple[float, ...] = field(default=())

    def column(self, feature: str) -> list[float]:
        j = self.features.index(feature)
        return [row[j] for row in self.per_bin_per_feature]

    def feature_mass(self) -> dict[str, float]:
        """Sum over bins of |QDDA| for each feature."""
        return {
            f: math.fsum(abs(row[j]) for row in self.per_bin_per_feature)
            for j, f in enumerate(self.features)
        }

    def top_features(self, k: int | None = None) -> list[tuple[str, float]]:
        ranked = sorted(self.feature_mass().items(), key=lambda kv: (-kv[1], kv[0]))
        return ranked if k is None else ranked[: max(k, 0)]

    def share(self, feature: str) -> float:
        mass = self.feature_mass()
        total = math.fsum(mass.values())
        return mass[feature] / total if total > 0 else 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "window_id": self.window_id,
            "method": self.method,
            "bin_count": self.bin_count,
            "features": list(self.features),
            "per_bin_per_feature": [list(row) for row in self.per_bin_per_feature],
            "residual_per_bin": list(self.residual_per_bin),
            "per_bin_qdd": list(self.per_bin_qdd),
            "target_group": self.target_group.to_dict() if self.target_group else None,
            "reference_group": (
                self.reference_group.to_dict() if self.reference_group else None
            ),
        }


@dataclass(frozen=True, eq=False)
class AttributionTable:
    """Attributions of a set of events, sorted once by (score, event_id).

    ``values`` has shape (features, events). Restricting the table to a
    subgroup keeps the canonical order, so subgroup binning needs no re-sort.
    """

    event_ids: np.ndarray
    scores: np.ndarray
    features: tuple[str, ...]
    values: np.ndarray
    baseline_prediction: float
    method: str
    # attribute -> (int codes in canonical order, value -> code)
    labels: Mapping[str, tuple[np.ndarray, dict[Any, int]]] = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.scores.size)

    @classmethod
    def from_events(
        cls,
        events: Sequence[Any],
        features: Sequence[str] | None = None,
        optional: Iterable[str] = (),
        attributes: Iterable[str] = (),
    ) -> "AttributionTable":
        """Validate and pack attribution records.

        ``attributes`` names group/feature columns to keep for later
        subgroup selection.
        """
        if not events:
            raise EmptySample("no events to explain")
        records = []
        for e in events:
            if e.attribution is None:
                raise MissingAttribution(e.event_id)
            records.append(e.attribution)
        first = records[0]
        for rec in records[1:]:
            if rec.method != first.method:
                raise MixedMethods(f"{first.method!r} and {rec.method!r} are mixed")
            if not math.isclose(
                rec.baseline_prediction, first.baseline_prediction, rel_tol=1e-12, abs_tol=1e-12
            ):
                raise MixedBaselines(
                    f"baselines {first.baseline_prediction} and {rec.baseline_prediction}"
                )
        if features is None:
            names: set[str] = set()
            for rec in records:
                names.update(rec.values)
            features = sorted(names)
        features = tuple(features)
        optional = set(optional)

        values = np.zeros((len(features), len(records)), dtype=np.float64)
        for j, f in enumerate(features):
            col = values[j]
            for i, rec in enumerate(records):
                v = rec.values.get(f)
                if v is None:
                    if f not in optional:
                        raise MissingFeature(f)
                    continue
                col[i] = v
        scores = np.fromiter((e.score for e in events), dtype=np.float64, count=len(events))
        ids = np.array([e.event_id for e in events], dtype=np.str_)
        order = np.lexsort((ids, scores))
        labels = {}
        for attr in attributes:
            index: dict[Any, int] = {}
            codes = np.fromiter(
                (index.setdefault(_label(e, attr), len(index)) for e in events),
                dtype=np.int64, count=len(events),
            )
            labels[attr] = (codes[order], index)
        return cls(
            event_ids=ids[order],
            scores=scores[order],
            features=features,
            values=np.ascontiguousarray(values[:, order]),
            baseline_prediction=float(first.baseline_prediction),
            method=first.method,
            labels=labels,
        )

    def mask(self, key: GroupKey) -> np.ndarray:
        """Boolean selector for a group key; needs the key's columns in ``labels``."""
        sel = np.ones(len(self), dtype=bool)
        for name, want in ((key.attribute, key.value), *key.conditions):
            codes, index = self.labels[name]
            code = index.get(want)
            if code is None:
                return np.zeros(len(self), dtype=bool)
            sel &= codes == code
        return sel


def _label(event: Any, name: str) -> Any:
    if name in event.groups:
        return event.groups[name]
    return event.features.get(name)


def _qdda_sorted(
    t_scores: np.ndarray,
    t_values: np.ndarray,
    r_scores: np.ndarray,
    r_values: np.ndarray,
    bins: int,
) -> tuple[np.ndarray, np.ndarray]:
    """(B x F QDDA matrix, per-bin QDD) for samples already in canonical order."""
    n_t, n_r = t_scores.size, r_scores.size
    if n_t == 0 or n_r == 0:
        raise EmptySample("cannot explain an empty group")
    if bins > min(n_t, n_r):
        raise TooManyBins(f"{bins} bins exceed the smaller sample size {min(n_t, n_r)}")
    t_bounds = bin_bounds(n_t, bins)
    r_bounds = bin_bounds(n_r, bins)
    matrix = bin_means(t_values, t_bounds) - bin_means(r_values, r_bounds)
    qdd = bin_means(t_scores, t_bounds) - bin_means(r_scores, r_bounds)
    return matrix.T, qdd


def _build_report(
    matrix: np.ndarray,
    qdd: np.ndarray,
    features: tuple[str, ...],
    method: str,
    bins: int,
    target: GroupKey | None,
    reference: GroupKey | None,
    window_id: int | None,
) -> QddaReport:
    rows = tuple(tuple(float(v) for v in row) for row in matrix)
    residual = tuple(float(q) - math.fsum(row) for q, row in zip(qdd, rows))
    return QddaReport(
        features=features,
        per_bin_per_feature=rows,
        residual_per_bin=residual,
        method=method,
        bin_count=bins,
        target_group=target,
        reference_group=reference,
        window_id=window_id,
        per_bin_qdd=tuple(float(q) for q in qdd),
    )


def qdda(
    target_events: Sequence[Any],
    reference_events: Sequence[Any],
    bins: int = DEFAULT_BINS,
    features: Sequence[str] | None = None,
    optional: Iterable[str] = (),
    target_group: GroupKey | None = None,
    reference_group: GroupKey | None = None,
    window_id: int | None = None,
) -> QddaReport:
    """QDDA between two event lists, binned by score rank as QDD is."""
    t_table = AttributionTable.from_events(target_events, features, optional)
    r_table = AttributionTable.from_events(reference_events, t_table.features, optional)
    if t_table.method != r_table.method:
        raise MixedMethods(f"{t_table.method!r} and {r_table.method!r} are mixed")
    if not math.isclose(
        t_table.baseline_prediction, r_table.baseline_prediction, rel_tol=1e-12, abs_tol=1e-12
    ):
        raise MixedBaselines(
            f"baselines {t_table.baseline_prediction} and {r_table.baseline_prediction}"
        )
    matrix, qdd = _qdda_sorted(
        t_table.scores, t_table.values, r_table.scores, r_table.values, bins
    )
    return _build_report(
        matrix, qdd, t_table.features, t_table.method, bins,
        target_group, reference_group, window_id,
    )


def qdda_for_groups(
    table: AttributionTable,
    target_group: GroupKey,
    reference_group: GroupKey,
    bins: int = DEFAULT_BINS,
    window_id: int | None = None,
) -> QddaReport:
    """QDDA for one pairing, reusing a table's cached attributions."""
    t_sel = table.mask(target_group)
    r_sel = table.mask(reference_group)
    matrix, qdd = _qdda_sorted(
        table.scores[t_sel], table.values[:, t_sel],
        table.scores[r_sel], table.values[:, r_sel],
        bins,
    )
    return _build_report(
        matrix, qdd, table.features, table.method, bins,
        target_group, reference_group, window_id,
    )


def reconcile(report: QddaReport, qdd: QddReport) -> list[float]:
    """Per-bin ``QDD_b - sum_f QDDA[b][f]``."""
    if report.bin_count != qdd.bin_count:
        raise MismatchedReports(
            f"bin counts differ: {report.bin_count} vs {qdd.bin_count}"
        )
    if report.target_group is not None and qdd.target_group is not None and (
        (report.target_group, report.reference_group)
        != (qdd.target_group, qdd.reference_group)
    ):
        raise MismatchedReports("QDDA and QDD reports describe different groups")
    return [
        q - math.fsum(row) for q, row in zip(qdd.per_bin_qdd, report.per_bin_per_feature)
    ]

