"""
Quantile binning, QDD and its variants, and a Wasserstein-1 oracle.

Everything here is a pure function over immutable score samples. A QDD
value for bin ``b`` is the mean score of the target group's ``b``-th
quantile bin minus the mean score of the reference group's ``b``-th
quantile bin, so it carries the units of the model output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    ConditionEmptiesGroup,
    EmptySample,
    InvalidBinCount,
    MismatchedReports,
    TooManyBins,
    UnequalSizes,
)

__all__ = [
    "GroupKey",
    "ScoreSample",
    "QuantileBinning",
    "QddReport",
    "DEFAULT_BINS",
    "canonicalize",
    "bin_sizes",
    "bin_bounds",
    "quantile_bin",
    "bin_means",
    "qdd_per_bin",
    "conditional_qdd",
    "event_matches",
    "intra_group_bias",
    "disparity_with_base_rate",
    "nearest_rank_indices",
    "individual_alignment",
    "wasserstein1",
]

DEFAULT_BINS = 10


@dataclass(frozen=True)
class GroupKey:
    """A protected-group selector, optionally narrowed by conditioning attributes."""

    attribute: str
    value: str
    conditions: tuple[tuple[str, Any], ...] = ()

    def __post_init__(self) -> None:
        if not self.attribute:
            raise ValueError("group attribute name must be non-empty")
        conds = self.conditions
        if isinstance(conds, Mapping):
            conds = tuple(conds.items())
        conds = tuple(sorted((str(k), v) for k, v in conds))
        names = [k for k, _ in conds]
        if any(not k for k in names):
            raise ValueError("conditioning attribute names must be non-empty")
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate conditioning attribute in {names}")
        object.__setattr__(self, "conditions", conds)

    def with_conditions(self, conditions: Mapping[str, Any]) -> "GroupKey":
        merged = dict(self.conditions)
        merged.update(conditions)
        return GroupKey(self.attribute, self.value, tuple(merged.items()))

    def __str__(self) -> str:
        head = f"{self.attribute}={self.value}"
        if not self.conditions:
            return head
        return head + "|" + ",".join(f"{k}={v}" for k, v in self.conditions)

    def to_dict(self) -> dict[str, Any]:
        return {
            "attribute": self.attribute,
            "value": self.value,
            "conditions": {k: v for k, v in self.conditions},
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "GroupKey":
        return cls(
            str(data["attribute"]),
            str(data["value"]),
            tuple((data.get("conditions") or {}).items()),
        )


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class ScoreSample:
    """Scores of one group with parallel event ids.

    Arrays are stored read-only; ``canonical`` records whether they are
    already sorted by (score, event_id).
    """

    scores: np.ndarray
    event_ids: np.ndarray
    group: GroupKey | None = None
    canonical: bool = False

    def __post_init__(self) -> None:
        scores = np.array(self.scores, dtype=np.float64).reshape(-1)
        ids = self.event_ids
        if not (isinstance(ids, np.ndarray) and ids.dtype.kind == "U"):
            ids = np.array([str(i) for i in ids], dtype=np.str_)
        ids = np.array(ids, dtype=np.str_).reshape(-1)
        if scores.size == 0:
            raise EmptySample(f"sample for {self.group} is empty")
        if scores.shape != ids.shape:
            raise ValueError(
                f"scores ({scores.size}) and event_ids ({ids.size}) differ in length"
            )
        object.__setattr__(self, "scores", _frozen(scores))
        object.__setattr__(self, "event_ids", _frozen(ids))

    @classmethod
    def from_pairs(
        cls, pairs: Iterable[tuple[str, float]], group: GroupKey | None = None
    ) -> "ScoreSample":
        pairs = list(pairs)
        return cls([s for _, s in pairs], [i for i, _ in pairs], group)

    @classmethod
    def of(cls, scores: Sequence[float], group: GroupKey | None = None) -> "ScoreSample":
        """Sample with positional ids, zero-padded so they sort in input order."""
        width = len(str(max(len(scores) - 1, 0)))
        return cls(scores, [f"{i:0{width}d}" for i in range(len(scores))], group)

    def __len__(self) -> int:
        return int(self.scores.size)

    def mean(self) -> float:
        return math.fsum(self.scores.tolist()) / len(self)


def canonicalize(sample: ScoreSample) -> ScoreSample:
    """Sort ascending by score, breaking ties by event id."""
    if sample.canonical:
        return sample
    order = np.lexsort((sample.event_ids, sample.scores))
    return ScoreSample(
        sample.scores[order], sample.event_ids[order], sample.group, canonical=True
    )


def bin_sizes(n: int, bins: int) -> list[int]:
    """Equal-count bin sizes; the remainder goes to the lowest bins."""
    if bins < 1:
        raise InvalidBinCount(f"bin count must be >= 1, got {bins}")
    if bins > n:
        raise TooManyBins(f"{bins} bins requested for a sample of {n}")
    base, rem = divmod(n, bins)
    return [base + 1 if b < rem else base for b in range(bins)]


def bin_bounds(n: int, bins: int) -> tuple[tuple[int, int], ...]:
    bounds = []
    start = 0
    for size in bin_sizes(n, bins):
        bounds.append((start, start + size))
        start += size
    return tuple(bounds)


@dataclass(frozen=True)
class QuantileBinning:
    bin_count: int
    bin_boundaries: tuple[tuple[int, int], ...]
    group: GroupKey | None = None

    @property
    def sizes(self) -> list[int]:
        return [stop - start for start, stop in self.bin_boundaries]


def quantile_bin(sample: ScoreSample, bins: int) -> QuantileBinning:
    return QuantileBinning(bins, bin_bounds(len(sample), bins), sample.group)


def bin_means(values: np.ndarray, bounds: Sequence[tuple[int, int]]) -> np.ndarray:
    """Per-bin means along the last axis of a 1-d or 2-d array.

    Sums are exactly rounded (``math.fsum``), so a bin mean depends only on
    the multiset of values in the bin, never on memory layout.
    """
    values = np.asarray(values, dtype=np.float64)
    rows = values.reshape(-1, values.shape[-1]) if values.ndim > 1 else values[None, :]
    out = np.empty((rows.shape[0], len(bounds)), dtype=np.float64)
    for i, row in enumerate(rows):
        row = row.tolist()
        for b, (start, stop) in enumerate(bounds):
            out[i, b] = math.fsum(row[start:stop]) / (stop - start)
    return out.reshape(values.shape[:-1] + (len(bounds),))


@dataclass(frozen=True)
class QddReport:
    """Per-bin QDD between a target and a reference group.

    Positive values mean the target bin's mean score exceeds the reference's.
    """

    per_bin_qdd: tuple[float, ...]
    target_group: GroupKey | None
    reference_group: GroupKey | None
    bin_count: int
    window_id: int | None = None
    target_size: int = 0
    reference_size: int = 0
    target_bin_sizes: tuple[int, ...] = field(default=())
    reference_bin_sizes: tuple[int, ...] = field(default=())

    def __post_init__(self) -> None:
        if len(self.per_bin_qdd) != self.bin_count:
            raise ValueError(
                f"{len(self.per_bin_qdd)} bin values for bin_count {self.bin_count}"
            )

    @property
    def max_abs(self) -> float:
        return max(abs(v) for v in self.per_bin_qdd)

    def to_dict(self) -> dict[str, Any]:
        return {
            "window_id": self.window_id,
            "bin_count": self.bin_count,
            "per_bin_qdd": list(self.per_bin_qdd),
            "target_group": self.target_group.to_dict() if self.target_group else None,
            "reference_group": (
                self.reference_group.to_dict() if self.reference_group else None
            ),
            "target_size": self.target_size,
            "reference_size": self.reference_size,
            "target_bin_sizes": list(self.target_bin_sizes),
            "reference_bin_sizes": list(self.reference_bin_sizes),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "QddReport":
        tg, rg = data.get("target_group"), data.get("reference_group")
        return cls(
            per_bin_qdd=tuple(float(v) for v in data["per_bin_qdd"]),
            target_group=GroupKey.from_dict(tg) if tg else None,
            reference_group=GroupKey.from_dict(rg) if rg else None,
            bin_count=int(data["bin_count"]),
            window_id=data.get("window_id"),
            target_size=int(data.get("target_size", 0)),
            reference_size=int(data.get("reference_size", 0)),
            target_bin_sizes=tuple(data.get("target_bin_sizes", ())),
            reference_bin_sizes=tuple(data.get("reference_bin_sizes", ())),
        )


def qdd_per_bin(
    target: ScoreSample,
    reference: ScoreSample,
    bins: int = DEFAULT_BINS,
    window_id: int | None = None,
) -> QddReport:
    target = canonicalize(target)
    reference = canonicalize(reference)
    if bins > min(len(target), len(reference)):
        raise TooManyBins(
            f"{bins} bins exceed the smaller sample size "
            f"{min(len(target), len(reference))}"
        )
    t_bins = quantile_bin(target, bins)
    r_bins = quantile_bin(reference, bins)
    diff = bin_means(target.scores, t_bins.bin_boundaries) - bin_means(
        reference.scores, r_bins.bin_boundaries
    )
    return QddReport(
        per_bin_qdd=tuple(float(v) for v in diff),
        target_group=target.group,
        reference_group=reference.group,
        bin_count=bins,
        window_id=window_id,
        target_size=len(target),
        reference_size=len(reference),
        target_bin_sizes=tuple(t_bins.sizes),
        reference_bin_sizes=tuple(r_bins.sizes),
    )


def event_matches(event: Any, condition: Mapping[str, Any]) -> bool:
    """True when every condition pair matches the event's groups or features."""
    for name, want in condition.items():
        if name in event.groups:
            have = event.groups[name]
        elif name in event.features:
            have = event.features[name]
        else:
            return False
        if have != want and str(have) != str(want):
            return False
    return True


def _group_sample(events: Sequence[Any], key: GroupKey) -> ScoreSample | None:
    pairs = [
        (e.event_id, e.score)
        for e in events
        if e.groups.get(key.attribute) == key.value
        and event_matches(e, dict(key.conditions))
    ]
    return ScoreSample.from_pairs(pairs, key) if pairs else None


def conditional_qdd(
    events: Sequence[Any],
    condition: Mapping[str, Any],
    target_group: GroupKey,
    reference_group: GroupKey,
    bins: int = DEFAULT_BINS,
    window_id: int | None = None,
) -> QddReport:
    """QDD restricted to events matching ``condition`` (group or feature values)."""
    target = target_group.with_conditions(condition)
    reference = reference_group.with_conditions(condition)
    t_sample = _group_sample(events, target)
    if t_sample is None:
        raise ConditionEmptiesGroup(target, dict(condition))
    r_sample = _group_sample(events, reference)
    if r_sample is None:
        raise ConditionEmptiesGroup(reference, dict(condition))
    return qdd_per_bin(t_sample, r_sample, bins, window_id)


def intra_group_bias(
    sub_target: ScoreSample, sub_reference: ScoreSample, bins: int = DEFAULT_BINS
) -> float:
    """Largest absolute per-bin QDD between two partitions of one group."""
    return qdd_per_bin(sub_target, sub_reference, bins).max_abs


def disparity_with_base_rate(production: QddReport, training: QddReport) -> list[float]:
    if production.bin_count != training.bin_count:
        raise MismatchedReports(
            f"bin counts differ: {production.bin_count} vs {training.bin_count}"
        )
    if (production.target_group, production.reference_group) != (
        training.target_group,
        training.reference_group,
    ):
        raise MismatchedReports(
            f"groups differ: {production.target_group}/{production.reference_group} "
            f"vs {training.target_group}/{training.reference_group}"
        )
    return [p - t for p, t in zip(production.per_bin_qdd, training.per_bin_qdd)]


def nearest_rank_indices(n_ranks: int, n_sample: int) -> np.ndarray:
    """0-based nearest-rank positions of quantiles r/n_ranks in a sample of n_sample."""
    r = np.arange(1, n_ranks + 1, dtype=np.int64)
    return (r * n_sample + n_ranks - 1) // n_ranks - 1


def individual_alignment(target: ScoreSample, reference: ScoreSample) -> list[float]:
    """Same-rank score differences, matched at min(N_target, N_reference) quantiles."""
    target = canonicalize(target)
    reference = canonicalize(reference)
    n = min(len(target), len(reference))
    t = target.scores[nearest_rank_indices(n, len(target))]
    r = reference.scores[nearest_rank_indices(n, len(reference))]
    return [float(v) for v in t - r]


def wasserstein1(a: ScoreSample, b: ScoreSample) -> float:
    """Exact W1 between two equal-size empirical distributions."""
    if len(a) != len(b):
        raise UnequalSizes(f"wasserstein1 needs equal sizes, got {len(a)} and {len(b)}")
    xs = sorted(float(v) for v in a.scores)
    ys = sorted(float(v) for v in b.scores)
    return math.fsum(abs(x - y) for x, y in zip(xs, ys)) / len(xs)
