"""
Quantile norming: give each disadvantaged individual the advantaged group's
score at the same quantile rank.

Ranks are matched with the nearest-rank rule, so every mitigated score is an
observed advantaged score. With equal group sizes this is plain rank-for-rank
substitution.
"""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence, TextIO

from .errors import EmptySample, UnknownEventId
from .metrics import GroupKey, ScoreSample, canonicalize, nearest_rank_indices

__all__ = [
    "MitigationEntry",
    "MitigationMap",
    "select_disadvantaged",
    "quantile_norm",
    "apply_mitigation",
    "mitigate_groups",
]


@dataclass(frozen=True)
class MitigationEntry:
    event_id: str
    original_score: float
    mitigated_score: float


@dataclass(frozen=True)
class MitigationMap:
    entries: tuple[MitigationEntry, ...]
    disadvantaged: GroupKey | None = None
    advantaged: GroupKey | None = None

    def __len__(self) -> int:
        return len(self.entries)

    def as_dict(self) -> dict[str, float]:
        return {e.event_id: e.mitigated_score for e in self.entries}

    def mitigated_sample(self) -> ScoreSample:
        return ScoreSample(
            [e.mitigated_score for e in self.entries],
            [e.event_id for e in self.entries],
            self.disadvantaged,
        )

    def write_csv(self, fh: TextIO) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["event_id", "original", "mitigated"])
        for e in self.entries:
            writer.writerow([e.event_id, repr(e.original_score), repr(e.mitigated_score)])

    def save_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            self.write_csv(fh)


def select_disadvantaged(
    target: ScoreSample, reference: ScoreSample, override: GroupKey | None = None
) -> GroupKey | None:
    """The group with the lower mean score; ties go to the target."""
    if len(target) == 0 or len(reference) == 0:
        raise EmptySample("cannot compare empty samples")
    if override is not None:
        return override
    return reference.group if reference.mean() < target.mean() else target.group


def quantile_norm(disadvantaged: ScoreSample, advantaged: ScoreSample) -> MitigationMap:
    disadvantaged = canonicalize(disadvantaged)
    advantaged = canonicalize(advantaged)
    idx = nearest_rank_indices(len(disadvantaged), len(advantaged))
    replacement = advantaged.scores[idx]
    entries = tuple(
        MitigationEntry(str(eid), float(orig), float(new))
        for eid, orig, new in zip(disadvantaged.event_ids, disadvantaged.scores, replacement)
    )
    return MitigationMap(entries, disadvantaged.group, advantaged.group)


def apply_mitigation(events: Sequence[Any], mapping: MitigationMap) -> list[Any]:
    """Copies of ``events`` with mapped scores replaced.

    Each replaced event keeps its pre-mitigation score in ``original_score``
    (the first one, if it was already mitigated). Input events are never
    modified.
    """
    table = mapping.as_dict()
    known = {e.event_id for e in events}
    for eid in table:
        if eid not in known:
            raise UnknownEventId(eid)
    out = []
    for e in events:
        new = table.get(e.event_id)
        if new is None:
            out.append(e)
            continue
        original = e.original_score if e.original_score is not None else e.score
        out.append(dataclasses.replace(e, score=new, original_score=original))
    return out



def mitigate_groups(
    target_events: Sequence[Any],
    reference_events: Sequence[Any],
    target: GroupKey,
    reference: GroupKey,
    override: GroupKey | None = None,
) -> MitigationMap:
    """Quantile-norm whichever group is disadvantaged.

    A group whose events already carry ``original_score`` was mitigated
    before and keeps that role, so re-running is stable when the group
    means have converged.
    """
    t_sample = ScoreSample([e.score for e in target_events], [e.event_id for e in target_events], target)
    r_sample = ScoreSample(
        [e.score for e in reference_events], [e.event_id for e in reference_events], reference
    )
    if override is None:
        if any(e.original_score is not None for e in target_events):
            override = target
        elif any(e.original_score is not None for e in reference_events):
            override = reference
    chosen = select_disadvantaged(t_sample, r_sample, override)
    if chosen == reference:
        return quantile_norm(r_sample, t_sample)
    return quantile_norm(t_sample, r_sample)
