"""
The monitoring loop: ingest scored events into tumbling time windows, and on
window close compute QDD, QDDA, the threshold-metric table, the disparity
against the training base rate, and alerts.

Window membership is decided by event timestamp, never by arrival time, so
replaying a file gives the same reports regardless of line order.
"""

from __future__ import annotations

import csv
import io
import json
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence, TextIO

from .config import MonitorConfig, AlertRule
from .errors import (
    ClosedWindow,
    DuplicateEvent,
    EmptyGroupInWindow,
    FairCanaryError,
    SchemaViolation,
)
from .events import PredictionEvent, iter_events
from .explanations import QddaReport, check_efficiency, qdda
from .metrics import (
    GroupKey,
    QddReport,
    ScoreSample,
    disparity_with_base_rate,
    event_matches,
    qdd_per_bin,
)
from .threshold import DI_LOWER, SPD_LIMIT, ThresholdMetricRow, threshold_sweep

__all__ = [
    "Alert",
    "WindowReport",
    "WindowStore",
    "Monitor",
    "split_groups",
    "group_sample",
    "compute_window_report",
    "evaluate_alerts",
    "replay",
    "replay_file",
    "write_reports",
    "events_by_window",
]

@dataclass(frozen=True)
class Alert:
    window_id: int
    rule: str
    observed: float
    threshold: float
    kind: str = "bias"  # "bias" or "diagnostic"
    detail: Mapping[str, Any] = field(default_factory=dict)
    top_features: tuple[tuple[str, float], ...] = ()

    @property
    def is_bias(self) -> bool:
        return self.kind == "bias"

    def to_dict(self) -> dict[str, Any]:
        return {
            "window_id": self.window_id,
            "kind": self.kind,
            "rule": self.rule,
            "observed": self.observed,
            "threshold": self.threshold,
            "detail": dict(self.detail),
            "top_features": [[f, v] for f, v in self.top_features],
        }


@dataclass(frozen=True)
class WindowReport:
    window_id: int
    start_ms: int
    end_ms: int
    n_events: int
    n_target: int
    n_reference: int
    qdd: QddReport | None = None
    qdda: QddaReport | None = None
    thresholds: tuple[ThresholdMetricRow, ...] = ()
    base_rate_disparity: tuple[float, ...] | None = None
    alerts: tuple[Alert, ...] = ()
    diagnostics: tuple[str, ...] = ()

    @property
    def complete(self) -> bool:
        return self.qdd is not None

    @property
    def bias_alerts(self) -> list[Alert]:
        return [a for a in self.alerts if a.is_bias]

    def to_dict(self) -> dict[str, Any]:
        return {
            "window_id": self.window_id,
            "start_ms": self.start_ms,
            "end_ms": self.end_ms,
            "complete": self.complete,
            "n_events": self.n_events,
            "n_target": self.n_target,
            "n_reference": self.n_reference,
            "qdd": self.qdd.to_dict() if self.qdd else None,
            "qdda": self.qdda.to_dict() if self.qdda else None,
            "thresholds": [r.to_dict() for r in self.thresholds],
            "base_rate_disparity": (
                None if self.base_rate_disparity is None else list(self.base_rate_disparity)
            ),
            "alerts": [a.to_dict() for a in self.alerts],
            "diagnostics": list(self.diagnostics),
        }


def split_groups(
    events: Iterable[PredictionEvent], target: GroupKey, reference: GroupKey
) -> tuple[list[PredictionEvent], list[PredictionEvent]]:
    t_events: list[PredictionEvent] = []
    r_events: list[PredictionEvent] = []
    t_cond, r_cond = dict(target.conditions), dict(reference.conditions)
    for e in events:
        value = e.groups.get(target.attribute)
        if value == target.value and event_matches(e, t_cond):
            t_events.append(e)
        elif e.groups.get(reference.attribute) == reference.value and event_matches(e, r_cond):
            r_events.append(e)
    return t_events, r_events


def group_sample(events: Sequence[PredictionEvent], key: GroupKey) -> ScoreSample:
    return ScoreSample([e.score for e in events], [e.event_id for e in events], key)


def _rule_limit(rules: Sequence[AlertRule], metric: str, default: float) -> float:
    for r in rules:
        if r.metric == metric:
            return r.threshold
    return default


def evaluate_alerts(
    report: WindowReport, rules: Sequence[AlertRule], top_k: int = 3
) -> list[Alert]:
    """One bias alert per violated rule, carrying the top-k QDDA features."""
    top = tuple(report.qdda.top_features(top_k)) if report.qdda is not None else ()
    alerts = []
    for rule in rules:
        fired: tuple[float, dict[str, Any]] | None = None
        if rule.metric == "qdd" and report.qdd is not None:
            values = report.qdd.per_bin_qdd
            b = max(range(len(values)), key=lambda i: abs(values[i]))
            if abs(values[b]) > rule.threshold:
                fired = abs(values[b]), {"bin": b, "qdd": values[b]}
        elif rule.metric == "base_rate" and report.base_rate_disparity is not None:
            values = report.base_rate_disparity
            b = max(range(len(values)), key=lambda i: abs(values[i]))
            if abs(values[b]) > rule.threshold:
                fired = abs(values[b]), {"bin": b, "disparity": values[b]}
        elif rule.metric == "di":
            bad = [
                r for r in report.thresholds
                if r.di is not None and (r.di < rule.threshold or r.di > 1.0 / rule.threshold)
            ]
            if bad:
                worst = max(bad, key=lambda r: abs(math.log(r.di)) if r.di > 0 else math.inf)
                fired = worst.di, {"score_threshold": worst.threshold}
        elif rule.metric == "spd":
            bad = [r for r in report.thresholds if abs(r.spd) > rule.threshold]
            if bad:
                worst = max(bad, key=lambda r: abs(r.spd))
                fired = worst.spd, {"score_threshold": worst.threshold}
        if fired is not None:
            observed, detail = fired
            alerts.append(
                Alert(report.window_id, rule.metric, observed, rule.threshold, "bias", detail, top)
            )
    return alerts


def _diagnostic(window_id: int, rule: str, message: str) -> Alert:
    return Alert(window_id, rule, 0.0, 0.0, "diagnostic", {"message": message})


def compute_window_report(
    config: MonitorConfig, window_id: int, events: Sequence[PredictionEvent]
) -> WindowReport:
    """All reports for one frozen window snapshot."""
    start, end = config.window_span(window_id)
    target, reference = config.target_group, config.reference_group
    t_events, r_events = split_groups(events, target, reference)
    base = dict(
        window_id=window_id, start_ms=start, end_ms=end, n_events=len(events),
        n_target=len(t_events), n_reference=len(r_events),
    )
    for group, members in ((target, t_events), (reference, r_events)):
        if not members:
            err = EmptyGroupInWindow(window_id, group)
            msg = f"{type(err).__name__}: {err}"
            return WindowReport(
                alerts=(_diagnostic(window_id, "empty_group", msg),), diagnostics=(msg,), **base
            )

    t_sample, r_sample = group_sample(t_events, target), group_sample(r_events, reference)
    try:
        qdd = qdd_per_bin(t_sample, r_sample, config.bins, window_id)
    except FairCanaryError as exc:
        msg = f"{type(exc).__name__}: {exc}"
        return WindowReport(
            alerts=(_diagnostic(window_id, "qdd_failed", msg),), diagnostics=(msg,), **base
        )

    diagnostics: list[str] = []
    diag_alerts: list[Alert] = []
    explained = None
    if config.explain:
        try:
            explained = qdda(
                t_events, r_events, config.bins,
                features=config.features, optional=config.optional_features,
                target_group=target, reference_group=reference, window_id=window_id,
            )
        except FairCanaryError as exc:
            msg = f"{type(exc).__name__}: {exc}"
            diagnostics.append(msg)
            diag_alerts.append(_diagnostic(window_id, "qdda_unavailable", msg))

    rows: tuple[ThresholdMetricRow, ...] = ()
    if config.score_thresholds:
        rows = tuple(
            threshold_sweep(
                r_sample, t_sample, config.score_thresholds,
                di_lower=_rule_limit(config.alerts, "di", DI_LOWER),
                spd_limit=_rule_limit(config.alerts, "spd", SPD_LIMIT),
            )
        )
    disparity = None
    if config.base_rate is not None:
        disparity = tuple(disparity_with_base_rate(qdd, config.base_rate))

    report = WindowReport(
        qdd=qdd, qdda=explained, thresholds=rows, base_rate_disparity=disparity,
        diagnostics=tuple(diagnostics), **base,
    )
    alerts = evaluate_alerts(report, config.alerts, config.top_k) + diag_alerts
    return WindowReport(
        qdd=qdd, qdda=explained, thresholds=rows, base_rate_disparity=disparity,
        alerts=tuple(alerts), diagnostics=tuple(diagnostics), **base,
    )


class _Window:
    __slots__ = ("events", "ids", "closed", "report")

    def __init__(self) -> None:
        self.events: list[PredictionEvent] = []
        self.ids: set[str] = set()
        self.closed = False
        self.report: WindowReport | None = None


class WindowStore:
    """Append-only per-window event logs guarded by a single lock."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._windows: dict[int, _Window] = {}
        self.late_events = 0

    def append(self, window_id: int, event: PredictionEvent) -> None:
        with self._lock:
            win = self._windows.get(window_id)
            if win is None:
                win = self._windows[window_id] = _Window()
            if win.closed:
                self.late_events += 1
                raise ClosedWindow(window_id)
            if event.event_id in win.ids:
                raise DuplicateEvent(event.event_id, window_id)
            win.ids.add(event.event_id)
            win.events.append(event)

    def freeze(self, window_id: int) -> tuple[PredictionEvent, ...]:
        """Close the window and return an immutable snapshot of its events."""
        with self._lock:
            win = self._windows.get(window_id)
            if win is None:
                win = self._windows[window_id] = _Window()
            if win.closed:
                raise ClosedWindow(window_id)
            win.closed = True
            return tuple(win.events)

    def attach(self, window_id: int, report: WindowReport) -> None:
        with self._lock:
            self._windows[window_id].report = report

    def events(self, window_id: int) -> tuple[PredictionEvent, ...]:
        with self._lock:
            win = self._windows.get(window_id)
            return tuple(win.events) if win else ()

    def report(self, window_id: int) -> WindowReport | None:
        with self._lock:
            win = self._windows.get(window_id)
            return win.report if win else None

    def is_closed(self, window_id: int) -> bool:
        with self._lock:
            win = self._windows.get(window_id)
            return bool(win and win.closed)

    def open_windows(self) -> list[int]:
        with self._lock:
            return sorted(w for w, win in self._windows.items() if not win.closed)


class Monitor:
    def __init__(self, config: MonitorConfig, store: WindowStore | None = None):
        self.config = config
        self.store = store or WindowStore()

    def ingest(self, event: PredictionEvent) -> int:
        if not isinstance(event.event_id, str) or not event.event_id:
            raise SchemaViolation("event_id must be a non-empty string")
        if not isinstance(event.score, (int, float)) or not math.isfinite(event.score):
            raise SchemaViolation(f"score of {event.event_id!r} must be finite")
        if event.attribution is not None:
            check = check_efficiency(event.attribution, event.model_score)
            if not check.passed:
                raise SchemaViolation(
                    f"attribution of {event.event_id!r} violates efficiency "
                    f"(residual {check.residual:g})"
                )
        window_id = self.config.window_of(event.ts_ms)
        self.store.append(window_id, event)
        return window_id

    def close_window(self, window_id: int) -> WindowReport:
        snapshot = self.store.freeze(window_id)
        report = compute_window_report(self.config, window_id, snapshot)
        self.store.attach(window_id, report)
        return report

    def close_all(self, max_workers: int = 1) -> list[WindowReport]:
        ids = self.store.open_windows()
        if max_workers <= 1 or len(ids) <= 1:
            return [self.close_window(w) for w in ids]
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            return list(pool.map(self.close_window, ids))


def replay(
    events: Iterable[PredictionEvent], config: MonitorConfig, max_workers: int = 1
) -> list[WindowReport]:
    """Ingest all events (in timestamp, event_id order) and close every window."""
    monitor = Monitor(config)
    for e in sorted(events, key=lambda e: (e.ts_ms, e.event_id)):
        monitor.ingest(e)
    return monitor.close_all(max_workers)


def replay_file(
    path: str | Path | TextIO, config: MonitorConfig, max_workers: int = 1
) -> list[WindowReport]:
    if hasattr(path, "read"):
        return replay(iter_events(path), config, max_workers)
    with open(path, encoding="utf-8") as fh:
        return replay(list(iter_events(fh)), config, max_workers)


def _fmt_threshold(t: float) -> str:
    return f"{t:g}"


def reports_csv(reports: Sequence[WindowReport], fh: TextIO) -> None:
    """Flat view: one row per (window, bin)."""
    features: list[str] = []
    thresholds: list[float] = []
    for r in reports:
        if r.qdda is not None:
            features.extend(f for f in r.qdda.features if f not in features)
        thresholds.extend(t.threshold for t in r.thresholds if t.threshold not in thresholds)
    header = ["window_id", "bin_index", "qdd"] + [f"qdda_{f}" for f in features]
    for t in thresholds:
        header += [f"spd_{_fmt_threshold(t)}", f"di_{_fmt_threshold(t)}"]
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(header)
    for r in reports:
        if r.qdd is None:
            continue
        by_t = {row.threshold: row for row in r.thresholds}
        for b, q in enumerate(r.qdd.per_bin_qdd):
            line: list[Any] = [r.window_id, b, repr(q)]
            for f in features:
                if r.qdda is not None and f in r.qdda.features:
                    line.append(repr(r.qdda.per_bin_per_feature[b][r.qdda.features.index(f)]))
                else:
                    line.append("")
            for t in thresholds:
                row = by_t.get(t)
                line.append("" if row is None else repr(row.spd))
                line.append("" if row is None or row.di is None else repr(row.di))
            writer.writerow(line)


def timeseries_csv(reports: Sequence[WindowReport], fh: TextIO) -> None:
    """QDD over time, one row per window, for plotting."""
    bins = max((r.qdd.bin_count for r in reports if r.qdd is not None), default=0)
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(
        ["window_id", "start_ms"] + [f"qdd_bin_{b}" for b in range(bins)] + ["alerts"]
    )
    for r in reports:
        values = list(r.qdd.per_bin_qdd) if r.qdd is not None else []
        cells = [repr(v) for v in values] + [""] * (bins - len(values))
        writer.writerow(
            [r.window_id, r.start_ms] + cells + [";".join(a.rule for a in r.bias_alerts)]
        )


def _dumps(obj: Any) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def write_reports(reports: Sequence[WindowReport], report_dir: str | Path) -> dict[str, Path]:
    """Persist reports; returns the written paths keyed by role."""
    out = Path(report_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "reports": out / "reports.ndjson",
        "csv": out / "reports.csv",
        "timeseries": out / "timeseries.csv",
        "alerts": out / "alerts.ndjson",
    }
    with open(paths["reports"], "w", encoding="utf-8") as fh:
        for r in reports:
            fh.write(_dumps(r.to_dict()) + "\n")
    for key, writer in (("csv", reports_csv), ("timeseries", timeseries_csv)):
        buf = io.StringIO()
        writer(reports, buf)
        paths[key].write_text(buf.getvalue(), encoding="utf-8")
    with open(paths["alerts"], "w", encoding="utf-8") as fh:
        for r in reports:
            for a in r.alerts:
                fh.write(_dumps(a.to_dict()) + "\n")
    return paths


def alert_lines(reports: Sequence[WindowReport]) -> list[str]:
    return [_dumps(a.to_dict()) for r in reports for a in r.alerts]


def events_by_window(
    events: Iterable[PredictionEvent], config: MonitorConfig
) -> dict[int, list[PredictionEvent]]:
    out: dict[int, list[PredictionEvent]] = {}
    for e in events:
        out.setdefault(config.window_of(e.ts_ms), []).append(e)
    return dict(sorted(out.items()))
