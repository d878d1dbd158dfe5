from __future__ import annotations

import csv
import io
import json
import random
import threading

import pytest

from faircanary.config import AlertRule, MonitorConfig
from faircanary.errors import ClosedWindow, DuplicateEvent, SchemaViolation
from faircanary.events import write_events
from faircanary.explanations import AttributionRecord
from faircanary.metrics import GroupKey, QddReport, qdd_per_bin
from faircanary.pipeline import (
    Monitor,
    WindowReport,
    compute_window_report,
    evaluate_alerts,
    group_sample,
    replay,
    replay_file,
    reports_csv,
    split_groups,
    timeseries_csv,
    write_reports,
)

from conftest import MAN, WOMAN, case_study_config, make_event

DAY = 86_400_000
QDD_RULE = (AlertRule("qdd", 1000.0),)


def report_with(values):
    q = QddReport(tuple(values), WOMAN, MAN, len(values), 0, 1, 1, (1,) * len(values), (1,) * len(values))
    return WindowReport(0, 0, DAY, 2, 1, 1, qdd=q)


def attributed(event_id, score, gender="WOMAN", ts_ms=0, baseline=0.0):
    rec = AttributionRecord(event_id, {"x": score - baseline}, baseline, "linear-exact")
    return make_event(event_id, score, gender, ts_ms, rec, x=score)


class TestEvaluateAlerts:
    def test_day_one_value(self):
        assert evaluate_alerts(report_with([156.0]), QDD_RULE) == []

    def test_day_two_value(self):
        (alert,) = evaluate_alerts(report_with([-8677.0]), QDD_RULE)
        assert alert.rule == "qdd" and alert.observed == 8677.0 and alert.is_bias

    def test_zero_report(self):
        for t in (1e-9, 1.0, 1e9):
            assert evaluate_alerts(report_with([0.0] * 5), (AlertRule("qdd", t),)) == []

    def test_worst_bin_reported(self):
        (alert,) = evaluate_alerts(report_with([10.0, -3000.0, 2000.0]), QDD_RULE)
        assert alert.detail == {"bin": 1, "qdd": -3000.0}


class TestIngest:
    def test_window_id(self, config):
        m = Monitor(config)
        assert m.ingest(make_event("a", 1.0, ts_ms=config.window_origin_ms + DAY + 5)) == 1

    def test_duplicate(self, config):
        m = Monitor(config)
        e = make_event("a", 1.0, ts_ms=config.window_origin_ms)
        m.ingest(e)
        with pytest.raises(DuplicateEvent):
            m.ingest(e)

    def test_non_finite(self, config):
        with pytest.raises(SchemaViolation):
            Monitor(config).ingest(make_event("a", float("inf")))

    def test_efficiency_checked(self, config):
        bad = AttributionRecord("a", {"x": 1.0}, 0.0, "linear-exact")
        with pytest.raises(SchemaViolation, match="efficiency"):
            Monitor(config).ingest(make_event("a", 5.0, attribution=bad))

    def test_closed_window(self):
        m = Monitor(MonitorConfig(bins=1))
        m.ingest(make_event("w", 1.0))
        m.ingest(make_event("m", 2.0, "MAN"))
        report = m.close_window(0)
        assert m.store.report(0) is report
        with pytest.raises(ClosedWindow):
            m.ingest(make_event("late", 3.0))
        assert m.store.late_events == 1
        assert len(m.store.events(0)) == 2
        with pytest.raises(ClosedWindow):
            m.close_window(0)


class TestCloseWindow:
    def test_empty_group_diagnostic(self):
        m = Monitor(MonitorConfig(bins=1, alerts=QDD_RULE))
        m.ingest(make_event("m", 2.0, "MAN"))
        r = m.close_window(0)
        assert not r.complete and r.bias_alerts == []
        assert [a.rule for a in r.alerts] == ["empty_group"]
        assert "EmptyGroupInWindow" in r.diagnostics[0]

    def test_qdda_iff_attributions(self):
        cfg = MonitorConfig(bins=1)
        full = [attributed("w", 1.0), attributed("m", 3.0, "MAN")]
        assert compute_window_report(cfg, 0, full).qdda is not None
        partial = [attributed("w", 1.0), make_event("m", 3.0, "MAN")]
        r = compute_window_report(cfg, 0, partial)
        assert r.complete and r.qdda is None
        assert [a.rule for a in r.alerts] == ["qdda_unavailable"]

    def test_too_many_bins(self):
        r = compute_window_report(MonitorConfig(bins=5), 0, [make_event("w", 1.0), make_event("m", 1.0, "MAN")])
        assert r.qdd is None and r.alerts[0].rule == "qdd_failed"

    def test_conditions_restrict_groups(self):
        cfg = MonitorConfig(bins=1, conditions={"education": "GRAD"})
        events = [
            make_event("w1", 1.0, education="GRAD"),
            make_event("w2", 100.0, education="POST_GRAD"),
            make_event("m1", 4.0, "MAN", education="GRAD"),
        ]
        r = compute_window_report(cfg, 0, events)
        assert r.qdd.per_bin_qdd == (-3.0,)
        assert (r.n_target, r.n_reference) == (1, 1)

    def test_base_rate(self):
        events = [make_event("w", 1.0), make_event("m", 4.0, "MAN")]
        base = qdd_per_bin(
            group_sample([events[0]], WOMAN), group_sample([events[1]], MAN), 1
        )
        cfg = MonitorConfig(bins=1, base_rate=base, alerts=(AlertRule("base_rate", 0.5),))
        shifted = [make_event("w", 0.0), make_event("m", 4.0, "MAN")]
        r = compute_window_report(cfg, 0, shifted)
        assert r.base_rate_disparity == (-1.0,)
        assert [a.rule for a in r.bias_alerts] == ["base_rate"]


class TestReplay:
    def test_empty(self, config):
        assert replay([], config) == []
        assert replay_file(io.StringIO(""), config) == []

    def test_case_study(self, case_study_events, config):
        reports = replay(case_study_events, config)
        assert [r.window_id for r in reports] == [0, 1, 2]
        assert [bool(r.bias_alerts) for r in reports] == [False, True, False]
        assert reports[1].qdd.per_bin_qdd[0] < 0
        assert reports[1].qdda.top_features(1)[0][0] == "education"
        self._check_soundness(reports, case_study_events, config)

    def test_shuffled_identical(self, day_two, config, tmp_path):
        shuffled = list(day_two)
        random.Random(7).shuffle(shuffled)
        a = write_reports(replay(day_two, config), tmp_path / "a")
        b = write_reports(replay(shuffled, config, max_workers=4), tmp_path / "b")
        for key in a:
            assert a[key].read_bytes() == b[key].read_bytes()

    @staticmethod
    def _check_soundness(reports, events, config):
        by_window = {}
        for e in events:
            by_window.setdefault(config.window_of(e.ts_ms), []).append(e)
        for r in reports:
            for alert in r.bias_alerts:
                t, ref = split_groups(by_window[r.window_id], config.target_group, config.reference_group)
                q = qdd_per_bin(group_sample(t, WOMAN), group_sample(ref, MAN), config.bins)
                assert q.max_abs > alert.threshold
                assert q.max_abs == alert.observed


def test_concurrent_ingestion_matches_serial(day_two, config):
    serial = Monitor(config)
    for e in day_two:
        serial.ingest(e)
    parallel = Monitor(config)
    chunks = [day_two[i::8] for i in range(8)]
    threads = [threading.Thread(target=lambda c=c: [parallel.ingest(e) for e in c]) for c in chunks]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    a = serial.close_window(1).to_dict()
    b = parallel.close_window(1).to_dict()
    assert json.dumps(a) == json.dumps(b)


def test_csv_outputs(case_study_events, config):
    reports = replay(case_study_events, config)
    buf = io.StringIO()
    reports_csv(reports, buf)
    rows = list(csv.reader(io.StringIO(buf.getvalue())))
    assert rows[0][:3] == ["window_id", "bin_index", "qdd"]
    assert "qdda_education" in rows[0] and "di_200000" in rows[0]
    assert len(rows) == 1 + 3
    buf = io.StringIO()
    timeseries_csv(reports, buf)
    ts = list(csv.DictReader(io.StringIO(buf.getvalue())))
    assert [row["alerts"] for row in ts] == ["", "qdd", ""]
    assert float(ts[1]["qdd_bin_0"]) == reports[1].qdd.per_bin_qdd[0]


def test_replay_file_round_trip(day_two, config, tmp_path):
    path = tmp_path / "d2.ndjson"
    with open(path, "w") as fh:
        write_events(day_two[:500], fh)
    a = replay_file(path, config)
    b = replay(day_two[:500], config)
    assert [r.to_dict() for r in a] == [r.to_dict() for r in b]


def test_multi_bin_case_study(day_two):
    cfg = case_study_config(bins=10)
    (r,) = replay(day_two, cfg)
    assert r.qdd.bin_count == 10
    assert max(abs(x) for x in r.qdda.residual_per_bin) < 1e-6


def test_group_key_conditions_in_report():
    cfg = MonitorConfig(bins=1, conditions={"location": "Springfield"})
    assert cfg.target_group == GroupKey("gender", "WOMAN", (("location", "Springfield"),))
