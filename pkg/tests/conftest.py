from __future__ import annotations

from pathlib import Path

import pytest

from faircanary.config import AlertRule, MonitorConfig
from faircanary.events import PredictionEvent
from faircanary.metrics import GroupKey
from faircanary.synthetic import FEATURES, ScenarioSpec, generate

ROOT = Path(__file__).resolve().parents[1]
CASE_STUDY_CONFIG = ROOT / "configs" / "case_study.yaml"

WOMAN = GroupKey("gender", "WOMAN")
MAN = GroupKey("gender", "MAN")


def case_study_config(**overrides) -> MonitorConfig:
    kwargs = dict(
        bins=1,
        window_origin_ms=ScenarioSpec().start_ms,
        features=FEATURES,
        score_thresholds=(50000.0, 100000.0, 200000.0),
        alerts=(AlertRule("qdd", 1000.0),),
    )
    kwargs.update(overrides)
    return MonitorConfig(**kwargs)


@pytest.fixture(scope="session")
def case_study_events() -> list[PredictionEvent]:
    return list(generate(ScenarioSpec()))


@pytest.fixture(scope="session")
def case_study_truth() -> list[PredictionEvent]:
    """Same seed with the bug disabled: the candidates' true features."""
    return list(generate(ScenarioSpec(bug_days=())))


@pytest.fixture(scope="session")
def day_two(case_study_events) -> list[PredictionEvent]:
    return [e for e in case_study_events if e.event_id.startswith("d2-")]


@pytest.fixture
def config() -> MonitorConfig:
    return case_study_config()


def make_event(event_id, score, gender="WOMAN", ts_ms=0, attribution=None, **features):
    return PredictionEvent(
        event_id=event_id,
        ts_ms=ts_ms,
        score=float(score),
        groups={"gender": gender},
        features=features,
        attribution=attribution,
    )
