"""Continuous fairness monitoring with quantile demographic disparity."""

from .errors import FairCanaryError
from .metrics import GroupKey, QddReport, ScoreSample, qdd_per_bin
from .explanations import AttributionRecord, QddaReport, qdda
from .config import MonitorConfig, load_config
from .events import PredictionEvent
from .pipeline import Monitor, WindowReport, replay

__all__ = [
    "AttributionRecord",
    "FairCanaryError",
    "GroupKey",
    "Monitor",
    "MonitorConfig",
    "PredictionEvent",
    "QddReport",
    "QddaReport",
    "ScoreSample",
    "WindowReport",
    "load_config",
    "qdd_per_bin",
    "qdda",
    "replay",
]

__version__ = "0.1.0"
