"""
Seeded generator for the job-seeker salary case study.

Each day draws candidates from fixed categorical splits and truncated-normal
experience, scores them with a linear salary model and attaches exact linear
attributions. On bug days every woman's education is recorded as GRAD before
scoring, which removes the post-graduate premium from their salaries.

Draws never depend on the bug schedule, so runs that differ only in
``bug_days`` describe the same candidates.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any, Iterator, Mapping, TextIO

import numpy as np
from scipy.stats import truncnorm

from .config import DAY_MS
from .errors import ConfigError
from .events import PredictionEvent, write_events
from .explanations import linear_attributor, linear_predict

__all__ = [
    "CandidateFeatures",
    "ScenarioSpec",
    "SALARY_COEFFICIENTS",
    "SALARY_INTERCEPT",
    "FEATURES",
    "encode",
    "sample_candidates",
    "sample_candidate",
    "salary",
    "apply_bug",
    "generate",
    "write_scenario",
]

SALARY_INTERCEPT = 50_000.0
SALARY_COEFFICIENTS = {
    "location": 20_000.0,
    "education": 20_000.0,
    "relevant_experience": 5_000.0,
    "experience": 100.0,
    "engineer_type": 10_000.0,
}
FEATURES = tuple(SALARY_COEFFICIENTS)

LOCATIONS = ("Springfield", "Centerville")
EDUCATIONS = ("GRAD", "POST_GRAD")
ENGINEER_TYPES = ("Software", "Hardware")
GENDERS = ("MAN", "WOMAN")


@dataclass(frozen=True)
class CandidateFeatures:
    location: str
    education: str
    engineer_type: str
    experience: float
    relevant_experience: float
    gender: str

    def as_event_features(self) -> dict[str, Any]:
        return {
            "location": self.location,
            "education": self.education,
            "engineer_type": self.engineer_type,
            "experience": self.experience,
            "relevant_experience": self.relevant_experience,
        }


@dataclass(frozen=True)
class ScenarioSpec:
    """Case-study knobs. Split fractions are for the first listed category."""

    events_per_day: int = 20_000
    days: int = 3
    seed: int = 42
    bug_days: tuple[int, ...] = (2,)
    location_split: float = 0.70  # Springfield
    education_split: float = 0.80  # GRAD
    engineer_split: float = 0.85  # Software
    gender_split: float = 0.50  # MAN
    experience_mean: float = 15.0
    experience_sd: float = 10.0
    experience_range: tuple[float, float] = (0.0, 50.0)
    start_ms: int = 1_609_459_200_000  # 2021-01-01T00:00:00Z
    # category encoded as 1 for each binary feature
    encodings: Mapping[str, str] = field(
        default_factory=lambda: {
            "location": "Springfield",
            "education": "POST_GRAD",
            "engineer_type": "Software",
        }
    )
    baseline: Mapping[str, float] = field(
        default_factory=lambda: {f: 0.0 for f in SALARY_COEFFICIENTS}
    )

    def __post_init__(self) -> None:
        if self.events_per_day < 1:
            raise ConfigError("events_per_day must be positive")
        if self.days < 0:
            raise ConfigError("days must be non-negative")
        for name in ("location_split", "education_split", "engineer_split", "gender_split"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        lo, hi = self.experience_range
        if not lo < hi or self.experience_sd <= 0:
            raise ConfigError("experience range must be non-empty and sd positive")
        allowed = {"location": LOCATIONS, "education": EDUCATIONS, "engineer_type": ENGINEER_TYPES}
        for feat, one in self.encodings.items():
            if feat not in allowed or one not in allowed[feat]:
                raise ConfigError(f"bad encoding {feat}={one}")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ScenarioSpec":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown scenario key(s): {', '.join(unknown)}")
        kwargs = dict(data)
        if "bug_days" in kwargs:
            kwargs["bug_days"] = tuple(int(d) for d in kwargs["bug_days"] or ())
        if "experience_range" in kwargs:
            kwargs["experience_range"] = tuple(float(v) for v in kwargs["experience_range"])
        if "encodings" in kwargs:
            merged = dict(cls().encodings)
            merged.update(kwargs["encodings"])
            kwargs["encodings"] = merged
        return cls(**kwargs)


def encode(features: Mapping[str, Any], spec: ScenarioSpec | None = None) -> dict[str, float]:
    """Model inputs: binary categoricals as 0/1, experience as-is."""
    spec = spec or ScenarioSpec()
    out = {}
    for name in SALARY_COEFFICIENTS:
        value = features[name]
        if name in spec.encodings:
            out[name] = 1.0 if value == spec.encodings[name] else 0.0
        else:
            out[name] = float(value)
    return out


def _truncated_normal(rng: np.random.Generator, n: int, spec: ScenarioSpec) -> np.ndarray:
    lo, hi = spec.experience_range
    mu, sd = spec.experience_mean, spec.experience_sd
    return truncnorm.rvs((lo - mu) / sd, (hi - mu) / sd, loc=mu, scale=sd, size=n, random_state=rng)


def sample_candidates(rng: np.random.Generator, n: int, spec: ScenarioSpec) -> dict[str, np.ndarray]:
    """Column-wise draws for ``n`` candidates."""
    cols = {
        "location": np.where(rng.random(n) < spec.location_split, *LOCATIONS),
        "education": np.where(rng.random(n) < spec.education_split, *EDUCATIONS),
        "engineer_type": np.where(rng.random(n) < spec.engineer_split, *ENGINEER_TYPES),
        "gender": np.where(rng.random(n) < spec.gender_split, *GENDERS),
    }
    experience = _truncated_normal(rng, n, spec)
    relevant = _truncated_normal(rng, n, spec)
    cols["experience"] = experience
    cols["relevant_experience"] = np.minimum(relevant, experience)
    return cols


def _row(cols: Mapping[str, np.ndarray], i: int) -> CandidateFeatures:
    return CandidateFeatures(
        location=str(cols["location"][i]),
        education=str(cols["education"][i]),
        engineer_type=str(cols["engineer_type"][i]),
        experience=float(cols["experience"][i]),
        relevant_experience=float(cols["relevant_experience"][i]),
        gender=str(cols["gender"][i]),
    )


def sample_candidate(rng: np.random.Generator, spec: ScenarioSpec | None = None) -> CandidateFeatures:
    return _row(sample_candidates(rng, 1, spec or ScenarioSpec()), 0)


def salary(features: CandidateFeatures | Mapping[str, Any], spec: ScenarioSpec | None = None) -> float:
    if isinstance(features, CandidateFeatures):
        features = features.as_event_features()
    return linear_predict(SALARY_COEFFICIENTS, SALARY_INTERCEPT, encode(features, spec))


def apply_bug(
    features: CandidateFeatures, day: int, spec: ScenarioSpec | None = None
) -> CandidateFeatures:
    """On a bug day, record every woman as GRAD; anything else passes through."""
    spec = spec or ScenarioSpec()
    if day in spec.bug_days and features.gender == "WOMAN":
        return dataclasses.replace(features, education="GRAD")
    return features


def generate(spec: ScenarioSpec | None = None) -> Iterator[PredictionEvent]:
    spec = spec or ScenarioSpec()
    rng = np.random.default_rng(spec.seed)
    width = len(str(spec.events_per_day - 1))
    n = spec.events_per_day
    for day in range(1, spec.days + 1):
        cols = sample_candidates(rng, n, spec)
        day_start = spec.start_ms + (day - 1) * DAY_MS
        for i in range(n):
            cand = apply_bug(_row(cols, i), day, spec)
            feats = cand.as_event_features()
            encoded = encode(feats, spec)
            event_id = f"d{day}-{i:0{width}d}"
            record = linear_attributor(
                SALARY_COEFFICIENTS, SALARY_INTERCEPT, spec.baseline, encoded, event_id
            )
            yield PredictionEvent(
                event_id=event_id,
                ts_ms=day_start + (i * DAY_MS) // n,
                score=linear_predict(SALARY_COEFFICIENTS, SALARY_INTERCEPT, encoded),
                groups={"gender": cand.gender},
                features=feats,
                attribution=record,
            )


def write_scenario(spec: ScenarioSpec, fh: TextIO) -> int:
    return write_events(generate(spec), fh)
