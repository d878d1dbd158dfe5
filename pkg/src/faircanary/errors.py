"""Exception hierarchy shared by every faircanary module."""

from __future__ import annotations


class FairCanaryError(Exception):
    """Base class for all data / contract errors raised by faircanary."""


class EmptySample(FairCanaryError, ValueError):
    pass


class InvalidBinCount(FairCanaryError, ValueError):
    pass


class TooManyBins(InvalidBinCount):
    pass


class UnequalSizes(FairCanaryError, ValueError):
    pass


class MismatchedReports(FairCanaryError, ValueError):
    pass


class ConditionEmptiesGroup(FairCanaryError, ValueError):
    def __init__(self, group: object, condition: object = None):
        self.group = group
        self.condition = condition
        super().__init__(f"condition {condition!r} leaves group {group} empty")


class MissingAttribution(FairCanaryError, ValueError):
    def __init__(self, event_id: str):
        self.event_id = event_id
        super().__init__(f"event {event_id!r} carries no attribution record")


class MixedBaselines(FairCanaryError, ValueError):
    pass


class MixedMethods(FairCanaryError, ValueError):
    pass


class MissingFeature(FairCanaryError, KeyError):
    def __init__(self, feature: str):
        self.feature = feature
        super().__init__(feature)

    def __str__(self) -> str:
        return f"missing feature {self.feature!r}"


class EfficiencyViolation(FairCanaryError, ValueError):
    pass


class UndefinedRatio(FairCanaryError, ZeroDivisionError):
    """Disparate impact with a zero privileged pass rate."""


class UnknownEventId(FairCanaryError, KeyError):
    def __init__(self, event_id: str):
        self.event_id = event_id
        super().__init__(event_id)

    def __str__(self) -> str:
        return f"unknown event id {self.event_id!r}"


class SchemaViolation(FairCanaryError, ValueError):
    pass


class ClosedWindow(FairCanaryError):
    def __init__(self, window_id: int):
        self.window_id = window_id
        super().__init__(f"window {window_id} is closed")


class DuplicateEvent(FairCanaryError):
    def __init__(self, event_id: str, window_id: int):
        self.event_id = event_id
        self.window_id = window_id
        super().__init__(f"event {event_id!r} already ingested into window {window_id}")


class EmptyGroupInWindow(FairCanaryError):
    def __init__(self, window_id: int, group: object):
        self.window_id = window_id
        self.group = group
        super().__init__(f"group {group} has no events in window {window_id}")


class ParseError(FairCanaryError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class ConfigError(FairCanaryError):
    pass
