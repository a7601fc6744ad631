"""Domain types: symptoms, suite failures, CI runs and verdicts.

Every type here is a frozen dataclass so values can be shared freely between
threads and used as dictionary keys.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Optional

from .errors import UnlabeledRecord


class Outcome(str, enum.Enum):
    PASS = "pass"
    FAIL = "fail"


class Label(str, enum.Enum):
    FLAKY = "flaky"
    NON_FLAKY = "non_flaky"


class VerdictKind(str, enum.Enum):
    FLAKY_BY_MATCH = "flaky_by_match"
    FLAKY_BY_RERUN = "flaky_by_rerun"
    NON_FLAKY = "non_flaky"
    # returned when matching fails and nobody can execute reruns
    NEEDS_RERUN = "needs_rerun"

    @property
    def predicted_flaky(self) -> bool:
        """Only symptom matches count as a positive prediction."""
        return self is VerdictKind.FLAKY_BY_MATCH


@dataclass(frozen=True)
class StackFrame:
    file: str
    function: str

    def __post_init__(self):
        if not self.file or not self.function:
            raise ValueError(f"stack frame needs file and function: {self!r}")


@dataclass(frozen=True)
class RawSymptom:
    """Stack trace text and error message of one failed test case.

    A blank message is representable; it is rejected by symptom validation
    and by abstraction, not at construction time.
    """

    trace_text: str
    message: str


@dataclass(frozen=True, eq=False)
class AbstractedSymptom:
    """Purified frames plus masked message; identity is the canonical text."""

    frames: tuple[StackFrame, ...]
    masked_message: str
    canonical: str = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        object.__setattr__(
            self, "canonical", canonical_text(self.frames, self.masked_message)
        )

    def __eq__(self, other):
        if not isinstance(other, AbstractedSymptom):
            return NotImplemented
        return self.canonical == other.canonical

    def __hash__(self):
        return hash(self.canonical)


def canonical_text(frames, masked_message: str) -> str:
    """Serialize a symptom: ``[callstack]`` frame lines, then ``[message]``."""
    lines = ["[callstack]"]
    lines.extend(f"{f.file},{f.function}" for f in frames)
    lines.append("[message]")
    lines.append(masked_message)
    return "\n".join(lines)


@dataclass(frozen=True)
class Rerun:
    outcome: Outcome
    duration_seconds: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "outcome", Outcome(self.outcome))

    @property
    def passed(self) -> bool:
        return self.outcome is Outcome.PASS


@dataclass(frozen=True)
class CaseFailure:
    test_case_id: str
    symptom: RawSymptom


@dataclass(frozen=True)
class SuiteFailureRecord:
    run_id: str
    suite_id: str
    started_at: str
    case_symptoms: tuple[CaseFailure, ...] = ()
    recorded_reruns: tuple[Rerun, ...] = ()
    initial_failure_duration_seconds: float = 0.0

    @property
    def label(self) -> Label:
        return ground_truth_label(self)


@dataclass(frozen=True)
class CiRun:
    run_id: str
    started_at: str
    suite_failures: tuple[SuiteFailureRecord, ...] = ()

    def __post_init__(self):
        for suite in self.suite_failures:
            if suite.run_id != self.run_id:
                raise ValueError(
                    f"suite {suite.suite_id} belongs to run {suite.run_id}, "
                    f"not {self.run_id}"
                )

    @property
    def sort_key(self) -> tuple[datetime, str]:
        return parse_timestamp(self.started_at), self.run_id


@dataclass(frozen=True)
class Verdict:
    kind: VerdictKind
    reruns_consumed: int = 0
    matched_counts: Optional[tuple[tuple[str, int], ...]] = None


def ground_truth_label(record: SuiteFailureRecord) -> Label:
    """Flaky iff at least one recorded rerun passed."""
    if not record.recorded_reruns:
        raise UnlabeledRecord(
            f"suite {record.suite_id} in run {record.run_id} has no recorded reruns"
        )
    if any(r.passed for r in record.recorded_reruns):
        return Label.FLAKY
    return Label.NON_FLAKY


def parse_timestamp(text: str) -> datetime:
    """Parse an ISO-8601 timestamp; naive values are taken as UTC."""
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    value = datetime.fromisoformat(text)
    if value.tzinfo is None:
        return value.replace(tzinfo=timezone.utc)
    return value.astimezone(timezone.utc)


def normalize_timestamp(text: str) -> str:
    value = parse_timestamp(text)
    if value.microsecond:
        return value.strftime("%Y-%m-%dT%H:%M:%S.%fZ")
    return value.strftime("%Y-%m-%dT%H:%M:%SZ")
