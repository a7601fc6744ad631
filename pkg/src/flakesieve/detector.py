"""Classification of a single suite failure.

Valid symptoms are abstracted and matched against the case memory.  On a
match the failure is declared flaky without rerunning anything; otherwise
the suite is rerun up to ``K`` times and, if any rerun passes, its symptoms
are staged for the memory.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, NamedTuple, Optional, Protocol, Sequence

from .abstraction import AbstractionConfig, abstract_symptom
from .errors import ConfigError, InvalidSymptom, ReplayDataError
from .memory import CaseMemory, StagedUpdate
from .symptoms import (
    CaseFailure,
    Outcome,
    RawSymptom,
    SuiteFailureRecord,
    Verdict,
    VerdictKind,
)

NO_CASE_FAILURES = "no_case_failures"
DENYLISTED = "denylisted"
EMPTY_MESSAGE = "empty_message"


@dataclass(frozen=True)
class DenyPattern:
    source: str
    substring: bool = False
    regex: re.Pattern = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        try:
            compiled = re.compile(self.source, re.DOTALL)
        except re.error as exc:
            raise ConfigError(f"bad denylist pattern {self.source!r}: {exc}") from None
        object.__setattr__(self, "regex", compiled)

    def matches(self, message: str) -> bool:
        if self.substring:
            return self.regex.search(message) is not None
        return self.regex.fullmatch(message) is not None


class Denylist:
    """Patterns for uninformative error messages.

    Patterns are regular expressions matched against the whole message; a
    ``substr:`` prefix switches that pattern to search anywhere.
    """

    def __init__(self, patterns: Iterable = ()):
        compiled = []
        for p in patterns:
            if isinstance(p, DenyPattern):
                compiled.append(p)
            elif p.startswith("substr:"):
                compiled.append(DenyPattern(p[len("substr:"):], substring=True))
            else:
                compiled.append(DenyPattern(p))
        self.patterns: tuple[DenyPattern, ...] = tuple(compiled)

    def __len__(self):
        return len(self.patterns)

    def __iter__(self):
        return iter(self.patterns)

    def matches(self, message: str) -> bool:
        return any(p.matches(message) for p in self.patterns)

    @classmethod
    def parse(cls, lines: Iterable[str]) -> Denylist:
        patterns = []
        for line in lines:
            line = line.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            patterns.append(line)
        return cls(patterns)

    @classmethod
    def load(cls, path) -> Denylist:
        return cls.parse(Path(path).read_text(encoding="utf-8").splitlines())


class Validity(NamedTuple):
    valid: bool
    reason: Optional[str] = None

    def __bool__(self):
        return self.valid


VALID = Validity(True)


def symptom_validity(
    symptoms: Sequence[CaseFailure], denylist: Optional[Denylist] = None
) -> Validity:
    """A suite is eligible for matching only if every symptom is informative."""
    if not symptoms:
        return Validity(False, NO_CASE_FAILURES)
    for case in symptoms:
        message = case.symptom.message
        if not message.strip():
            return Validity(False, EMPTY_MESSAGE)
        if denylist is not None and denylist.matches(message):
            return Validity(False, DENYLISTED)
    return VALID


@dataclass(frozen=True)
class DetectorConfig:
    T: int = 1
    W: int = 1
    K: int = 3
    denylist: Denylist = field(default_factory=Denylist, compare=False)
    abstraction: AbstractionConfig = AbstractionConfig()
    early_stop: bool = True

    def __post_init__(self):
        for name in ("T", "W", "K"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {value!r}")
        if not isinstance(self.denylist, Denylist):
            object.__setattr__(self, "denylist", Denylist(self.denylist))

    def replace(self, **changes) -> DetectorConfig:
        values = {
            "T": self.T,
            "W": self.W,
            "K": self.K,
            "denylist": self.denylist,
            "abstraction": self.abstraction,
            "early_stop": self.early_stop,
        }
        values.update(changes)
        return DetectorConfig(**values)


class RerunExecutor(Protocol):
    def __call__(self, suite_id: str, attempt: int) -> tuple[Outcome, Optional[float]]:
        ...


class RecordedReruns:
    """Serve a suite's recorded rerun outcomes in order."""

    def __init__(self, record: SuiteFailureRecord):
        self.record = record

    def __call__(self, suite_id: str, attempt: int):
        reruns = self.record.recorded_reruns
        if attempt >= len(reruns):
            raise ReplayDataError(
                f"suite {suite_id} in run {self.record.run_id}: rerun {attempt + 1} "
                f"requested but only {len(reruns)} recorded",
                suite_id=suite_id,
            )
        rerun = reruns[attempt]
        return rerun.outcome, rerun.duration_seconds


class Classification(NamedTuple):
    verdict: Verdict
    staged: Optional[StagedUpdate]
    validity: Validity


def _rerun(
    suite: SuiteFailureRecord,
    config: DetectorConfig,
    rerun: Callable,
) -> tuple[bool, int]:
    passed = False
    consumed = 0
    for attempt in range(config.K):
        try:
            outcome, _ = rerun(suite.suite_id, attempt)
        except ReplayDataError:
            # extra reruns after a pass cannot change the verdict
            if passed and not config.early_stop:
                break
            raise
        consumed += 1
        if Outcome(outcome) is Outcome.PASS:
            passed = True
            if config.early_stop:
                break
    return passed, consumed


def classify(
    suite: SuiteFailureRecord,
    memory: CaseMemory,
    config: DetectorConfig,
    rerun: Optional[RerunExecutor] = None,
) -> Classification:
    validity = symptom_validity(suite.case_symptoms, config.denylist)
    abstracted = None
    if validity:
        abstracted = [
            (c.test_case_id, abstract_symptom(c.symptom, config.abstraction))
            for c in suite.case_symptoms
        ]
        symptoms = {s for _, s in abstracted}
        if memory.are_flakiness_symptoms(symptoms, config.T):
            counts = tuple(sorted(memory.counts(symptoms)))
            return Classification(
                Verdict(VerdictKind.FLAKY_BY_MATCH, 0, counts), None, validity
            )

    if rerun is None:
        return Classification(Verdict(VerdictKind.NEEDS_RERUN, 0), None, validity)

    passed, consumed = _rerun(suite, config, rerun)
    if not passed:
        return Classification(Verdict(VerdictKind.NON_FLAKY, consumed), None, validity)
    staged = None
    if abstracted is not None:
        staged = StagedUpdate(suite.suite_id, suite.run_id, tuple(abstracted), config.W)
    return Classification(Verdict(VerdictKind.FLAKY_BY_RERUN, consumed), staged, validity)


def check_symptoms(
    symptoms: Sequence[RawSymptom], memory: CaseMemory, config: DetectorConfig
) -> tuple[bool, list[tuple[str, int]]]:
    """Match bare symptoms without rerun support; used by the ``check`` command."""
    cases = [CaseFailure(str(i), s) for i, s in enumerate(symptoms)]
    validity = symptom_validity(cases, config.denylist)
    if not validity:
        raise InvalidSymptom(validity.reason)
    abstracted = {abstract_symptom(s, config.abstraction) for s in symptoms}
    counts = sorted(memory.counts(abstracted))
    return memory.are_flakiness_symptoms(abstracted, config.T), counts
