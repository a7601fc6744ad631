"""Chronological replay of the hybrid match-or-rerun strategy."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from ..detector import DetectorConfig, RecordedReruns, classify
from ..errors import ReplayDataError, UnlabeledRecord
from ..memory import CaseMemory
from ..symptoms import CiRun, Label, SuiteFailureRecord, Verdict, VerdictKind
from .dataset import Dataset


@dataclass(frozen=True)
class SuiteOutcome:
    run_id: str
    suite_id: str
    started_at: str
    verdict: Verdict
    ground_truth: Label
    reruns_consumed: int
    machine_time_spent_seconds: Optional[float]
    machine_time_saved_seconds: Optional[float]
    executions_saved: int
    executions_spent: int
    # cost of the same suite under the plain rerun strategy
    recorded_executions: int
    recorded_time_seconds: Optional[float]

    @property
    def predicted_flaky(self) -> bool:
        return self.verdict.kind.predicted_flaky

    @property
    def key(self) -> tuple:
        return (self.run_id, self.suite_id, self.verdict.kind, self.reruns_consumed)


@dataclass(frozen=True)
class Confusion:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @classmethod
    def from_outcomes(cls, outcomes: Sequence[SuiteOutcome]) -> Confusion:
        tp = fp = tn = fn = 0
        for o in outcomes:
            actual = o.ground_truth is Label.FLAKY
            if o.predicted_flaky:
                if actual:
                    tp += 1
                else:
                    fp += 1
            elif actual:
                fn += 1
            else:
                tn += 1
        return cls(tp, fp, tn, fn)


@dataclass
class SimulationResult:
    per_suite: tuple[SuiteOutcome, ...]
    confusion: Confusion
    config: dict
    memory: Optional[CaseMemory] = field(default=None, compare=False, repr=False)

    def verdict_sequence(self) -> list[tuple]:
        return [o.key for o in self.per_suite]


def config_summary(config: DetectorConfig, dedupe_within_suite: bool) -> dict:
    return {
        "T": config.T,
        "W": config.W,
        "K": config.K,
        "purification": config.abstraction.purification_enabled,
        "masking": config.abstraction.masking_enabled,
        "early_stop": config.early_stop,
        "dedupe_within_suite": dedupe_within_suite,
    }


def _time_sum(durations) -> Optional[float]:
    if any(d is None for d in durations):
        return None
    return math.fsum(durations)


def suite_label(suite: SuiteFailureRecord) -> Label:
    try:
        return suite.label
    except UnlabeledRecord as exc:
        raise ReplayDataError(str(exc), suite_id=suite.suite_id) from None


def make_outcome(
    suite: SuiteFailureRecord, verdict: Verdict, label: Label, K: int
) -> SuiteOutcome:
    recorded = suite.recorded_reruns[:K]
    recorded_time = _time_sum([r.duration_seconds for r in recorded])
    if verdict.kind is VerdictKind.FLAKY_BY_MATCH:
        spent_exec, spent_time = 0, 0.0
        saved_exec, saved_time = len(recorded), recorded_time
    else:
        consumed = recorded[: verdict.reruns_consumed]
        spent_exec = len(consumed)
        spent_time = _time_sum([r.duration_seconds for r in consumed])
        saved_exec, saved_time = 0, 0.0
    return SuiteOutcome(
        run_id=suite.run_id,
        suite_id=suite.suite_id,
        started_at=suite.started_at,
        verdict=verdict,
        ground_truth=label,
        reruns_consumed=verdict.reruns_consumed,
        machine_time_spent_seconds=spent_time,
        machine_time_saved_seconds=saved_time if recorded_time is not None else None,
        executions_saved=saved_exec,
        executions_spent=spent_exec,
        recorded_executions=len(recorded),
        recorded_time_seconds=recorded_time,
    )


Observer = Callable[[CiRun, CaseMemory, list, list], None]


def simulate(
    dataset: Dataset,
    config: DetectorConfig,
    *,
    dedupe_within_suite: bool = False,
    observer: Optional[Observer] = None,
) -> SimulationResult:
    """Replay every run in order, starting from an empty case memory.

    Suites of one run are all classified against the memory as it stood when
    the run started; their staged updates are merged once the run is over.
    ``observer(run, memory_at_run_start, classifications, outcomes)`` is
    called before each merge.
    """
    memory = CaseMemory(dedupe_within_suite=dedupe_within_suite)
    outcomes = []
    for run in dataset.runs:
        staged = []
        results = []
        run_outcomes = []
        for suite in run.suite_failures:
            label = suite_label(suite)
            result = classify(suite, memory, config, RecordedReruns(suite))
            results.append(result)
            if result.staged is not None:
                staged.append(result.staged)
            run_outcomes.append(make_outcome(suite, result.verdict, label, config.K))
        if observer is not None:
            observer(run, memory.snapshot(), results, run_outcomes)
        memory.merge_batch(staged)
        outcomes.extend(run_outcomes)
    return SimulationResult(
        per_suite=tuple(outcomes),
        confusion=Confusion.from_outcomes(outcomes),
        config=config_summary(config, dedupe_within_suite),
        memory=memory,
    )
