"""Historical CI datasets: the JSON Lines schema, ingestion and filtering."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional

from ..detector import NO_CASE_FAILURES, Denylist, symptom_validity
from ..errors import IngestError
from ..symptoms import (
    CaseFailure,
    CiRun,
    Label,
    RawSymptom,
    Rerun,
    SuiteFailureRecord,
    normalize_timestamp,
)

NO_RERUNS = "no_reruns"
STRATA = ("all_failed", "with_case_failures", "with_valid_symptoms")


@dataclass
class ExclusionSummary:
    """Suite counts per filtering stratum, split by label, plus exclusion reasons."""

    strata: dict = field(
        default_factory=lambda: {s: Counter() for s in STRATA}
    )
    excluded: Counter = field(default_factory=Counter)

    def add(self, label: Optional[Label], reason: Optional[str]) -> None:
        key = label.value if label is not None else "unlabeled"
        self.strata["all_failed"][key] += 1
        if reason != NO_CASE_FAILURES:
            self.strata["with_case_failures"][key] += 1
        if reason is None:
            self.strata["with_valid_symptoms"][key] += 1
        else:
            self.excluded[reason] += 1

    def to_dict(self) -> dict:
        return {
            "strata": {
                name: {
                    "total": sum(c.values()),
                    "flaky": c.get("flaky", 0),
                    "non_flaky": c.get("non_flaky", 0),
                    "unlabeled": c.get("unlabeled", 0),
                }
                for name, c in self.strata.items()
            },
            "excluded": dict(sorted(self.excluded.items())),
        }


@dataclass
class Dataset:
    runs: tuple[CiRun, ...]
    provenance: dict = field(default_factory=dict)
    exclusions: Optional[ExclusionSummary] = None

    @classmethod
    def from_runs(cls, runs: Iterable[CiRun], **kwargs) -> Dataset:
        return cls(tuple(sorted(runs, key=lambda r: r.sort_key)), **kwargs)

    def suites(self) -> Iterator[SuiteFailureRecord]:
        for run in self.runs:
            yield from run.suite_failures

    def __len__(self):
        return sum(len(r.suite_failures) for r in self.runs)

    def flaky_proportion(self) -> Optional[float]:
        labels = [s.label for s in self.suites()]
        if not labels:
            return None
        return sum(1 for x in labels if x is Label.FLAKY) / len(labels)


def _require(obj, key, kind, line_number, where):
    if not isinstance(obj, dict) or key not in obj:
        raise IngestError(f"{where}: missing '{key}'", line_number)
    value = obj[key]
    if kind is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    else:
        ok = isinstance(value, kind)
    if not ok:
        raise IngestError(f"{where}: '{key}' has wrong type", line_number)
    return value


def _duration(value, line_number, where) -> Optional[float]:
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)) or value < 0:
        raise IngestError(f"{where}: bad duration {value!r}", line_number)
    return float(value)


def parse_run(doc, line_number: Optional[int] = None) -> CiRun:
    """Build a run from one decoded JSON line."""
    if not isinstance(doc, dict):
        raise IngestError("run must be a JSON object", line_number)
    run_id = _require(doc, "run_id", str, line_number, "run")
    started_raw = _require(doc, "started_at", str, line_number, f"run {run_id}")
    try:
        started_at = normalize_timestamp(started_raw)
    except ValueError:
        raise IngestError(f"run {run_id}: bad timestamp {started_raw!r}", line_number)
    suites = []
    seen = set()
    for s in _require(doc, "suites", list, line_number, f"run {run_id}"):
        suite_id = _require(s, "suite_id", str, line_number, f"run {run_id} suite")
        where = f"run {run_id} suite {suite_id}"
        if suite_id in seen:
            raise IngestError(f"{where}: duplicate suite id", line_number)
        seen.add(suite_id)
        cases = []
        for c in _require(s, "cases", list, line_number, where):
            cases.append(
                CaseFailure(
                    _require(c, "test_case_id", str, line_number, where),
                    RawSymptom(
                        _require(c, "trace", str, line_number, where),
                        _require(c, "message", str, line_number, where),
                    ),
                )
            )
        reruns = []
        for r in _require(s, "reruns", list, line_number, where):
            outcome = _require(r, "outcome", str, line_number, where)
            if outcome not in ("pass", "fail"):
                raise IngestError(f"{where}: bad rerun outcome {outcome!r}", line_number)
            reruns.append(Rerun(outcome, _duration(r.get("duration_seconds"), line_number, where)))
        initial = s.get("initial_failure_duration_seconds", 0.0)
        suites.append(
            SuiteFailureRecord(
                run_id=run_id,
                suite_id=suite_id,
                started_at=started_at,
                case_symptoms=tuple(cases),
                recorded_reruns=tuple(reruns),
                initial_failure_duration_seconds=_duration(initial, line_number, where) or 0.0,
            )
        )
    return CiRun(run_id, started_at, tuple(suites))


def run_to_dict(run: CiRun) -> dict:
    return {
        "run_id": run.run_id,
        "started_at": run.started_at,
        "suites": [
            {
                "suite_id": s.suite_id,
                "initial_failure_duration_seconds": s.initial_failure_duration_seconds,
                "cases": [
                    {
                        "test_case_id": c.test_case_id,
                        "trace": c.symptom.trace_text,
                        "message": c.symptom.message,
                    }
                    for c in s.case_symptoms
                ],
                "reruns": [
                    {"outcome": r.outcome.value, "duration_seconds": r.duration_seconds}
                    for r in s.recorded_reruns
                ],
            }
            for s in run.suite_failures
        ],
    }


def write_dataset(dataset: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fp:
        for run in dataset.runs:
            fp.write(json.dumps(run_to_dict(run), ensure_ascii=False))
            fp.write("\n")


def read_runs(path) -> list[CiRun]:
    runs = []
    with open(path, encoding="utf-8") as fp:
        for number, line in enumerate(fp, 1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestError(f"invalid JSON ({exc.msg})", number) from None
            runs.append(parse_run(doc, number))
    return runs


def filter_runs(runs: Iterable[CiRun], denylist: Optional[Denylist] = None):
    """Keep suites with case failures, valid symptoms and recorded reruns."""
    summary = ExclusionSummary()
    kept = []
    for run in runs:
        suites = []
        for suite in run.suite_failures:
            label = suite.label if suite.recorded_reruns else None
            validity = symptom_validity(suite.case_symptoms, denylist)
            reason = validity.reason
            if reason is None and label is None:
                reason = NO_RERUNS
            summary.add(label, reason)
            if reason is None:
                suites.append(suite)
        kept.append(CiRun(run.run_id, run.started_at, tuple(suites)))
    return kept, summary


def ingest(path, denylist: Optional[Denylist] = None) -> Dataset:
    """Read a dataset file, order runs by start time and drop ineligible suites."""
    runs = read_runs(path)
    ids = Counter(r.run_id for r in runs)
    dupes = sorted(k for k, v in ids.items() if v > 1)
    if dupes:
        raise IngestError(f"duplicate run ids: {', '.join(dupes[:5])}")
    kept, summary = filter_runs(runs, denylist)
    return Dataset.from_runs(
        kept, provenance={"source": str(Path(path))}, exclusions=summary
    )


__all__ = [
    "Dataset",
    "ExclusionSummary",
    "filter_runs",
    "ingest",
    "parse_run",
    "read_runs",
    "run_to_dict",
    "write_dataset",
]
