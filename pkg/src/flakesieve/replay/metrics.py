"""Detection accuracy and rerun-resource savings of a replay."""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass
from datetime import date, timedelta
from typing import NamedTuple, Optional

from ..errors import SavingsUnavailable
from ..symptoms import parse_timestamp
from .simulate import SimulationResult

MOVING_AVERAGE_DAYS = 14


class Metrics(NamedTuple):
    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]
    baseline_precision: Optional[float]


def compute_metrics(result: SimulationResult) -> Metrics:
    """Flaky is the positive class; ``None`` marks an undefined ratio."""
    c = result.confusion
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp else None
    recall = c.tp / (c.tp + c.fn) if c.tp + c.fn else None
    if precision is None or recall is None or precision + recall == 0:
        f1 = None
    else:
        f1 = 2 * precision * recall / (precision + recall)
    baseline = (c.tp + c.fn) / c.total if c.total else None
    return Metrics(precision, recall, f1, baseline)


def _ratio(num, den) -> Optional[float]:
    return num / den if den else None


@dataclass(frozen=True)
class DayPoint:
    day: date
    suites: int
    executions_total: int
    executions_saved: int
    time_total_seconds: Optional[float]
    time_saved_seconds: Optional[float]

    @property
    def executions_saved_pct(self) -> Optional[float]:
        return _ratio(self.executions_saved, self.executions_total)

    @property
    def time_saved_pct(self) -> Optional[float]:
        if self.time_total_seconds is None:
            return None
        return _ratio(self.time_saved_seconds, self.time_total_seconds)


@dataclass(frozen=True)
class Savings:
    """Rerun cost avoided by symptom matches, relative to always rerunning.

    Percentages are fractions in ``[0, 1]``.  Reruns skipped by stopping at
    the first pass are reported separately and are not part of the headline
    figures.
    """

    executions_total: int
    executions_saved: int
    executions_spent: int
    time_total_seconds: Optional[float]
    time_saved_seconds: Optional[float]
    time_spent_seconds: Optional[float]
    early_stop_executions_saved: int
    early_stop_time_saved_seconds: Optional[float]
    per_day: tuple[DayPoint, ...]
    moving_average: tuple[tuple[date, Optional[float], Optional[float]], ...]

    @property
    def time_available(self) -> bool:
        return self.time_total_seconds is not None

    @property
    def executions_saved_pct(self) -> Optional[float]:
        return _ratio(self.executions_saved, self.executions_total)

    @property
    def machine_time_saved_pct(self) -> Optional[float]:
        if not self.time_available:
            raise SavingsUnavailable("some evaluable suites lack rerun durations")
        return _ratio(self.time_saved_seconds, self.time_total_seconds)

    def to_dict(self) -> dict:
        time_ok = self.time_available
        return {
            "executions_total": self.executions_total,
            "executions_saved": self.executions_saved,
            "executions_spent": self.executions_spent,
            "executions_saved_pct": self.executions_saved_pct,
            "machine_time_total_seconds": self.time_total_seconds,
            "machine_time_saved_seconds": self.time_saved_seconds,
            "machine_time_spent_seconds": self.time_spent_seconds,
            "machine_time_saved_pct": self.machine_time_saved_pct if time_ok else None,
            "early_stop_executions_saved": self.early_stop_executions_saved,
            "early_stop_time_saved_seconds": self.early_stop_time_saved_seconds,
            "per_day": [
                {
                    "date": p.day.isoformat(),
                    "suites": p.suites,
                    "executions_total": p.executions_total,
                    "executions_saved": p.executions_saved,
                    "executions_saved_pct": p.executions_saved_pct,
                    "machine_time_total_seconds": p.time_total_seconds,
                    "machine_time_saved_seconds": p.time_saved_seconds,
                    "machine_time_saved_pct": p.time_saved_pct,
                }
                for p in self.per_day
            ],
            "moving_average_14d": [
                {
                    "date": d.isoformat(),
                    "executions_saved_pct": e,
                    "machine_time_saved_pct": t,
                }
                for d, e, t in self.moving_average
            ],
        }


def _sum_or_none(values):
    values = list(values)
    if any(v is None for v in values):
        return None
    return math.fsum(values)


def _mean(values):
    values = [v for v in values if v is not None]
    return math.fsum(values) / len(values) if values else None


def moving_average(points, window_days: int = MOVING_AVERAGE_DAYS):
    """Trailing mean of daily percentages over ``window_days`` calendar days."""
    out = []
    for i, p in enumerate(points):
        lo = p.day - timedelta(days=window_days - 1)
        window = [q for q in points[: i + 1] if q.day >= lo]
        out.append(
            (
                p.day,
                _mean(q.executions_saved_pct for q in window),
                _mean(q.time_saved_pct for q in window),
            )
        )
    return tuple(out)


def compute_savings(result: SimulationResult) -> Savings:
    outcomes = result.per_suite
    by_day = OrderedDict()
    for o in outcomes:
        by_day.setdefault(parse_timestamp(o.started_at).date(), []).append(o)

    per_day = []
    for day in sorted(by_day):
        group = by_day[day]
        per_day.append(
            DayPoint(
                day=day,
                suites=len(group),
                executions_total=sum(o.recorded_executions for o in group),
                executions_saved=sum(o.executions_saved for o in group),
                time_total_seconds=_sum_or_none(o.recorded_time_seconds for o in group),
                time_saved_seconds=_sum_or_none(o.machine_time_saved_seconds for o in group),
            )
        )

    time_total = _sum_or_none(o.recorded_time_seconds for o in outcomes)
    time_saved = _sum_or_none(o.machine_time_saved_seconds for o in outcomes)
    time_spent = _sum_or_none(o.machine_time_spent_seconds for o in outcomes)
    early_exec = sum(
        o.recorded_executions - o.executions_spent
        for o in outcomes
        if not o.predicted_flaky
    )
    early_time = None
    if time_total is None:
        time_saved = time_spent = None
    else:
        early_time = math.fsum(
            o.recorded_time_seconds - o.machine_time_spent_seconds
            for o in outcomes
            if not o.predicted_flaky
        )
    return Savings(
        executions_total=sum(o.recorded_executions for o in outcomes),
        executions_saved=sum(o.executions_saved for o in outcomes),
        executions_spent=sum(o.executions_spent for o in outcomes),
        time_total_seconds=time_total,
        time_saved_seconds=time_saved,
        time_spent_seconds=time_spent,
        early_stop_executions_saved=early_exec,
        early_stop_time_saved_seconds=early_time,
        per_day=tuple(per_day),
        moving_average=moving_average(per_day),
    )
