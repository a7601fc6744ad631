"""Hyperparameter sweeps, abstraction ablations and unique-symptom counts."""

from __future__ import annotations

import csv
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from ..abstraction import abstract_symptom
from ..detector import DetectorConfig
from ..errors import SavingsUnavailable
from .dataset import Dataset
from .metrics import Metrics, Savings, compute_metrics, compute_savings
from .simulate import SimulationResult, simulate

DEFAULT_RANGE = tuple(range(1, 7))
# (purification, masking), in the order: none, purify only, mask only, both
ABLATION_SETTINGS = ((False, False), (True, False), (False, True), (True, True))
FULL_ABSTRACTION = ((True, True),)

CSV_COLUMNS = (
    "T",
    "W",
    "purification",
    "masking",
    "precision",
    "recall",
    "f1",
    "time_saved_pct",
    "exec_saved_pct",
)


@dataclass(frozen=True)
class SweepCell:
    T: int
    W: int
    purification: bool
    masking: bool
    metrics: Metrics
    savings: Savings
    result: Optional[SimulationResult] = None

    @property
    def key(self) -> tuple[int, int, bool, bool]:
        return self.T, self.W, self.purification, self.masking

    def csv_row(self) -> list:
        try:
            time_pct = self.savings.machine_time_saved_pct
        except SavingsUnavailable:
            time_pct = None
        values = [
            self.T,
            self.W,
            int(self.purification),
            int(self.masking),
            self.metrics.precision,
            self.metrics.recall,
            self.metrics.f1,
            time_pct,
            self.savings.executions_saved_pct,
        ]
        return ["" if v is None else v for v in values]


def cell_config(base: DetectorConfig, T: int, W: int, setting) -> DetectorConfig:
    purification, masking = setting
    return base.replace(T=T, W=W, abstraction=base.abstraction.with_setting(purification, masking))


def _run_cell(args) -> SweepCell:
    dataset, config, dedupe, keep = args
    result = simulate(dataset, config, dedupe_within_suite=dedupe)
    return SweepCell(
        T=config.T,
        W=config.W,
        purification=config.abstraction.purification_enabled,
        masking=config.abstraction.masking_enabled,
        metrics=compute_metrics(result),
        savings=compute_savings(result),
        result=result if keep else None,
    )


def sweep(
    dataset: Dataset,
    T_values: Sequence[int] = DEFAULT_RANGE,
    W_values: Sequence[int] = DEFAULT_RANGE,
    ablation_settings: Sequence[tuple[bool, bool]] = FULL_ABSTRACTION,
    base: Optional[DetectorConfig] = None,
    *,
    dedupe_within_suite: bool = False,
    keep_results: bool = False,
    jobs: int = 1,
) -> dict[tuple[int, int, bool, bool], SweepCell]:
    """Replay once per (T, W, purification, masking), each from an empty memory."""
    if not T_values or not W_values or not ablation_settings:
        raise ValueError("sweep needs at least one value per axis")
    base = base or DetectorConfig()
    tasks = [
        (dataset, cell_config(base, T, W, setting), dedupe_within_suite, keep_results)
        for setting, T, W in itertools.product(ablation_settings, T_values, W_values)
    ]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_run_cell, tasks))
    else:
        cells = [_run_cell(t) for t in tasks]
    return {cell.key: cell for cell in cells}


def write_sweep_csv(cells: Iterable[SweepCell], fp) -> None:
    writer = csv.writer(fp, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for cell in sorted(cells, key=lambda c: (not c.purification, not c.masking, c.T, c.W)):
        writer.writerow(cell.csv_row())


@dataclass(frozen=True)
class SymptomStats:
    unique_count: int
    mean_length_chars: Optional[float]
    symptom_count: int


def unique_symptom_stats(
    dataset: Dataset,
    ablation_settings: Sequence[tuple[bool, bool]] = ABLATION_SETTINGS,
    base: Optional[DetectorConfig] = None,
) -> dict[tuple[bool, bool], SymptomStats]:
    """Distinct canonical symptoms and their mean length under each setting.

    Every test-case symptom with a non-blank message is counted; the mean
    length is taken over all symptom occurrences.
    """
    base = base or DetectorConfig()
    raws = [
        case.symptom
        for suite in dataset.suites()
        for case in suite.case_symptoms
        if case.symptom.message.strip()
    ]
    stats = {}
    for setting in ablation_settings:
        config = base.abstraction.with_setting(*setting)
        canon = [abstract_symptom(raw, config).canonical for raw in raws]
        mean = math.fsum(len(c) for c in canon) / len(canon) if canon else None
        stats[tuple(setting)] = SymptomStats(len(set(canon)), mean, len(canon))
    return stats
