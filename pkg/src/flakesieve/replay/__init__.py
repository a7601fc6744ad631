"""Replay of historical (or synthetic) CI data through the detector."""

from .dataset import Dataset, ExclusionSummary, ingest, write_dataset
from .metrics import Metrics, Savings, compute_metrics, compute_savings
from .reference import reference_simulate
from .simulate import Confusion, SimulationResult, SuiteOutcome, simulate
from .sweep import (
    ABLATION_SETTINGS,
    SweepCell,
    sweep,
    unique_symptom_stats,
    write_sweep_csv,
)
from .synthetic import SyntheticSpec, generate_synthetic

__all__ = [
    "ABLATION_SETTINGS",
    "Confusion",
    "Dataset",
    "ExclusionSummary",
    "Metrics",
    "Savings",
    "SimulationResult",
    "SuiteOutcome",
    "SweepCell",
    "SyntheticSpec",
    "compute_metrics",
    "compute_savings",
    "generate_synthetic",
    "ingest",
    "reference_simulate",
    "simulate",
    "sweep",
    "unique_symptom_stats",
    "write_dataset",
    "write_sweep_csv",
]
