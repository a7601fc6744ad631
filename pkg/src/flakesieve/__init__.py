"""Just-in-time flaky failure detection by matching abstracted symptoms."""

from .abstraction import (
    AbstractionConfig,
    abstract_symptom,
    mask_numbers,
    parse_stack_trace,
    purify,
    qualifying_token_count,
)
from .detector import Denylist, DetectorConfig, RecordedReruns, classify, symptom_validity
from .errors import *  # noqa: F401,F403
from .memory import CaseMemory, MemoryEntry, StagedUpdate
from .symptoms import (
    AbstractedSymptom,
    CaseFailure,
    CiRun,
    Label,
    Outcome,
    RawSymptom,
    Rerun,
    StackFrame,
    SuiteFailureRecord,
    Verdict,
    VerdictKind,
    ground_truth_label,
)

__version__ = "0.1.0"
