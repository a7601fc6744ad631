"""Exception hierarchy shared by every flakesieve module."""


class FlakeSieveError(Exception):
    """Base class for all errors raised by this package."""


class UnlabeledRecord(FlakeSieveError):
    """A suite failure has no recorded reruns, so no ground truth exists."""


class InvalidSymptom(FlakeSieveError):
    """A symptom cannot be abstracted (e.g. its message is blank)."""


class EmptySymptomSet(FlakeSieveError):
    """The matching predicate was asked about zero symptoms."""


class ConfigError(FlakeSieveError):
    """Bad configuration: malformed denylist pattern, out-of-range T/W/K, ..."""


class MemoryFormatError(FlakeSieveError):
    """The case-memory file is unreadable, corrupt, or of an unknown version."""

    def __init__(self, message, version=None):
        super().__init__(message)
        self.version = version


class ReplayDataError(FlakeSieveError):
    """Recorded data cannot answer a question the replay needs answered."""

    def __init__(self, message, suite_id=None):
        super().__init__(message)
        self.suite_id = suite_id


class IngestError(FlakeSieveError):
    """A dataset file violates the JSON Lines schema."""

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class SavingsUnavailable(FlakeSieveError):
    """Machine-time savings cannot be computed because durations are missing."""


class SpecError(FlakeSieveError):
    """A synthetic-dataset specification is infeasible."""
