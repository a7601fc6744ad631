"""Symptom abstraction: stack-trace purification and number masking.

A raw symptom (traceback text plus error message) is reduced to the
``(file, function)`` pairs of its call frames, minus the leading frames that
belong to the test harness, and an error message whose numbers are replaced
with ``#``.  The two parts are joined into a canonical text that serves as the
case-memory key.
"""

from __future__ import annotations

import functools
import itertools
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ConfigError, InvalidSymptom
from .symptoms import AbstractedSymptom, RawSymptom, StackFrame, canonical_text

__all__ = [
    "AbstractionConfig",
    "abstract_symptom",
    "canonical_text",
    "load_entry_points",
    "mask_numbers",
    "parse_stack_trace",
    "purify",
    "qualifying_token_count",
]

# `File "path", line 12, in func` as printed by CPython, and the unquoted,
# comma-less variant `File path line 12, in func` found in some harness logs.
_FRAME_HEADER = re.compile(
    r"""^\s*File\s+
        (?:"(?P<quoted>[^"]+)"|(?P<bare>\S+?))
        ,?\s+line\s+\d+\s*,\s*in\s+
        (?P<function>\S+)\s*$""",
    re.VERBOSE,
)
_HEX = re.compile(r"0[xX][0-9a-fA-F]+")
_DECIMAL = re.compile(r"[0-9]+")
MASK = "#"


@dataclass(frozen=True)
class AbstractionConfig:
    entry_point_patterns: tuple[tuple[str, str], ...] = ()
    hex_mask_enabled: bool = True
    decimal_mask_enabled: bool = True
    purification_enabled: bool = True
    masking_enabled: bool = True

    def __post_init__(self):
        patterns = tuple((str(s), str(f)) for s, f in self.entry_point_patterns)
        object.__setattr__(self, "entry_point_patterns", patterns)

    @property
    def setting(self) -> tuple[bool, bool]:
        """The ablation cell this config belongs to: (purification, masking)."""
        return self.purification_enabled, self.masking_enabled

    def with_setting(self, purification: bool, masking: bool) -> AbstractionConfig:
        return AbstractionConfig(
            entry_point_patterns=self.entry_point_patterns,
            hex_mask_enabled=self.hex_mask_enabled,
            decimal_mask_enabled=self.decimal_mask_enabled,
            purification_enabled=purification,
            masking_enabled=masking,
        )


DEFAULT_CONFIG = AbstractionConfig()


def parse_stack_trace(trace_text: str) -> list[StackFrame]:
    """Extract ``(file, function)`` from every frame header, outermost first.

    Line numbers, echoed source lines and the ``Traceback`` banner are
    dropped.  Lines that are not frame headers are skipped, so garbage input
    yields an empty list rather than an error.
    """
    frames = []
    for line in trace_text.splitlines():
        m = _FRAME_HEADER.match(line)
        if m is None:
            continue
        path = m.group("quoted") or m.group("bare")
        frames.append(StackFrame(path, m.group("function")))
    return frames


def _is_entry_point(frame: StackFrame, patterns: Sequence[tuple[str, str]]) -> bool:
    return any(
        frame.function == function and frame.file.endswith(suffix)
        for suffix, function in patterns
    )


def purify(
    frames: Sequence[StackFrame], config: AbstractionConfig = DEFAULT_CONFIG
) -> list[StackFrame]:
    """Drop the longest prefix of frames that are all test entry points."""
    frames = list(frames)
    if not config.purification_enabled:
        return frames
    patterns = config.entry_point_patterns
    start = 0
    while start < len(frames) and _is_entry_point(frames[start], patterns):
        start += 1
    return frames[start:]


def mask_numbers(message: str, config: AbstractionConfig = DEFAULT_CONFIG) -> str:
    # hex first, otherwise 0x1F would become #x#F
    if config.hex_mask_enabled:
        message = _HEX.sub(MASK, message)
    if config.decimal_mask_enabled:
        message = _DECIMAL.sub(MASK, message)
    return message


def qualifying_token_count(masked_message: str) -> int:
    """Number of distinct, case-sensitive runs of alphabetic characters.

    Any non-letter (digit, punctuation, ``#``, whitespace) separates tokens,
    so ``"AssertionError: # != #"`` has exactly one token.
    """
    return len(
        {
            "".join(chars)
            for is_alpha, chars in itertools.groupby(masked_message, str.isalpha)
            if is_alpha
        }
    )


@functools.lru_cache(maxsize=1 << 16)
def _abstract(trace_text: str, message: str, config: AbstractionConfig) -> AbstractedSymptom:
    frames = purify(parse_stack_trace(trace_text), config)
    if config.masking_enabled:
        message = mask_numbers(message, config)
    return AbstractedSymptom(tuple(frames), message)


def abstract_symptom(
    raw: RawSymptom, config: AbstractionConfig = DEFAULT_CONFIG
) -> AbstractedSymptom:
    if not raw.message.strip():
        raise InvalidSymptom("error message is empty")
    return _abstract(raw.trace_text, raw.message, config)


def parse_entry_points(lines: Iterable[str]) -> tuple[tuple[str, str], ...]:
    """Parse ``<file_suffix>,<function>`` lines; ``#`` starts a comment line."""
    patterns = []
    for number, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        suffix, sep, function = line.rpartition(",")
        if not sep or not suffix.strip() or not function.strip():
            raise ConfigError(f"entry point line {number}: expected 'file,function': {line!r}")
        patterns.append((suffix.strip(), function.strip()))
    return tuple(patterns)


def load_entry_points(path) -> tuple[tuple[str, str], ...]:
    return parse_entry_points(Path(path).read_text(encoding="utf-8").splitlines())
