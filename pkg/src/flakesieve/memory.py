"""The case memory of known flaky-failure symptoms.

The memory maps a symptom's canonical text to how many times that symptom was
seen in failures that reruns proved flaky.  Writers build a new mapping and
swap it in under a lock, so a reader always sees either the state before a
batch or the state after it.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
import threading
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, NamedTuple, Optional, Sequence, Union

from .abstraction import qualifying_token_count
from .errors import EmptySymptomSet, MemoryFormatError
from .symptoms import AbstractedSymptom

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
DEFAULT_MAX_ENTRIES_WARNING = 1_000_000


@dataclass(frozen=True)
class MemoryEntry:
    count: int
    first_seen_run: str
    last_seen_run: str
    distinct_test_cases: int
    distinct_runs: int
    # ids behind distinct_test_cases; empty for entries loaded from files
    # written without the optional "test_cases" field
    test_cases: frozenset = field(default=frozenset(), compare=False, repr=False)


@dataclass(frozen=True)
class StagedUpdate:
    """Symptoms of one suite failure that reruns proved flaky."""

    suite_id: str
    run_id: str
    symptoms: tuple[tuple[str, AbstractedSymptom], ...]
    W: int

    def ordered(self) -> list[tuple[str, AbstractedSymptom]]:
        return sorted(self.symptoms, key=lambda item: item[0])


class GroupRow(NamedTuple):
    canonical: str
    count: int
    distinct_test_cases: int
    distinct_runs: int


Key = Union[AbstractedSymptom, str]


def _key(symptom: Key) -> str:
    return symptom if isinstance(symptom, str) else symptom.canonical


def _bump(entry: Optional[MemoryEntry], test_case_id: str, run_id: str) -> MemoryEntry:
    if entry is None:
        return MemoryEntry(1, run_id, run_id, 1, 1, frozenset([test_case_id]))
    test_cases = entry.test_cases
    distinct_test_cases = entry.distinct_test_cases
    if test_case_id not in test_cases:
        test_cases = test_cases | {test_case_id}
        distinct_test_cases += 1
    # runs are applied in dataset order, so a new run id differs from the last
    new_run = run_id != entry.last_seen_run
    return MemoryEntry(
        count=entry.count + 1,
        first_seen_run=entry.first_seen_run,
        last_seen_run=run_id,
        distinct_test_cases=distinct_test_cases,
        distinct_runs=entry.distinct_runs + (1 if new_run else 0),
        test_cases=test_cases,
    )


class CaseMemory:
    """Counts of abstracted flaky-failure symptoms.

    Absent symptoms have count 0.  Counts only grow and entries are never
    removed.
    """

    def __init__(
        self,
        entries: Optional[Mapping[str, MemoryEntry]] = None,
        *,
        dedupe_within_suite: bool = False,
        max_entries_warning: int = DEFAULT_MAX_ENTRIES_WARNING,
    ):
        self._entries: dict[str, MemoryEntry] = dict(entries or {})
        self._lock = threading.Lock()
        self.dedupe_within_suite = dedupe_within_suite
        self.max_entries_warning = max_entries_warning
        self._warned = False
        self.version = FORMAT_VERSION

    def __len__(self):
        return len(self._entries)

    def __contains__(self, symptom):
        return _key(symptom) in self._entries

    def __eq__(self, other):
        if not isinstance(other, CaseMemory):
            return NotImplemented
        return self._entries == other._entries

    def __repr__(self):
        return f"<CaseMemory entries={len(self._entries)}>"

    @property
    def entries(self) -> Mapping[str, MemoryEntry]:
        """Read-only view of the current state (stable against later writes)."""
        return MappingProxyType(self._entries)

    def snapshot(self) -> CaseMemory:
        return CaseMemory(
            self._entries,
            dedupe_within_suite=self.dedupe_within_suite,
            max_entries_warning=self.max_entries_warning,
        )

    def lookup(self, symptom: Key) -> int:
        entry = self._entries.get(_key(symptom))
        return 0 if entry is None else entry.count

    def counts(self, symptoms: Iterable[Key]) -> list[tuple[str, int]]:
        entries = self._entries
        out = []
        for s in symptoms:
            key = _key(s)
            entry = entries.get(key)
            out.append((key, 0 if entry is None else entry.count))
        return out

    def are_flakiness_symptoms(self, symptoms: Iterable[Key], T: int) -> bool:
        """True iff every symptom has been observed at least ``T`` times."""
        keys = {_key(s) for s in symptoms}
        if not keys:
            raise EmptySymptomSet("cannot match an empty symptom set")
        entries = self._entries
        for key in keys:
            entry = entries.get(key)
            if entry is None or entry.count < T:
                return False
        return True

    def _apply(
        self,
        entries: dict,
        symptoms: Sequence[tuple[str, AbstractedSymptom]],
        W: int,
        run_id: str,
    ) -> tuple[int, int]:
        stored = skipped = 0
        seen = set()
        for test_case_id, symptom in symptoms:
            if qualifying_token_count(symptom.masked_message) < W:
                skipped += 1
                continue
            key = symptom.canonical
            if self.dedupe_within_suite and key in seen:
                continue
            seen.add(key)
            entries[key] = _bump(entries.get(key), test_case_id, run_id)
            stored += 1
        return stored, skipped

    def _swap(self, entries: dict) -> None:
        self._entries = entries
        if not self._warned and len(entries) > self.max_entries_warning:
            self._warned = True
            log.warning(
                "case memory holds %d entries (warning threshold %d)",
                len(entries),
                self.max_entries_warning,
            )

    def record_flaky(
        self,
        symptoms: Sequence[tuple[str, AbstractedSymptom]],
        W: int,
        run_id: str,
    ) -> tuple[int, int]:
        """Count the symptoms of a rerun-verified flaky failure.

        Symptoms whose masked message has fewer than ``W`` distinct
        alphabetic tokens are skipped.  Returns ``(stored, skipped)``.
        """
        with self._lock:
            entries = dict(self._entries)
            result = self._apply(entries, symptoms, W, run_id)
            self._swap(entries)
        return result

    def merge_batch(self, batch: Iterable[StagedUpdate]) -> tuple[int, int]:
        """Apply all updates of one CI run at once, ordered by suite id."""
        batch = sorted(batch, key=lambda u: u.suite_id)
        if not batch:
            return 0, 0
        stored = skipped = 0
        with self._lock:
            entries = dict(self._entries)
            for update in batch:
                s, k = self._apply(entries, update.ordered(), update.W, update.run_id)
                stored += s
                skipped += k
            self._swap(entries)
        return stored, skipped

    def group_report(self, min_count: int = 1) -> list[GroupRow]:
        rows = [
            GroupRow(key, e.count, e.distinct_test_cases, e.distinct_runs)
            for key, e in self._entries.items()
            if e.count >= min_count
        ]
        rows.sort(key=lambda r: (-r.count, r.canonical))
        return rows

    def to_document(self) -> dict:
        return {
            "version": FORMAT_VERSION,
            "entries": [
                {
                    "symptom": key,
                    "count": e.count,
                    "first_seen_run": e.first_seen_run,
                    "last_seen_run": e.last_seen_run,
                    "distinct_test_cases": e.distinct_test_cases,
                    "distinct_runs": e.distinct_runs,
                    "test_cases": sorted(e.test_cases),
                }
                for key, e in sorted(self._entries.items())
            ],
        }

    @classmethod
    def from_document(cls, doc, **kwargs) -> CaseMemory:
        if not isinstance(doc, dict):
            raise MemoryFormatError("memory document must be a JSON object")
        version = doc.get("version")
        if version != FORMAT_VERSION:
            raise MemoryFormatError(
                f"unsupported memory format version {version!r} "
                f"(expected {FORMAT_VERSION})",
                version=version,
            )
        raw_entries = doc.get("entries")
        if not isinstance(raw_entries, list):
            raise MemoryFormatError("'entries' must be a list", version=version)
        entries = {}
        for i, item in enumerate(raw_entries):
            try:
                key = item["symptom"]
                entry = MemoryEntry(
                    count=item["count"],
                    first_seen_run=item["first_seen_run"],
                    last_seen_run=item["last_seen_run"],
                    distinct_test_cases=item["distinct_test_cases"],
                    distinct_runs=item["distinct_runs"],
                    test_cases=frozenset(item.get("test_cases", ())),
                )
            except (KeyError, TypeError) as exc:
                raise MemoryFormatError(f"entry {i}: malformed ({exc})", version=version)
            ints = (entry.count, entry.distinct_test_cases, entry.distinct_runs)
            if (
                not isinstance(key, str)
                or not all(isinstance(v, int) and not isinstance(v, bool) and v >= 1 for v in ints)
                or not isinstance(entry.first_seen_run, str)
                or not isinstance(entry.last_seen_run, str)
                or not all(isinstance(t, str) for t in entry.test_cases)
            ):
                raise MemoryFormatError(f"entry {i}: invalid field values", version=version)
            if key in entries:
                raise MemoryFormatError(f"entry {i}: duplicate symptom", version=version)
            entries[key] = entry
        return cls(entries, **kwargs)

    def save(self, path) -> None:
        save(self, path)


def save(memory: CaseMemory, path) -> None:
    """Write the memory as JSON; the target is replaced atomically."""
    path = Path(path)
    text = json.dumps(memory.to_document(), ensure_ascii=False, indent=1) + "\n"
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fp:
            fp.write(text)
            fp.flush()
            os.fsync(fp.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def load(path, **kwargs) -> CaseMemory:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise MemoryFormatError(f"{path}: not UTF-8 ({exc})")
    if not text.strip():
        raise MemoryFormatError(f"{path}: empty file")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MemoryFormatError(f"{path}: invalid JSON ({exc})")
    return CaseMemory.from_document(doc, **kwargs)
