"""Seeded synthetic CI histories with planted flaky-failure families.

A *family* is a recurring flaky root cause: every occurrence produces the
same stack (modulo line numbers and the harness entry frames) and the same
message modulo the numbers in it.  Non-flaky failures get symptoms that no
other failure shares, unless ``non_flaky_overlap_rate`` says otherwise.
"""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass, field
from datetime import timedelta
from typing import Optional

from ..abstraction import AbstractionConfig, mask_numbers, qualifying_token_count
from ..errors import SpecError
from ..symptoms import (
    CaseFailure,
    CiRun,
    RawSymptom,
    Rerun,
    SuiteFailureRecord,
    parse_timestamp,
)
from .dataset import Dataset

HARNESS_FILE = "harness/NewDbTestCase.py"
HARNESS_FUNCTION = "run"
ERROR_TYPES = (
    "ConnectionError",
    "TimeoutError",
    "AssertionError",
    "RuntimeError",
    "DatabaseError",
    "LockWaitTimeout",
    "ProcessLookupError",
)
LOW_INFO_TEMPLATES = (
    "AssertionError: {} != {}",
    "Test failed with rc {}",
    "failed {} of {}",
)
_ALPHABET = "abcdefghijklmnopqrstuvwxyz"


@dataclass(frozen=True)
class SyntheticSpec:
    number_of_runs: int = 60
    flaky_family_count: int = 20
    # occurrences per family, drawn uniformly from [min, max]
    family_recurrence: tuple[int, int] = (2, 10)
    non_flaky_rate: float = 0.25
    # overrides non_flaky_rate when set
    non_flaky_count: Optional[int] = None
    cases_per_family: tuple[int, int] = (1, 1)
    message_words: tuple[int, int] = (6, 10)
    low_info_rate: float = 0.0
    non_flaky_overlap_rate: float = 0.0
    digit_jitter_rate: float = 1.0
    hex_rate: float = 0.3
    frame_prefix_variation: float = 0.5
    entry_suite_pool: int = 8
    K: int = 3
    rerun_duration: tuple[float, float] = (60.0, 600.0)
    span_days: int = 30
    start: str = "2022-01-03T00:00:00Z"
    seed: int = 0

    def validate(self) -> None:
        def bad(msg):
            raise SpecError(msg)

        if self.number_of_runs < 1:
            bad("number_of_runs must be >= 1")
        if self.flaky_family_count < 0:
            bad("flaky_family_count must be >= 0")
        lo, hi = self.family_recurrence
        if not 1 <= lo <= hi:
            bad(f"family_recurrence must satisfy 1 <= min <= max, got {self.family_recurrence}")
        if self.flaky_family_count and hi > self.number_of_runs:
            bad(
                f"a family recurring {hi} times needs at least {hi} runs "
                f"(number_of_runs={self.number_of_runs})"
            )
        if not 0.0 <= self.non_flaky_rate < 1.0:
            bad("non_flaky_rate must be in [0, 1)")
        if self.non_flaky_count is not None and self.non_flaky_count < 0:
            bad("non_flaky_count must be >= 0")
        if not 1 <= self.cases_per_family[0] <= self.cases_per_family[1]:
            bad("cases_per_family must satisfy 1 <= min <= max")
        if not 1 <= self.message_words[0] <= self.message_words[1]:
            bad("message_words must satisfy 1 <= min <= max")
        for name in (
            "low_info_rate",
            "non_flaky_overlap_rate",
            "digit_jitter_rate",
            "hex_rate",
            "frame_prefix_variation",
        ):
            if not 0.0 <= getattr(self, name) <= 1.0:
                bad(f"{name} must be in [0, 1]")
        if self.entry_suite_pool < 1:
            bad("entry_suite_pool must be >= 1")
        if self.K < 1:
            bad("K must be >= 1")
        if not 0 <= self.rerun_duration[0] <= self.rerun_duration[1]:
            bad("rerun_duration must satisfy 0 <= min <= max")
        if self.span_days < 1:
            bad("span_days must be >= 1")
        try:
            parse_timestamp(self.start)
        except ValueError:
            bad(f"bad start timestamp {self.start!r}")


def _letters(n: int) -> str:
    """Bijective base-26 spelling of ``n`` using lowercase letters only."""
    out = ""
    n += 1
    while n:
        n, r = divmod(n - 1, 26)
        out = _ALPHABET[r] + out
    return out


def _word(rng: random.Random, lo=3, hi=9) -> str:
    return "".join(rng.choices(_ALPHABET, k=rng.randint(lo, hi)))


@dataclass
class _Family:
    tag: str
    frames: list
    cases: list  # per case: (test name, message parts)
    home_suite: int
    low_info: bool
    occurrences: int = 0
    kind: str = "family"


@dataclass
class _Slot:
    """A number inside a message; re-drawn per occurrence under jitter."""

    kind: str
    base: str = field(default="")

    def draw(self, rng: random.Random) -> str:
        if self.kind == "ip":
            return "{}.{}.{}.{}:{}".format(
                rng.randint(1, 254), rng.randint(0, 254), rng.randint(0, 254),
                rng.randint(1, 254), rng.randint(1024, 65535),
            )
        if self.kind == "hex":
            return "0x{:08x}".format(rng.getrandbits(32))
        if self.kind == "neg":
            return str(-rng.randint(1000, 99999))
        return str(rng.randint(0, 99999))


class _Generator:
    def __init__(self, spec: SyntheticSpec):
        self.spec = spec
        self.rng = random.Random(spec.seed)
        self.suites = [
            "Suite" + _letters(i).capitalize() + _word(self.rng, 3, 6).capitalize()
            for i in range(spec.entry_suite_pool)
        ]

    def entry_points(self) -> list[tuple[str, str]]:
        patterns = [(HARNESS_FILE.rsplit("/", 1)[1], HARNESS_FUNCTION)]
        patterns.extend((f"test{name}.py", "setUp") for name in self.suites)
        return patterns

    def _message_parts(self, tag: str, low_info: bool) -> list:
        rng = self.rng
        if low_info:
            template = rng.choice(LOW_INFO_TEMPLATES)
            parts = []
            for i, piece in enumerate(template.split("{}")):
                if i:
                    parts.append(_Slot("int"))
                if piece:
                    parts.append(piece)
            return [self._fix(p) for p in parts]
        lo, hi = self.spec.message_words
        n_words = rng.randint(lo, hi)
        words = [tag]
        while len(words) < n_words:
            w = _word(rng)
            if w not in words:
                words.append(w)
        parts = [rng.choice(ERROR_TYPES) + ": (", _Slot("neg"), ", " + " ".join(words)]
        parts += [" rc=", _Slot("int"), " {", _Slot("ip"), " -> ", _Slot("ip"), "}"]
        if rng.random() < self.spec.hex_rate:
            parts += [" at ", _Slot("hex")]
        parts.append(")")
        return [self._fix(p) for p in parts]

    def _fix(self, part):
        if isinstance(part, _Slot):
            part.base = part.draw(self.rng)
        return part

    def _frames(self, tag: str) -> list:
        rng = self.rng
        frames = []
        for depth in range(rng.randint(1, 4)):
            module = _word(rng, 4, 10) + ("Manager" if depth == 0 else "")
            func = _word(rng, 4, 10)
            if depth == 0:
                func = f"{func}_{tag}"
            frames.append((f"lib/{module}.py", func))
        return frames

    def new_family(self, tag: str, low_info: bool, kind: str = "family") -> _Family:
        rng = self.rng
        n_cases = rng.randint(*self.spec.cases_per_family) if kind == "family" else 1
        cases = []
        for j in range(n_cases):
            name = f"test_{tag}_{_word(rng, 3, 6)}{j}"
            # extra cases reuse the stack but differ in their message words
            cases.append((name, self._message_parts(tag + _letters(j) if j else tag, low_info)))
        return _Family(
            tag=tag,
            frames=self._frames(tag),
            cases=cases,
            home_suite=rng.randrange(len(self.suites)),
            low_info=low_info,
            kind=kind,
        )

    def _render_message(self, parts) -> str:
        rng = self.rng
        out = []
        for p in parts:
            if isinstance(p, _Slot):
                out.append(p.draw(rng) if rng.random() < self.spec.digit_jitter_rate else p.base)
            else:
                out.append(p)
        return "".join(out)

    def _render_base(self, parts) -> str:
        return "".join(p.base if isinstance(p, _Slot) else p for p in parts)

    def _render_trace(self, suite_name: str, frames) -> str:
        rng = self.rng
        cpython = rng.random() < 0.5
        lines = ["Traceback (most recent call last):"]
        stack = [(HARNESS_FILE, HARNESS_FUNCTION), (f"suites/test{suite_name}.py", "setUp")]
        stack += frames
        for path, func in stack:
            lineno = rng.randint(1, 5000)
            if cpython:
                lines.append(f'  File "{path}", line {lineno}, in {func}')
            else:
                lines.append(f"  File {path} line {lineno}, in {func}")
            lines.append(f"    self.{_word(rng)}({rng.randint(0, 99)})")
        return "\n".join(lines)

    def occurrence(self, family: _Family, serial: int, run_id: str, started_at: str, flaky: bool):
        rng = self.rng
        suite_idx = family.home_suite
        if rng.random() < self.spec.frame_prefix_variation:
            suite_idx = rng.randrange(len(self.suites))
        suite_name = self.suites[suite_idx]
        cases = tuple(
            CaseFailure(
                f"test{suite_name}.{name}",
                RawSymptom(self._render_trace(suite_name, family.frames), self._render_message(parts)),
            )
            for name, parts in family.cases
        )
        K = self.spec.K
        if flaky:
            first_pass = rng.randrange(K)
            outcomes = ["fail"] * first_pass + ["pass"]
            outcomes += [rng.choice(("pass", "fail")) for _ in range(K - first_pass - 1)]
        else:
            outcomes = ["fail"] * K
        duration = round(rng.uniform(*self.spec.rerun_duration), 1)
        return SuiteFailureRecord(
            run_id=run_id,
            suite_id=f"{suite_name}-{serial:05d}",
            started_at=started_at,
            case_symptoms=cases,
            recorded_reruns=tuple(Rerun(o, duration) for o in outcomes),
            initial_failure_duration_seconds=duration,
        )


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Build a dataset; ``provenance["manifest"]`` holds the planted ground truth."""
    spec.validate()
    gen = _Generator(spec)
    rng = gen.rng
    R = spec.number_of_runs

    start = parse_timestamp(spec.start)
    offsets = sorted(rng.randrange(spec.span_days * 86400) for _ in range(R))
    runs = [
        (f"run-{i:05d}", (start + timedelta(seconds=o)).strftime("%Y-%m-%dT%H:%M:%SZ"))
        for i, o in enumerate(offsets)
    ]

    families = []
    for f in range(spec.flaky_family_count):
        fam = gen.new_family("fam" + _letters(f), rng.random() < spec.low_info_rate)
        fam.occurrences = rng.randint(*spec.family_recurrence)
        families.append(fam)
    flaky_total = sum(f.occurrences for f in families)
    if spec.non_flaky_count is not None:
        n_non_flaky = spec.non_flaky_count
    else:
        n_non_flaky = round(flaky_total * spec.non_flaky_rate / (1 - spec.non_flaky_rate))
    if flaky_total + n_non_flaky == 0:
        raise SpecError("spec produces no suite failures")

    # (run index, family, flaky?, kind) per planned suite failure
    planned = []
    for fam in families:
        for r in sorted(rng.sample(range(R), fam.occurrences)):
            planned.append((r, fam, True, "family"))
    for i in range(n_non_flaky):
        if families and rng.random() < spec.non_flaky_overlap_rate:
            fam = rng.choice(families)
            kind = "overlap"
        else:
            fam = gen.new_family("nf" + _letters(i), rng.random() < spec.low_info_rate, "non_flaky")
            kind = "non_flaky"
        planned.append((rng.randrange(R), fam, False, kind))

    per_run = [[] for _ in range(R)]
    manifest_suites = []
    for serial, (r, fam, flaky, kind) in enumerate(planned):
        run_id, started_at = runs[r]
        suite = gen.occurrence(fam, serial, run_id, started_at, flaky)
        per_run[r].append(suite)
        manifest_suites.append(
            {
                "run_id": run_id,
                "suite_id": suite.suite_id,
                "label": "flaky" if flaky else "non_flaky",
                "kind": kind,
                "family": fam.tag if kind != "non_flaky" else None,
            }
        )

    ci_runs = [
        CiRun(run_id, started_at, tuple(sorted(per_run[i], key=lambda s: s.suite_id)))
        for i, (run_id, started_at) in enumerate(runs)
    ]
    config = AbstractionConfig(tuple(gen.entry_points()))
    manifest = {
        "generator": "flakesieve.synthetic",
        "seed": spec.seed,
        "spec": asdict(spec),
        "entry_points": [list(p) for p in config.entry_point_patterns],
        "families": [
            {
                "family": fam.tag,
                "occurrences": fam.occurrences,
                "cases": len(fam.cases),
                "low_info": fam.low_info,
                "qualifying_tokens": min(
                    qualifying_token_count(mask_numbers(gen._render_base(parts)))
                    for _, parts in fam.cases
                ),
            }
            for fam in families
        ],
        "suites": sorted(manifest_suites, key=lambda m: (m["run_id"], m["suite_id"])),
    }
    return Dataset.from_runs(
        ci_runs, provenance={"source": "synthetic", "seed": spec.seed, "manifest": manifest}
    )


def manifest_abstraction(manifest: dict) -> AbstractionConfig:
    """Abstraction config whose entry points strip the generated harness frames."""
    return AbstractionConfig(tuple(tuple(p) for p in manifest["entry_points"]))


def write_manifest(dataset: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fp:
        json.dump(dataset.provenance["manifest"], fp, indent=1, sort_keys=True)
        fp.write("\n")


def write_entry_points(patterns, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fp:
        fp.write("# file_suffix,function\n")
        for suffix, function in patterns:
            fp.write(f"{suffix},{function}\n")
