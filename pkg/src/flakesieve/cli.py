"""Command line interface.

Exit codes: 0 match or success, 1 no match (rerun the suite), 2 invalid
input, 3 case-memory storage error, 4 replay data error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from . import memory as memory_mod
from .abstraction import AbstractionConfig, abstract_symptom, load_entry_points
from .detector import Denylist, DetectorConfig, symptom_validity
from .errors import (
    ConfigError,
    IngestError,
    InvalidSymptom,
    MemoryFormatError,
    ReplayDataError,
    SpecError,
)
from .memory import CaseMemory
from .symptoms import CaseFailure, RawSymptom

EXIT_OK = 0
EXIT_NO_MATCH = 1
EXIT_INVALID = 2
EXIT_STORAGE = 3
EXIT_REPLAY = 4

SEPARATOR = "---MESSAGE---"
MEMORY_ENV = "FLAKESIEVE_MEMORY"


class UsageError(Exception):
    pass


def parse_symptom_text(text: str) -> RawSymptom:
    """Split ``<trace>\\n---MESSAGE---\\n<message>`` into a raw symptom."""
    lines = text.splitlines(keepends=True)
    for i, line in enumerate(lines):
        if line.rstrip("\r\n") == SEPARATOR:
            trace = "".join(lines[:i])
            message = "".join(lines[i + 1:]).rstrip("\r\n")
            return RawSymptom(trace, message)
    raise UsageError(f"missing {SEPARATOR} separator line")


def _read_input(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    return Path(path).read_text(encoding="utf-8")


def _abstraction(args) -> AbstractionConfig:
    patterns = ()
    if getattr(args, "entry_points", None):
        patterns = load_entry_points(args.entry_points)
    return AbstractionConfig(
        entry_point_patterns=patterns,
        purification_enabled=not args.no_purify,
        masking_enabled=not args.no_mask,
    )


def _detector(args) -> DetectorConfig:
    denylist = Denylist.load(args.denylist) if args.denylist else Denylist()
    return DetectorConfig(
        T=args.T,
        W=args.W,
        K=args.K,
        denylist=denylist,
        abstraction=_abstraction(args),
        early_stop=not args.no_early_stop,
    )


def _memory_path(args) -> str:
    path = args.memory or os.environ.get(MEMORY_ENV)
    if not path:
        raise UsageError(f"no memory file: pass --memory or set {MEMORY_ENV}")
    return path


def _load_memory(args, allow_missing: bool) -> CaseMemory:
    path = _memory_path(args)
    if allow_missing and not Path(path).exists():
        return CaseMemory(dedupe_within_suite=args.dedupe_within_suite)
    try:
        return memory_mod.load(path, dedupe_within_suite=args.dedupe_within_suite)
    except OSError as exc:
        raise MemoryFormatError(f"cannot read {path}: {exc.strerror or exc}") from None


def _symptoms(paths) -> list[CaseFailure]:
    cases = []
    for path in paths:
        raw = parse_symptom_text(_read_input(path))
        name = "stdin" if path == "-" else Path(path).stem
        cases.append(CaseFailure(name, raw))
    return cases


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=1, sort_keys=False, default=str)
    sys.stdout.write("\n")


def cmd_abstract(args) -> int:
    raw = parse_symptom_text(_read_input(args.input))
    symptom = abstract_symptom(raw, _abstraction(args))
    sys.stdout.write(symptom.canonical + "\n")
    return EXIT_OK


def cmd_check(args) -> int:
    config = _detector(args)
    cases = _symptoms(args.symptoms)
    validity = symptom_validity(cases, config.denylist)
    if not validity:
        raise InvalidSymptom(f"symptoms not eligible for matching: {validity.reason}")
    memory = _load_memory(args, args.allow_empty_memory)
    abstracted = [abstract_symptom(c.symptom, config.abstraction) for c in cases]
    matched = memory.are_flakiness_symptoms(abstracted, config.T)
    _emit(
        {
            "verdict": "flaky" if matched else "rerun",
            "match": matched,
            "T": config.T,
            "symptoms": [
                {"test_case_id": c.test_case_id, "canonical": s.canonical, "count": memory.lookup(s)}
                for c, s in zip(cases, abstracted)
            ],
        }
    )
    return EXIT_OK if matched else EXIT_NO_MATCH


def cmd_record(args) -> int:
    config = _detector(args)
    cases = _symptoms(args.symptoms)
    validity = symptom_validity(cases, config.denylist)
    if not validity:
        raise InvalidSymptom(f"symptoms not eligible for storage: {validity.reason}")
    memory = _load_memory(args, allow_missing=True)
    abstracted = [(c.test_case_id, abstract_symptom(c.symptom, config.abstraction)) for c in cases]
    stored, skipped = memory.record_flaky(abstracted, config.W, args.run_id)
    path = _memory_path(args)
    try:
        memory.save(path)
    except OSError as exc:
        raise MemoryFormatError(f"cannot write {path}: {exc.strerror or exc}") from None
    print(f"stored: {stored}")
    print(f"skipped: {skipped}")
    return EXIT_OK


def _load_dataset(args, config):
    from .replay import ingest

    return ingest(args.dataset, config.denylist)


def cmd_replay(args) -> int:
    from .replay import compute_metrics, compute_savings, simulate

    config = _detector(args)
    dataset = _load_dataset(args, config)
    result = simulate(dataset, config, dedupe_within_suite=args.dedupe_within_suite)
    metrics = compute_metrics(result)
    savings = compute_savings(result)
    report = {
        "config": result.config,
        "suites": result.confusion.total,
        "confusion": {
            "tp": result.confusion.tp,
            "fp": result.confusion.fp,
            "tn": result.confusion.tn,
            "fn": result.confusion.fn,
        },
        "metrics": metrics._asdict(),
        "savings": savings.to_dict(),
        "exclusions": dataset.exclusions.to_dict() if dataset.exclusions else None,
    }
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fp:
            json.dump(report, fp, indent=1)
            fp.write("\n")
    if args.save_memory:
        result.memory.save(args.save_memory)
    if args.format == "json":
        _emit(report)
    else:
        c = result.confusion

        def fmt(v):
            return "n/a" if v is None else f"{v:.4f}"

        print(f"suites: {c.total}  tp={c.tp} fp={c.fp} tn={c.tn} fn={c.fn}")
        for name, value in metrics._asdict().items():
            print(f"{name}: {fmt(value)}")
        print(f"executions_saved_pct: {fmt(savings.executions_saved_pct)}")
        time_pct = savings.machine_time_saved_pct if savings.time_available else None
        print(f"machine_time_saved_pct: {fmt(time_pct)}")
    return EXIT_OK


def _int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def cmd_sweep(args) -> int:
    from .replay.sweep import ABLATION_SETTINGS, sweep, write_sweep_csv

    config = _detector(args)
    dataset = _load_dataset(args, config)
    settings = ABLATION_SETTINGS if args.ablation else (config.abstraction.setting,)
    cells = sweep(
        dataset,
        args.T_values,
        args.W_values,
        settings,
        config,
        dedupe_within_suite=args.dedupe_within_suite,
        jobs=args.jobs,
    )
    out = open(args.output, "w", encoding="utf-8", newline="") if args.output else sys.stdout
    try:
        if args.format == "json":
            rows = []
            for cell in cells.values():
                row = dict(zip(("T", "W", "purification", "masking"), cell.key))
                row.update(cell.metrics._asdict())
                row["savings"] = cell.savings.to_dict()
                rows.append(row)
            json.dump(rows, out, indent=1)
            out.write("\n")
        else:
            write_sweep_csv(cells.values(), out)
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


GROUP_COLUMNS = ("count", "distinct_test_cases", "distinct_runs", "symptom")


def cmd_groups(args) -> int:
    memory = _load_memory(args, allow_missing=False)
    rows = memory.group_report(args.min_count)
    if args.format == "json":
        _emit([dict(zip(GROUP_COLUMNS, (r.count, r.distinct_test_cases, r.distinct_runs, r.canonical))) for r in rows])
        return EXIT_OK
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(GROUP_COLUMNS)
    for r in rows:
        writer.writerow((r.count, r.distinct_test_cases, r.distinct_runs, r.canonical))
    return EXIT_OK


def cmd_gen(args) -> int:
    from .replay.dataset import write_dataset
    from .replay.synthetic import (
        SyntheticSpec,
        generate_synthetic,
        write_entry_points,
        write_manifest,
    )

    spec = SyntheticSpec(
        number_of_runs=args.runs,
        flaky_family_count=args.families,
        family_recurrence=tuple(args.recurrence),
        non_flaky_rate=args.non_flaky_rate,
        cases_per_family=tuple(args.cases),
        low_info_rate=args.low_info_rate,
        non_flaky_overlap_rate=args.overlap_rate,
        digit_jitter_rate=args.jitter,
        frame_prefix_variation=args.prefix_variation,
        K=args.K,
        seed=args.seed,
    )
    dataset = generate_synthetic(spec)
    output = Path(args.output)
    write_dataset(dataset, output)
    manifest = Path(args.manifest or f"{output}.manifest.json")
    write_manifest(dataset, manifest)
    entry_points = Path(args.entry_points_out or f"{output}.entry_points")
    write_entry_points(dataset.provenance["manifest"]["entry_points"], entry_points)
    print(f"wrote {len(dataset)} suite failures in {len(dataset.runs)} runs to {output}")
    return EXIT_OK


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--memory", help=f"case memory file (fallback: ${MEMORY_ENV})")
    common.add_argument("--denylist", help="file of uninformative-message patterns")
    common.add_argument("--entry-points", help="file of 'file_suffix,function' entry frames")
    common.add_argument("-T", type=_positive, default=1, help="minimum observation count")
    common.add_argument("-W", type=_positive, default=1, help="minimum distinct words")
    common.add_argument("-K", type=_positive, default=3, help="rerun budget")
    common.add_argument("--no-purify", action="store_true")
    common.add_argument("--no-mask", action="store_true")
    common.add_argument("--dedupe-within-suite", action="store_true")
    common.add_argument("--no-early-stop", action="store_true")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--seed", type=int, default=0)

    parser = argparse.ArgumentParser(
        prog="flakesieve", description="Flaky failure detection by symptom matching."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("abstract", parents=[common], help="print the canonical symptom")
    p.add_argument("input", nargs="?", default="-")
    p.set_defaults(func=cmd_abstract)

    p = sub.add_parser("check", parents=[common], help="match symptoms against the memory")
    p.add_argument("symptoms", nargs="*")
    p.add_argument("--allow-empty-memory", action="store_true")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("record", parents=[common], help="store symptoms of a verified flaky suite")
    p.add_argument("symptoms", nargs="*")
    p.add_argument("--run-id", required=True)
    p.set_defaults(func=cmd_record)

    p = sub.add_parser("replay", parents=[common], help="replay a dataset")
    p.add_argument("dataset")
    p.add_argument("--report", help="write the JSON report here")
    p.add_argument("--save-memory", help="write the final case memory here")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("sweep", parents=[common], help="replay over a T x W grid")
    p.add_argument("dataset")
    p.add_argument("--T-values", type=_int_list, default=list(range(1, 7)))
    p.add_argument("--W-values", type=_int_list, default=list(range(1, 7)))
    p.add_argument("--ablation", action="store_true", help="all four abstraction settings")
    p.add_argument("--jobs", type=_positive, default=1)
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("groups", parents=[common], help="list recurring symptoms")
    p.add_argument("--min-count", type=_positive, default=20)
    p.set_defaults(func=cmd_groups)

    p = sub.add_parser("gen", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--output", "-o", required=True)
    p.add_argument("--manifest")
    p.add_argument("--entry-points-out")
    p.add_argument("--runs", type=_positive, default=60)
    p.add_argument("--families", type=int, default=20)
    p.add_argument("--recurrence", type=_positive, nargs=2, default=(2, 10), metavar=("MIN", "MAX"))
    p.add_argument("--cases", type=_positive, nargs=2, default=(1, 1), metavar=("MIN", "MAX"))
    p.add_argument("--non-flaky-rate", type=float, default=0.25)
    p.add_argument("--low-info-rate", type=float, default=0.0)
    p.add_argument("--overlap-rate", type=float, default=0.0)
    p.add_argument("--jitter", type=float, default=1.0)
    p.add_argument("--prefix-variation", type=float, default=0.5)
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, InvalidSymptom, IngestError, ConfigError, SpecError) as exc:
        print(f"flakesieve: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except MemoryFormatError as exc:
        print(f"flakesieve: memory error: {exc}", file=sys.stderr)
        return EXIT_STORAGE
    except ReplayDataError as exc:
        print(f"flakesieve: replay data error: {exc}", file=sys.stderr)
        return EXIT_REPLAY
    except OSError as exc:
        print(f"flakesieve: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
