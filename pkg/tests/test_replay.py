import json
import random

import pytest

from flakesieve.abstraction import AbstractionConfig
from flakesieve.detector import Denylist, DetectorConfig
from flakesieve.errors import IngestError, ReplayDataError, SavingsUnavailable, SpecError
from flakesieve.replay import (
    Dataset,
    SyntheticSpec,
    compute_metrics,
    compute_savings,
    generate_synthetic,
    ingest,
    reference_simulate,
    simulate,
    sweep,
    unique_symptom_stats,
    write_dataset,
)
from flakesieve.replay.dataset import NO_RERUNS, run_to_dict
from flakesieve.replay.simulate import Confusion, SimulationResult
from flakesieve.replay.synthetic import manifest_abstraction
from flakesieve.symptoms import CiRun, VerdictKind

from helpers import run, suite

X = "Connection refused by peer 10.0.0.1"
Y = "Lock wait timeout exceeded"


def kinds(result):
    return [o.verdict.kind for o in result.per_suite]


def test_second_occurrence_matches():
    ds = Dataset.from_runs(
        [
            run("r2", "2022-01-02T00:00:00Z", suite("r2", "b", [X], ["pass"] * 3)),
            run("r1", "2022-01-01T00:00:00Z", suite("r1", "a", [X], ["fail", "pass", "fail"])),
        ]
    )
    result = simulate(ds, DetectorConfig(T=1, W=1, K=3))
    assert kinds(result) == [VerdictKind.FLAKY_BY_RERUN, VerdictKind.FLAKY_BY_MATCH]
    assert result.confusion == Confusion(tp=1, fp=0, tn=0, fn=1)
    assert result.memory.group_report()[0].count == 1


def test_non_qualifying_symptom_is_not_learned():
    low = "AssertionError: 1 != 2"
    ds = Dataset.from_runs(
        [
            run("r1", "2022-01-01T00:00:00Z", suite("r1", "a", [low], ["pass"])),
            run("r2", "2022-01-02T00:00:00Z", suite("r2", "b", [low], ["pass"])),
        ]
    )
    assert kinds(simulate(ds, DetectorConfig(W=2, K=1))) == [VerdictKind.FLAKY_BY_RERUN] * 2
    assert kinds(simulate(ds, DetectorConfig(W=1, K=1)))[1] is VerdictKind.FLAKY_BY_MATCH


def test_updates_become_visible_only_after_the_run():
    ds = Dataset.from_runs(
        [
            run(
                "r1",
                "2022-01-01T00:00:00Z",
                suite("r1", "a", [X], ["pass"]),
                suite("r1", "b", [X], ["pass"]),
            ),
            run("r2", "2022-01-02T00:00:00Z", suite("r2", "c", [X], ["pass"])),
        ]
    )
    result = simulate(ds, DetectorConfig(K=1))
    assert kinds(result) == [
        VerdictKind.FLAKY_BY_RERUN,
        VerdictKind.FLAKY_BY_RERUN,
        VerdictKind.FLAKY_BY_MATCH,
    ]
    assert result.memory.lookup(next(iter(result.memory.entries))) == 2


def test_missing_reruns_is_a_replay_error():
    ds = Dataset.from_runs([run("r1", "2022-01-01T00:00:00Z", suite("r1", "a", [X], []))])
    with pytest.raises(ReplayDataError):
        simulate(ds, DetectorConfig())


def synthetic(seed=1, **kw):
    spec = SyntheticSpec(seed=seed, **kw)
    ds = generate_synthetic(spec)
    cfg = DetectorConfig(abstraction=manifest_abstraction(ds.provenance["manifest"]))
    return ds, cfg


def test_shuffled_input_replays_identically():
    ds, cfg = synthetic(seed=3, non_flaky_overlap_rate=0.2, low_info_rate=0.2)
    rnd = random.Random(0)
    runs = []
    for r in ds.runs:
        suites = list(r.suite_failures)
        rnd.shuffle(suites)
        runs.append(CiRun(r.run_id, r.started_at, tuple(suites)))
    rnd.shuffle(runs)
    a = simulate(ds, cfg)
    b = simulate(Dataset.from_runs(runs), cfg)
    assert sorted(a.verdict_sequence()) == sorted(b.verdict_sequence())
    assert a.confusion == b.confusion
    assert a.memory == b.memory


@pytest.mark.parametrize("T,W", [(1, 1), (2, 3), (4, 2)])
def test_simulate_agrees_with_reference(T, W):
    ds, cfg = synthetic(seed=5, non_flaky_overlap_rate=0.1, low_info_rate=0.3, cases_per_family=(1, 3))
    cfg = cfg.replace(T=T, W=W, early_stop=False)
    a, b = simulate(ds, cfg), reference_simulate(ds, cfg)
    assert a.verdict_sequence() == b.verdict_sequence()
    assert a.confusion == b.confusion


def result_of(confusion):
    return SimulationResult((), Confusion(*confusion), {})


@pytest.mark.parametrize(
    "confusion, expected",
    [
        ((3, 1, 4, 2), (0.75, 0.6, 2 * 0.75 * 0.6 / 1.35, 0.5)),
        ((0, 0, 5, 5), (None, 0.0, None, 0.5)),
        ((0, 0, 5, 0), (None, None, None, 0.0)),
        ((0, 0, 0, 0), (None, None, None, None)),
        ((0, 2, 0, 3), (0.0, 0.0, None, 0.6)),
    ],
)
def test_compute_metrics(confusion, expected):
    got = compute_metrics(result_of(confusion))
    for g, e in zip(got, expected):
        assert g == pytest.approx(e) if e is not None else g is None


def two_run_dataset(duration=100.0, second=("pass", "pass", "pass")):
    return Dataset.from_runs(
        [
            run("r1", "2022-01-01T10:00:00Z", suite("r1", "a", [X], ["fail", "pass", "fail"], duration=duration)),
            run("r2", "2022-01-02T10:00:00Z", suite("r2", "b", [X], list(second), duration=duration)),
        ]
    )


def test_savings_half_saved():
    s = compute_savings(simulate(two_run_dataset(), DetectorConfig(K=3)))
    assert (s.executions_total, s.executions_saved, s.executions_spent) == (6, 3, 2)
    assert s.executions_saved_pct == 0.5
    assert s.machine_time_saved_pct == 0.5
    assert s.early_stop_executions_saved == 1
    assert [p.executions_saved_pct for p in s.per_day] == [0.0, 1.0]
    assert [m[1] for m in s.moving_average] == [0.0, 0.5]


def test_savings_none_saved():
    ds = Dataset.from_runs([run("r1", "2022-01-01T00:00:00Z", suite("r1", "a", [X], ["fail"] * 3))])
    s = compute_savings(simulate(ds, DetectorConfig(K=3)))
    assert s.executions_saved_pct == 0.0 and s.machine_time_saved_pct == 0.0


def test_savings_without_durations():
    s = compute_savings(simulate(two_run_dataset(duration=None), DetectorConfig(K=3)))
    assert s.executions_saved_pct == 0.5
    with pytest.raises(SavingsUnavailable):
        s.machine_time_saved_pct
    assert s.to_dict()["machine_time_saved_pct"] is None


def test_moving_average_window_is_fourteen_days():
    runs = [
        run(f"r{d:02d}", f"2022-01-{d:02d}T00:00:00Z", suite(f"r{d:02d}", "s", [f"unique {chr(97 + d)} msg"], ["fail"]))
        for d in range(1, 20)
    ]
    s = compute_savings(simulate(Dataset.from_runs(runs), DetectorConfig(K=1)))
    assert len(s.moving_average) == 19
    assert all(e == 0.0 for _, e, _ in s.moving_average)


def test_sweep_covers_grid_and_matches_single_runs():
    ds, cfg = synthetic(seed=2)
    cells = sweep(ds, base=cfg)
    assert len(cells) == 36
    one = cells[(2, 3, True, True)]
    direct = simulate(ds, cfg.replace(T=2, W=3))
    assert one.metrics == compute_metrics(direct)
    assert one.savings == compute_savings(direct)


def test_ablation_cells():
    ds, cfg = synthetic(seed=2)
    cells = sweep(ds, [1], [1], ablation_settings=[(False, False), (True, False), (False, True), (True, True)], base=cfg)
    assert set(cells) == {(1, 1, p, m) for p in (False, True) for m in (False, True)}
    # raw symptoms never repeat, so nothing can be matched without masking
    assert cells[(1, 1, False, False)].metrics.recall == 0.0
    assert cells[(1, 1, True, True)].metrics.recall > 0.5


def test_unique_symptom_stats():
    ds, cfg = synthetic(seed=4, family_recurrence=(5, 5), non_flaky_rate=0.0, frame_prefix_variation=0.0)
    stats = unique_symptom_stats(ds, base=cfg)
    assert stats[(True, True)].unique_count == 20
    assert stats[(False, False)].unique_count == 100
    assert stats[(True, True)].mean_length_chars < stats[(False, False)].mean_length_chars


def test_generator_is_deterministic(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_dataset(generate_synthetic(SyntheticSpec(seed=9)), a)
    write_dataset(generate_synthetic(SyntheticSpec(seed=9)), b)
    assert a.read_bytes() == b.read_bytes()
    write_dataset(generate_synthetic(SyntheticSpec(seed=10)), b)
    assert a.read_bytes() != b.read_bytes()


@pytest.mark.parametrize(
    "changes",
    [
        {"number_of_runs": 0},
        {"family_recurrence": (3, 2)},
        {"family_recurrence": (1, 100), "number_of_runs": 10},
        {"non_flaky_rate": 1.0},
        {"low_info_rate": 1.5},
        {"flaky_family_count": 0, "non_flaky_count": 0},
    ],
)
def test_bad_spec(changes):
    with pytest.raises(SpecError):
        generate_synthetic(SyntheticSpec(**changes))


def test_planted_recall_small():
    ds, cfg = synthetic(
        seed=6, flaky_family_count=5, family_recurrence=(10, 10), number_of_runs=12, non_flaky_rate=0.25
    )
    m = compute_metrics(simulate(ds, cfg))
    assert m.recall == 0.9 and m.precision == 1.0


# ingestion

def write_lines(path, docs):
    path.write_text("".join((d if isinstance(d, str) else json.dumps(d)) + "\n" for d in docs))
    return path


def test_ingest_round_trip_and_ordering(tmp_path):
    ds = two_run_dataset()
    path = tmp_path / "d.jsonl"
    write_lines(path, [run_to_dict(r) for r in reversed(ds.runs)])
    got = ingest(path)
    assert [r.run_id for r in got.runs] == ["r1", "r2"]
    assert got.runs == ds.runs


def test_ingest_filters_and_counts(tmp_path):
    runs = [
        run(
            "r1",
            "2022-01-01T00:00:00Z",
            suite("r1", "ok", [X], ["pass"]),
            suite("r1", "nocase", [], ["fail"]),
            suite("r1", "denied", ["Unit test failed - Log Preview not supported."], ["pass"]),
            suite("r1", "blank", [" "], ["fail"]),
            suite("r1", "norerun", [Y], []),
        )
    ]
    path = write_lines(tmp_path / "d.jsonl", [run_to_dict(r) for r in runs])
    ds = ingest(path, Denylist(["substr:Log Preview not supported"]))
    assert [s.suite_id for s in ds.suites()] == ["ok"]
    summary = ds.exclusions.to_dict()
    assert summary["excluded"] == {"denylisted": 1, "empty_message": 1, "no_case_failures": 1, NO_RERUNS: 1}
    assert summary["strata"]["all_failed"] == {"total": 5, "flaky": 2, "non_flaky": 2, "unlabeled": 1}
    assert summary["strata"]["with_valid_symptoms"]["total"] == 1


@pytest.mark.parametrize(
    "bad, line",
    [
        ("{oops", 2),
        ({"run_id": "x", "started_at": "not a time", "suites": []}, 2),
        ({"run_id": "x", "started_at": "2022-01-01T00:00:00Z"}, 2),
        ({"run_id": "x", "started_at": "2022-01-01T00:00:00Z", "suites": [{"suite_id": "s", "cases": [], "reruns": [{"outcome": "maybe"}]}]}, 2),
        ({"run_id": "r1", "started_at": "2022-01-01T00:00:00Z", "suites": []}, None),
    ],
)
def test_ingest_errors_report_line(tmp_path, bad, line):
    good = run_to_dict(two_run_dataset().runs[0])
    path = write_lines(tmp_path / "d.jsonl", [good, bad])
    with pytest.raises(IngestError) as info:
        ingest(path)
    assert info.value.line_number == line


def test_zero_token_symptom_is_never_learned():
    ds = Dataset.from_runs(
        [
            run("r1", "2022-01-01T00:00:00Z", suite("r1", "a", ["### 123"], ["pass"])),
            run("r2", "2022-01-02T00:00:00Z", suite("r2", "b", ["### 123"], ["pass"])),
        ]
    )
    assert kinds(simulate(ds, DetectorConfig(W=1, K=1))) == [VerdictKind.FLAKY_BY_RERUN] * 2


def test_metrics_hand_example():
    m = compute_metrics(result_of((3, 0, 2, 1)))
    assert (m.precision, m.recall, m.baseline_precision) == (1.0, 0.75, 4 / 6)


def test_savings_full_budget_rerun_example():
    s = compute_savings(simulate(two_run_dataset(), DetectorConfig(K=3, early_stop=False)))
    assert (s.executions_saved, s.executions_total) == (3, 6)
    assert (s.time_saved_seconds, s.time_total_seconds) == (300.0, 600.0)
    assert s.time_saved_seconds + s.time_spent_seconds == s.time_total_seconds


def test_savings_all_matched():
    from flakesieve.replay.simulate import make_outcome
    from flakesieve.symptoms import Label, Verdict

    outcomes = tuple(
        make_outcome(suite("r1", f"s{i}", [X], ["pass"] * 3), Verdict(VerdictKind.FLAKY_BY_MATCH), Label.FLAKY, 3)
        for i in range(4)
    )
    s = compute_savings(SimulationResult(outcomes, Confusion.from_outcomes(outcomes), {}))
    assert s.executions_saved_pct == 1.0 and s.machine_time_saved_pct == 1.0


def test_identical_symptoms_collapse_under_every_setting():
    ds = Dataset.from_runs(
        [run(f"r{i}", f"2022-01-0{i + 1}T00:00:00Z", suite(f"r{i}", "s", [X], ["pass"])) for i in range(3)]
    )
    assert {st.unique_count for st in unique_symptom_stats(ds).values()} == {1}


def test_without_non_flaky_failures_precision_is_perfect_or_undefined():
    ds, cfg = synthetic(seed=11, non_flaky_rate=0.0)
    assert compute_metrics(simulate(ds, cfg)).precision in (None, 1.0)


def test_single_suite_matches_reference():
    ds = Dataset.from_runs([run("r1", "2022-01-01T00:00:00Z", suite("r1", "a", [X], ["fail", "pass", "pass"]))])
    cfg = DetectorConfig(early_stop=False)
    assert simulate(ds, cfg).verdict_sequence() == reference_simulate(ds, cfg).verdict_sequence()


def test_full_grid_matches_reference_on_small_dataset():
    ds, cfg = synthetic(seed=12, flaky_family_count=15, family_recurrence=(3, 8), low_info_rate=0.3,
                        non_flaky_overlap_rate=0.2, cases_per_family=(1, 2))
    assert 60 <= len(ds) <= 150
    for T in range(1, 7):
        for W in range(1, 7):
            c = cfg.replace(T=T, W=W, early_stop=False)
            a, b = simulate(ds, c), reference_simulate(ds, c)
            assert a.verdict_sequence() == b.verdict_sequence(), (T, W)
            assert a.confusion == b.confusion
