"""Brute-force replay used as an oracle for :func:`simulate`.

Nothing here shares code with the case memory or the detector: the memory is
a flat list of canonical strings that is counted with ``list.count``, every
suite consumes all of its reruns, and word counting is a character scan.
Only symptom abstraction itself is reused.
"""

from __future__ import annotations

from ..abstraction import abstract_symptom
from ..detector import DetectorConfig
from ..errors import ReplayDataError
from ..symptoms import Label, Verdict, VerdictKind
from .dataset import Dataset
from .simulate import Confusion, SimulationResult, config_summary, make_outcome


def _distinct_letter_runs(text):
    tokens = []
    current = ""
    for ch in text + " ":
        if ch.isalpha():
            current += ch
        else:
            if current and current not in tokens:
                tokens.append(current)
            current = ""
    return len(tokens)


def reference_simulate(
    dataset: Dataset, config: DetectorConfig, *, dedupe_within_suite: bool = False
) -> SimulationResult:
    stored = []
    outcomes = []
    for run in dataset.runs:
        pending = []
        for suite in run.suite_failures:
            if not suite.recorded_reruns:
                raise ReplayDataError(f"suite {suite.suite_id} has no reruns", suite.suite_id)
            label = Label.NON_FLAKY
            for r in suite.recorded_reruns:
                if r.outcome.value == "pass":
                    label = Label.FLAKY

            valid = len(suite.case_symptoms) > 0
            for case in suite.case_symptoms:
                if case.symptom.message.strip() == "":
                    valid = False
                elif config.denylist.matches(case.symptom.message):
                    valid = False

            keys = []
            if valid:
                for case in suite.case_symptoms:
                    keys.append(abstract_symptom(case.symptom, config.abstraction))
                matched = True
                for s in keys:
                    if stored.count(s.canonical) < config.T:
                        matched = False
                if matched:
                    verdict = Verdict(VerdictKind.FLAKY_BY_MATCH, 0)
                    outcomes.append(make_outcome(suite, verdict, label, config.K))
                    continue

            # no early stop: spend every rerun the budget allows
            reruns = suite.recorded_reruns[: config.K]
            passed = any(r.outcome.value == "pass" for r in reruns)
            if len(reruns) < config.K and not passed:
                raise ReplayDataError(f"suite {suite.suite_id} lacks reruns", suite.suite_id)
            if passed:
                verdict = Verdict(VerdictKind.FLAKY_BY_RERUN, len(reruns))
                if valid:
                    seen = []
                    for case, s in zip(suite.case_symptoms, keys):
                        if _distinct_letter_runs(s.masked_message) < config.W:
                            continue
                        if dedupe_within_suite and s.canonical in seen:
                            continue
                        seen.append(s.canonical)
                        pending.append(s.canonical)
            else:
                verdict = Verdict(VerdictKind.NON_FLAKY, len(reruns))
            outcomes.append(make_outcome(suite, verdict, label, config.K))
        stored.extend(pending)
    tp = fp = tn = fn = 0
    for o in outcomes:
        matched = o.verdict.kind is VerdictKind.FLAKY_BY_MATCH
        flaky = o.ground_truth is Label.FLAKY
        tp += matched and flaky
        fp += matched and not flaky
        fn += flaky and not matched
        tn += not flaky and not matched
    return SimulationResult(
        per_suite=tuple(outcomes),
        confusion=Confusion(tp, fp, tn, fn),
        config=config_summary(config.replace(early_stop=False), dedupe_within_suite),
    )
