"""Fixtures shared by several test modules."""

from dataclasses import replace

from flakesieve.abstraction import AbstractionConfig
from flakesieve.symptoms import CaseFailure, CiRun, RawSymptom, Rerun, SuiteFailureRecord

# traceback #1 of the flaky connection failure used throughout the tests
CONN_TRACE = """\
Traceback (most recent call last):
  File ZZZ/ZZZ/NewDbTestCase.py line 937, in run
    self.setUp()
  File ZZZ/ZZZ/testCrossDBAtrMultiDB.py line 303, in setUp
    super(testCrossDBAtrMultiDB, self).setUp()
  File ZZZ/ZZZ/testCrossDBQuery.py line 1359, in setUp
    self.conn2 = self.conman2.createConnection()
  File ZZZ/ZZZ/connectionManager.py line 629, in createConnection
    return self.createNamedConnection(conn_id, **kw_args)
  File ZZZ/ZZZ/connectionManager.py line 704, in createNamedConnection
    **props)
  File ZZZ/ZZZ/connectionManager.py line 113, in __init__
    retryChecker(dbapi.Connection.__init__, self, **keys)
  File ZZZ/ZZZ/RetryChecker.py line 20, in __call__
    return function(*args, **kwargs)"""

CONN_MESSAGE_1 = (
    "Error: (-10709, Connection failed (RTE:[89006] System call 'connect' failed, "
    "rc=111:Connection refused {1.2.3.3:30024 -> 1.2.3.3:31144} "
    "(1.2.3.3:30024 -> 1.2.3.3:31144)))"
)
CONN_MESSAGE_2 = (
    "Error: (-10709, \"Connection failed (RTE:[89006] System call 'connect' failed, "
    "rc=111:Connection refused {1.2.3.4:29616 -> 1.2.3.4:31144} "
    "(1.2.3.4:29616 -> 1.2.3.4:31144))\")"
)

CONN_CANONICAL = """\
[callstack]
ZZZ/ZZZ/testCrossDBQuery.py,setUp
ZZZ/ZZZ/connectionManager.py,createConnection
ZZZ/ZZZ/connectionManager.py,createNamedConnection
ZZZ/ZZZ/connectionManager.py,__init__
ZZZ/ZZZ/RetryChecker.py,__call__
[message]
Error: (-#, Connection failed (RTE:[#] System call 'connect' failed, rc=#:Connection refused {#.#.#.#:# -> #.#.#.#:#} (#.#.#.#:# -> #.#.#.#:#)))"""

HARNESS_ENTRY_POINTS = AbstractionConfig(
    (("NewDbTestCase.py", "run"), ("testCrossDBAtrMultiDB.py", "setUp"))
)


def trace(*frames):
    lines = ["Traceback (most recent call last):"]
    for i, (path, func) in enumerate(frames):
        lines.append(f'  File "{path}", line {10 + i}, in {func}')
        lines.append("    do_something()")
    return "\n".join(lines)


def suite(run_id, suite_id, messages, reruns, started_at="2022-01-01T00:00:00Z", duration=100.0):
    """Build a suite failure; ``messages`` are (test case id, message) pairs or bare messages."""
    cases = []
    for i, m in enumerate(messages):
        tc, msg = m if isinstance(m, tuple) else (f"tc{i}", m)
        cases.append(CaseFailure(tc, RawSymptom(trace(("lib/a.py", "f")), msg)))
    return SuiteFailureRecord(
        run_id=run_id,
        suite_id=suite_id,
        started_at=started_at,
        case_symptoms=tuple(cases),
        recorded_reruns=tuple(Rerun(o, duration) for o in reruns),
    )


def run(run_id, started_at, *suites):
    return CiRun(run_id, started_at, tuple(replace(s, started_at=started_at) for s in suites))


# (criterion number, passed, detail) filled in by the acceptance tests
ACCEPTANCE = {}


def acceptance(number, passed, detail):
    ACCEPTANCE[number] = (bool(passed), detail)
    return bool(passed)
