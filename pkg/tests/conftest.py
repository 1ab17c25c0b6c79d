import numpy as np
import pytest

from autobandit.core import Episode, InteractionLog, append_episode, numeric_schema

_acceptance = []


class ScriptedRng:
    """Stand-in for a Generator whose ``random()`` returns preset values."""

    def __init__(self, values):
        self.values = list(values)
        self.calls = 0

    def random(self):
        self.calls += 1
        return self.values.pop(0)


def make_log(contexts, actions, rewards, schema=None, K=None):
    contexts = [tuple(c) for c in contexts]
    schema = schema or numeric_schema(len(contexts[0]))
    K = K or int(max(actions)) + 1
    log = InteractionLog(schema, K)
    for t, (c, a, r) in enumerate(zip(contexts, actions, rewards), start=1):
        append_episode(log, Episode(t, c, int(a), float(r)))
    return log


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        _acceptance.append((report.nodeid.split("::")[-1], report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _acceptance:
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}")
