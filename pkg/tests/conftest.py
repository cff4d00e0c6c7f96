import functools

import pytest

from cangraph.featurize import featurize_log
from cangraph.traffic_synth import synthesize_corpus

_CRITERIA = []


@functools.lru_cache(maxsize=None)
def corpus(kind, seed=7):
    """Default 60 s synthetic capture with one default attack (cached)."""
    return synthesize_corpus(kind, seed=seed)


@functools.lru_cache(maxsize=None)
def corpus_features(kind, seed=7):
    return featurize_log(corpus(kind, seed))


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(name, passed, detail)``.

    ``passed=None`` marks a criterion that could not run.
    """

    def record(name, passed, detail=""):
        _CRITERIA.append((name, passed, detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _CRITERIA:
        status = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
        terminalreporter.write_line(f"{status}  {name}  {detail}")
