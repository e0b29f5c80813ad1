import sys
import functools

import pytest

from gerbelab.datasets import EXAMPLES


@functools.lru_cache(maxsize=None)
def _example(name):
    return EXAMPLES[name]()


@pytest.fixture(scope="session")
def example():
    return _example


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
