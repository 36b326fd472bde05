import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

# criterion number -> (passed, detail), filled in by test_acceptance.py
ACCEPTANCE = {}


def record(number, passed, detail=""):
    ACCEPTANCE[number] = (bool(passed), detail)
    return passed


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
