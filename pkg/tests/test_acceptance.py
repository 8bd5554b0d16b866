"""Acceptance criteria 1-11 at full level, one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v`` (or ``suncross verify``); each
criterion also prints its individual checks with value and threshold.
"""

import pytest

from suncross.verify import CRITERIA


@pytest.mark.slow
@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, capsys):
    res = CRITERIA[number](level="full", seed=0)
    with capsys.disabled():
        print()
        for line in res.lines():
            print(line)
    assert res.passed, "\n".join(c.line() for c in res.failed())
