"""Acceptance criteria, one test per criterion; each prints a PASS/FAIL line."""

import pytest

from habitat_opt.acceptance import CHECKS


@pytest.mark.parametrize("check", CHECKS, ids=[f"c{c.number:02d}_{c.check_name.replace(' ', '_')}" for c in CHECKS])
def test_criterion(check, capsys):
    result = check()
    with capsys.disabled():
        print("\n" + result.line())
    assert result.passed, result.detail
