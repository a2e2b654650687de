"""Every acceptance criterion at its stated tolerance; one PASS/FAIL line per criterion.

The full run takes several minutes.  Lines are echoed as each criterion
finishes and repeated in the pytest terminal summary.
"""

from __future__ import annotations

import sys

import pytest

from fluctlab.jobs import CRITERIA, run_acceptance
from fluctlab.statlab.pool import resolve_threads

from conftest import ACCEPTANCE_LINES

NUMBERS = sorted(list(CRITERIA) + [11])


@pytest.fixture(scope="module")
def outcomes(tmp_path_factory, pytestconfig):
    lines = pytestconfig.stash[ACCEPTANCE_LINES]

    def echo(line):
        lines.append(line)
        print(line, file=sys.__stdout__, flush=True)

    out = tmp_path_factory.mktemp("acceptance")
    return {o.number: o for o in run_acceptance(out, None, resolve_threads(None), echo=echo)}


def test_every_criterion_reported(outcomes):
    assert sorted(outcomes) == NUMBERS


@pytest.mark.parametrize("number", NUMBERS)
def test_criterion(outcomes, number):
    o = outcomes[number]
    assert o.passed, o.line()
