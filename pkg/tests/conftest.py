"""Shared fixtures plus the acceptance-criteria summary hook.

Acceptance tests register one line per criterion in RESULTS (through the
``criterion`` decorator in test_acceptance.py); the terminal-summary hook
prints them after the normal pytest output so every run of the acceptance
module ends with an explicit PASS/FAIL line per criterion.
"""

import numpy as np
import pytest

from planartrap import build_reference_trap
from planartrap.constants import TWO_PI, YB171_MASS_AMU
from planartrap.crystal import HarmonicTrap
from planartrap.trap import IonSpecies

RESULTS = {}


@pytest.fixture(scope="session")
def yb():
    return IonSpecies.from_amu(YB171_MASS_AMU)


@pytest.fixture(scope="session")
def reference():
    return build_reference_trap()


@pytest.fixture(scope="session")
def paper_trap_10(yb):
    """Harmonic trap at the documented 10-ion operating frequencies."""
    return HarmonicTrap(
        TWO_PI * 0.427e6, TWO_PI * 1.5e6, TWO_PI * 0.561e6, species=yb
    )


@pytest.fixture()
def rng():
    return np.random.default_rng(20260822)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not RESULTS:
        return
    terminalreporter.ensure_newline()
    terminalreporter.section("acceptance criteria")
    for num in sorted(RESULTS):
        name, ok, note = RESULTS[num]
        line = f"criterion {num:2d} {name}: {'PASS' if ok else 'FAIL'}"
        if note:
            line += f"  [{note}]"
        terminalreporter.write_line(line)
