import math

import pytest

from coherence_lab import fwhm_to_tau

# tau_p used by the worked examples of the unit conversions
TAU_EXAMPLE = 75 / 2.3548200450309493
# dataset pulse width: 75 fs intensity FWHM
TAU_75 = fwhm_to_tau(75.0, "intensity")

_ACCEPTANCE = []


@pytest.fixture
def tau_75():
    return TAU_75


@pytest.fixture
def report():
    """Record one pass/fail line per acceptance criterion."""

    def _report(number, title, passed, detail):
        _ACCEPTANCE.append((number, title, bool(passed), detail))
        return passed

    return _report


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {number:>2}. {title}: {detail}")


def rel_err(a, b):
    return abs(a - b) / abs(b) if b else math.inf
