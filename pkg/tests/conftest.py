"""Shared test plumbing.

The release-gate tests in test_acceptance.py each guard one user-visible
guarantee.  They record their verdict through the `gate` fixture so the
terminal summary ends with one PASS/FAIL line per gate, regardless of
output capturing.
"""

import pytest

# gate name -> (ok, detail).  Filled by the `gate` fixture at run time.
_GATES = {}

# Every gate that test_acceptance.py is expected to report.  A gate that
# never records (crash before the final assert, deselected test) shows up
# as NOT RUN instead of silently vanishing.
EXPECTED_GATES = (
    "01 tv-loss brute-force oracle",
    "02 gradient-estimate fidelity",
    "03 sphere convergence",
    "04 projection invariant",
    "05 clean-corpus detection",
    "06 reference attack",
    "07 budget-matched ordering",
    "08 plateau trigger exactness",
    "09 average-precision oracle",
    "10 byte-identical reruns",
    "11 ablation grid shape",
)


@pytest.fixture
def gate():
    """Record a gate verdict and assert it in one step."""

    def _record(name, ok, detail=""):
        _GATES[name] = (bool(ok), detail)
        assert ok, f"gate {name}: {detail}"

    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _GATES:
        return
    terminalreporter.section("release gates")
    for name in EXPECTED_GATES:
        if name in _GATES:
            ok, detail = _GATES[name]
            verdict = "PASS" if ok else "FAIL"
        else:
            verdict, detail = "NOT RUN", ""
        line = f"gate {name}: {verdict}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
    for name in sorted(set(_GATES) - set(EXPECTED_GATES)):
        ok, detail = _GATES[name]
        line = f"gate {name}: {'PASS' if ok else 'FAIL'}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
