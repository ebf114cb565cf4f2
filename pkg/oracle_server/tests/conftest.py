"""Verdict reporting for the wire-conformance gate, mirroring the client
package's release-gate summary lines."""

import pytest

_GATES = {}

EXPECTED_GATES = ("12 wire-protocol conformance",)


@pytest.fixture
def gate():
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
