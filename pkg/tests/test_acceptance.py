"""Acceptance criteria A1 to A11, one pass/fail line each."""

import pytest

import checks

_RESULTS: dict[str, checks.CheckResult] = {}


def _run(name: str) -> checks.CheckResult:
    if name not in _RESULTS:
        if name == "A11":
            certs = []
            for key in ("A1", "A2", "A3", "A4", "A5", "A6", "A7"):
                certs.extend(_run(key).certificates)
            _RESULTS[name] = checks.check_property_suites(certs)
        else:
            index = int(name[1:]) - 1
            _RESULTS[name] = checks.CHECKS[index]()
    return _RESULTS[name]


@pytest.mark.parametrize("name", [f"A{n}" for n in range(1, 12)])
def test_criterion(name, capsys):
    result = _run(name)
    with capsys.disabled():
        print(f"\n{result.line()}")
    assert result.ok, result.line()
