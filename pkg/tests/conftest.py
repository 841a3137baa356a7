import pytest

from mg1kit import matan, presets, stationary

_ACCEPTANCE = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n): numbered acceptance criterion")


@pytest.fixture
def report():
    """Record one PASS/FAIL line for an acceptance criterion."""

    def rec(n, ok, detail):
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE.append((n, line))
        print(line)
        return ok

    return rec


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def solved():
    """Lazily solved presets: ``solved(name)`` -> (spec, sol, pi)."""
    cache = {}

    def get(name, min_level=64):
        key = (name, min_level)
        if key not in cache:
            spec = presets.get(name)
            sol = matan.solve(spec, kmax=16)
            pi = stationary.solve_infinite(spec, sol, min_level=min_level)
            cache[key] = (spec, sol, pi)
        return cache[key]

    return get
