import pytest

from memcapneuron import DC, CircuitState, FixedResistor, ModelParams, simulate_circuit


@pytest.fixture(scope="session")
def p():
    return ModelParams()


@pytest.fixture(scope="session")
def p2():
    return ModelParams(memristance="type2")


@pytest.fixture(scope="session")
def trace_8_0829(p):
    """Step response at V=8.0829 from rest, 1.5 time units."""
    return simulate_circuit(p, DC(8.0829), FixedResistor(), CircuitState(0.0, 0.0), 1.5)


@pytest.fixture(scope="session")
def trace_11_547(p):
    """Steady spiking at V=11.547 from the cycle-adjacent start."""
    return simulate_circuit(p, DC(11.547), FixedResistor(), CircuitState(6.6, 2.0207), 1.5, t_from=0.5)


# -- acceptance summary -----------------------------------------------------------

ACCEPTANCE: dict = {}


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion."""

    def record(number, title, ok, detail=""):
        ACCEPTANCE[number] = f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {title}: {detail}"
        print(ACCEPTANCE[number])
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
