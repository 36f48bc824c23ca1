import numpy as np
import pytest

from corrector_lab.environment import Environment, GeneratorModel, TorusShape, generate_environment

ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE:
        terminalreporter.write_line(line)


@pytest.fixture
def record():
    """Log one acceptance line, then assert it."""

    def _record(criterion, name, ok, detail=""):
        status = "PASS" if ok else "FAIL"
        ACCEPTANCE.append(f"[{status}] criterion {criterion}: {name} {detail}".rstrip())
        assert ok, f"criterion {criterion} ({name}) failed: {detail}"

    return _record


def make_env(d, L, seed=0, model=None, bounds=(1.0, 2.0)):
    return generate_environment(TorusShape(d, L), model or GeneratorModel.iid_uniform(), bounds, seed)


def env_from(values, bounds=(0.5, 10.0)):
    c = np.asarray(values, dtype=np.float64)
    return Environment(TorusShape(c.ndim - 1, c.shape[1]), c, bounds, GeneratorModel("iid-uniform"))
