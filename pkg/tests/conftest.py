import numpy as np
import pytest

from hybridsde import SystemModel, solve_care, LqrSpec

REF_A = [[0.0, 1.0], [0.5, 0.0]]
REF_B = [[0.0], [1.0]]
REF_X0 = [1.5, 0.5]


@pytest.fixture(scope="session")
def ref_gain():
    return solve_care(LqrSpec(REF_A, REF_B, np.eye(2), [[1.0]])).K


@pytest.fixture(scope="session")
def ref_model(ref_gain):
    return SystemModel(REF_A, REF_B, ref_gain, REF_X0)


def random_matrix(rng, n, norm):
    """Random n x n matrix rescaled to the given 2-norm."""
    a = rng.standard_normal((n, n))
    return a * (norm / np.linalg.norm(a, 2))


ACCEPTANCE_LINES = []


def record_acceptance(number, title, ok, detail):
    line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
