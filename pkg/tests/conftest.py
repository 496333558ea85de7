import numpy as np
import pytest

from fshuber.core import CountVector
from fshuber.models import BinomialModel, StructuralModel
from fshuber.studies import Scenario, simulate_contaminated


class FixedModel(StructuralModel):
    """Parameter-free model returning fixed atom probabilities (oracle plumbing)."""

    name = "fixed"
    dim = 1

    def __init__(self, p):
        self._p = np.asarray(p, dtype=float)
        self.m = self._p.size

    def atom_probs(self, theta):
        return self._p

    def atom_prob_grads(self, theta):
        return np.zeros((1, self.m))


def central_difference(f, x, h=1e-6):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        out.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h))
    return np.array(out)


@pytest.fixture(scope="session")
def example_counts():
    """One dataset from the headline scenario (n=300, M=20, theta0=0.3, eps0=0.2, theta_c=0.75)."""
    model = BinomialModel(20)
    return CountVector.from_observations(simulate_contaminated(Scenario(), 0), model.m)


ACCEPTANCE_LINES = {}


@pytest.fixture
def acceptance(request, capsys):
    """Record one PASS/FAIL line for an acceptance criterion and show it immediately."""

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[number] = line
        with capsys.disabled():
            print("\n" + line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
