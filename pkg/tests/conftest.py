import numpy as np
import pytest

# filled by tests/test_acceptance.py, one line per criterion
ACCEPTANCE_LINES: list[str] = []

from drspcrl.robust_core import ValueSupport


def random_support(rng, n=None, low=-10.0, high=10.0):
    n = int(rng.integers(2, 5)) if n is None else n
    return ValueSupport(rng.uniform(low, high, n), rng.dirichlet(np.ones(n)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def mixed_policy_table(table, p_act):
    """The policy actually executed under action noise p: (1 - p) pi + p uniform."""
    table = np.asarray(table, dtype=float)
    return (1 - p_act) * table + p_act / table.shape[1]


def chain_test_policy():
    """A fixed stochastic chain policy leaning right, with a left escape from the trap."""
    from drspcrl.agent import TabularPolicy

    logits = np.zeros((7, 2))
    logits[1:6, 1] = 1.5
    logits[1, :] = [0.5, 0.0]
    return TabularPolicy(logits)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
