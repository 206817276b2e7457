import warnings

import pytest

from qpeuler.errors import AliasWarning, TruncationWarning
from qpeuler.potential import PotentialSpec
from qpeuler.qp_solver import SolverConfig, SolverProblem, newton_solve

# one line per acceptance criterion, written out in the terminal summary
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture(scope="session")
def k1_problem():
    return SolverProblem.build(PotentialSpec.from_width(1, 0.5, 160), 24)


@pytest.fixture(scope="session")
def k1_solve(k1_problem):
    """Cached solves of the kappa0 = 1 reference problem (K = 12, J = 24)."""
    cache = {}

    def get(eps, **kw):
        key = (eps, tuple(sorted(kw.items())))
        if key not in cache:
            kw.setdefault("K", 12)
            kw.setdefault("J", 24)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", TruncationWarning)
                warnings.simplefilter("ignore", AliasWarning)
                cache[key] = newton_solve(k1_problem, SolverConfig(eps, (1.0,), **kw))
        return cache[key]

    return get
