import sys
import numpy as np
import pytest

from penalized_hmm.chain import ptm_matrix
from penalized_hmm.core import EmissionParams, SwitchRates
from penalized_hmm.simulate import simulate_series

# generating values for the synthetic two-state data sets
LAMBDA_TOTALS = (0.0057, 0.0501)
GAMMA = (0.00142, 0.00422)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def penalized_truth():
    emission = EmissionParams.from_totals(LAMBDA_TOTALS)
    kernel = ptm_matrix(SwitchRates.two_state(*GAMMA).gamma, 1.0)
    return emission, kernel


def synthetic_series(T=14400, seed=1, entrance_times=None):
    emission, kernel = penalized_truth()
    return simulate_series(emission, kernel, [0.5, 0.5], T, seed, 1.0, entrance_times)


def n_switches(path) -> int:
    path = np.asarray(path)
    return int(np.count_nonzero(path[1:] != path[:-1]))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
