import sys

import pytest

from adaseq.bound import BoundModel, calibrate_quadratic_bound
from adaseq.core.types import ConvexityConstants, ProblemSequence
from adaseq.losses import QuadraticRegressionLoss
from adaseq.scenarios import RegressionDrift

REG_CONSTANTS = ConvexityConstants(m=1.0, M=1.0, G=10.0, A=3.0, B=5.0, sigma=3.0)


@pytest.fixture(scope="session")
def reg_coeffs():
    return calibrate_quadratic_bound(3, 1.0, 1.0, 1.0, 1.0, safety=2.0)


@pytest.fixture(scope="session")
def reg_bound(reg_coeffs):
    return BoundModel(*reg_coeffs, REG_CONSTANTS, 10.0)


@pytest.fixture
def reg_loss():
    return QuadraticRegressionLoss(0.0, 1.0, 3)


@pytest.fixture
def reg_seq():
    return ProblemSequence(RegressionDrift(rho=1.0), 5.0, 25)


def run_regression(policy, seed, *, bound, eps=0.1, rho=1.0, radius=5.0, horizon=25, c_C=25.2, test_size=0):
    """One run of the drifting regression problem with the standard loss and optimizer."""
    from adaseq.core.loop import EvalConfig, run_sequence
    from adaseq.drift import DriftConfig

    seq = ProblemSequence(RegressionDrift(rho=rho), radius, horizon)
    return run_sequence(seq, policy, DriftConfig(c_C=c_C), bound, seed, loss=QuadraticRegressionLoss(0.0, 1.0, 3),
                        eps_target=eps, evaluation=EvalConfig(test_size=test_size))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and getattr(mod, "RESULTS", None):
        terminalreporter.section("acceptance criteria")
        for k in sorted(mod.RESULTS):
            terminalreporter.write_line(mod.RESULTS[k])
