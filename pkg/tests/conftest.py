import numpy as np
import pytest

from stochflock.coefficients import ParticleEnsemble
from stochflock.kernels import Bump, Constant, KernelSpec, Rational, ZeroForce

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def ref_kernel():
    return KernelSpec(Rational(1.0, 1.0), Constant(0.5), Bump(1.0, 2.0, 1.0), ZeroForce(), 2)


def random_ensemble(rng, n, d=2, pos_scale=1.0, vel_scale=1.0):
    return ParticleEnsemble(pos_scale * rng.standard_normal((n, d)), vel_scale * rng.standard_normal((n, d)))
