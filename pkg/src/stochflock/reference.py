"""Reference study configurations.

These are the frozen setups behind the acceptance suite, the demo scripts and
the example config files. Changing any number here changes what the
acceptance thresholds were calibrated against.
"""
from __future__ import annotations

from .experiments import DtHalvings, NDoubling, PhiRSweep, RSweep, StudySpec
from .integrator import GaussianInit, SimConfig, TwoClusterInit
from .kernels import Bump, Constant, ConstantForce, KernelSpec, Rational, ZeroForce
from .measures import VelocityWeight


def reference_kernel(dim=2):
    """psi = 1/(1+|x|^2), psi~ = 0.5, phi = bump(1, 2), no forcing."""
    return KernelSpec(Rational(1.0, 1.0), Constant(0.5), Bump(1.0, 2.0, 1.0), ZeroForce(), dim)


def reference_config(**changes):
    base = SimConfig(n=16, kernel=reference_kernel(), t_final=1.0, dt=2.0 ** -6,
                     truncation_R=50.0, init=GaussianInit())
    return base.with_(**changes) if changes else base


def strat_ito_study(seeds=tuple(range(8))):
    return StudySpec(reference_config(), DtHalvings(4), tuple(seeds))


def meanfield_study(seeds=tuple(range(20))):
    base = reference_config(n=32, dt=0.02, record_every=5)
    return StudySpec(base, NDoubling((32, 64, 128, 256)), tuple(seeds))


def r_uniformity_study(seeds=tuple(range(10))):
    # constant forcing so the common noise drives the moments and chi_R matters
    kern = KernelSpec(Rational(1.0, 1.0), Constant(0.5), Bump(1.0, 2.0, 1.0),
                      ConstantForce((1.0, 0.5)), 2)
    base = SimConfig(n=512, kernel=kern, t_final=2.0, dt=0.02, truncation_R=1.0,
                     record_every=5, init=GaussianInit())
    sweep = RSweep((1.0, 10.0, 100.0), bandwidth=0.5, eta=1.0 / 6.0,
                   weight=VelocityWeight("gaussian", scale=1.0))
    return StudySpec(base, sweep, tuple(seeds))


def sla_study(seeds=(0, 1)):
    # R large so the 1/R damping in u_R sits below the spatial resolution
    kern = KernelSpec(Constant(0.0), Constant(0.0), Bump(1.0, 2.0, 1.0), ConstantForce((0.2, 0.2)), 2)
    base = SimConfig(n=4096, kernel=kern, t_final=0.5, dt=0.01, truncation_R=1e4, record_every=50,
                     init=TwoClusterInit(separation=2.0, pos_std=0.5, speed=1.0, vel_std=0.05))
    return StudySpec(base, PhiRSweep((2.0, 1.0, 0.5, 0.25), k=None, n_proj=64, proj_seed=0), tuple(seeds))


def flocking_study(seeds=(0,), lam=1.0):
    # tiny phi support and huge R make the Motsch-Tadmor damping ~ N/R, negligible
    kern = KernelSpec(Constant(lam), Constant(0.0), Bump(1e-4, 2e-4, 1.0), ZeroForce(), 2)
    base = SimConfig(n=64, kernel=kern, t_final=2.0, dt=1e-3, truncation_R=1e6, record_every=10)
    return StudySpec(base, None, tuple(seeds))


STUDY_SPECS = {
    "strat-ito": strat_ito_study,
    "meanfield": meanfield_study,
    "sweep-R": r_uniformity_study,
    "sweep-r": sla_study,
    "flock": flocking_study,
}
