import json
import math

import numpy as np
import pytest

from stochflock.coefficients import ParticleEnsemble
from stochflock.errors import ConfigError
from stochflock.experiments import (DtHalvings, NDoubling, PhiRSweep, RSweep, StudySpec, alignment_discrepancy,
                                    coupled_gap, run_study, study_flocking, study_meanfield,
                                    study_R_uniformity, study_sla_limit, study_strat_ito)
from stochflock.integrator import GaussianInit, SimConfig
from stochflock.kernels import (Bump, Constant, ConstantForce, KernelSpec, Rational, Truncation, ZeroForce,
                                eval_phi)
from stochflock.measures import VelocityWeight
from stochflock.reference import reference_config, reference_kernel


def small(**kw):
    kw.setdefault("n", 8)
    kw.setdefault("t_final", 0.25)
    kw.setdefault("dt", 2.0 ** -5)
    return reference_config(**kw)


def test_strat_ito_small_deterministic():
    spec = StudySpec(small(), DtHalvings(2), (0, 1))
    a, b = study_strat_ito(spec), study_strat_ito(spec)
    assert a.numbers() == b.numbers()
    rows = a.tables["discrepancy"]
    assert len(rows) == 3 and all("D_noS_mean" in r for r in rows)
    assert {v.criterion for v in a.verdicts} == {"C1.slope", "C1.plateau"}
    assert a.seeds == {"init_seeds": [0, 1], "noise_seeds": [0, 1]}


def test_strat_ito_additive_noise_first_order():
    # psi~ = 0 and constant forcing: only the drift discretizations differ, D ~ dt
    kern = KernelSpec(Rational(1, 1), Constant(0.0), Bump(1, 2), ConstantForce((0.5, 0.0)))
    spec = StudySpec(small(kernel=kern, n=12, t_final=0.5), DtHalvings(3), (0, 1, 2))
    rep = study_strat_ito(spec)
    assert 0.8 <= rep.slopes["D"] <= 1.3
    assert any("vacuous" in n for n in rep.notes)


def test_strat_ito_validation():
    with pytest.raises(ConfigError):
        study_strat_ito(StudySpec(small(), DtHalvings(0), (0,)))


def test_coupled_gap_degenerate():
    assert coupled_gap(small(n=16), 16, 16, 3) == 0.0


def test_meanfield_frozen_dynamics():
    # T = 0 leaves only the Cauchy decay of nested empirical measures of the initial law
    spec = StudySpec(small(n=8, t_final=0.0), NDoubling((16, 32, 64, 128)), tuple(range(20)))
    rep = study_meanfield(spec)
    assert rep.passed, [v.line() for v in rep.verdicts]
    means = [r["sup_W2sq_mean"] for r in rep.tables["gaps"]]
    assert all(a > b for a, b in zip(means, means[1:]))


def test_meanfield_gap_brute_force():
    # frozen dynamics: the gap is W2^2 between the nested initial draws
    from stochflock.integrator import sample_initial
    from stochflock.measures import wasserstein_exact

    base = small(t_final=0.0)
    for seed in range(3):
        c = base.with_(init_seed=seed, noise_seed=seed)
        a = sample_initial(c.with_(n=4)).states
        b = sample_initial(c.with_(n=8)).states
        expect = wasserstein_exact(np.repeat(a, 2, axis=0), b).distance ** 2
        assert coupled_gap(base, 4, 8, seed) == pytest.approx(expect, rel=1e-14)


@pytest.mark.parametrize("n_list", [(8,), (32, 16), (16, 16)])
def test_meanfield_validation(n_list):
    with pytest.raises(ConfigError, match="study.n_list"):
        study_meanfield(StudySpec(small(), NDoubling(n_list), (0,)))


def test_r_uniformity_inactive_truncation_identical():
    # phi amplitude 0 removes the 1/R damping, so with all data well inside R = 10
    # nothing depends on R and both sweep points agree exactly
    kern = KernelSpec(Rational(1, 1), Constant(0.1), Bump(1.0, 2.0, 0.0), ZeroForce())
    base = SimConfig(n=32, kernel=kern, t_final=0.2, dt=0.02, truncation_R=10.0,
                     init=GaussianInit(pos_std=0.5, vel_std=0.5))
    spec = StudySpec(base, RSweep((10.0, 100.0), bandwidth=0.5), (0, 1))
    rows = study_R_uniformity(spec).tables["moments"]
    for key in ("sup_m2_mean", "sup_m4_mean", "averaging_norm_mean"):
        assert rows[0][key] == rows[1][key]


def test_r_uniformity_inactive_truncation_damping_only():
    # with the reference phi the only R dependence left is the O(1/R) damping of u_R
    base = SimConfig(n=32, kernel=reference_kernel(), t_final=0.2, dt=0.02, truncation_R=10.0,
                     init=GaussianInit(pos_std=0.5, vel_std=0.5))
    rows = study_R_uniformity(StudySpec(base, RSweep((10.0, 100.0), bandwidth=0.5), (0, 1))).tables["moments"]
    for key in ("sup_m2_mean", "sup_m4_mean", "averaging_norm_mean"):
        assert rows[0][key] == pytest.approx(rows[1][key], rel=0.05)


def test_r_uniformity_validation():
    with pytest.raises(ConfigError):
        study_R_uniformity(StudySpec(small(), RSweep((10.0, 1.0)), (0,)))


def test_sla_uniform_velocity_closed_form(rng):
    # all velocities v*: the k-NN mean is v*, u_R = v* m / (1/R + m) with m the local phi mass
    vstar = np.array([0.6, -0.8])
    x = rng.uniform(-2, 2, (400, 2))
    ens = ParticleEnsemble(x, np.tile(vstar, (400, 1)))
    for r1 in (0.5, 1.0):
        kern = KernelSpec(Constant(0), Constant(0), Bump(r1, 2 * r1, 1.0))
        for R in (10.0, 1e4):
            mass = eval_phi(kern, x[:, None, :] - x[None, :, :]).mean(axis=1)
            expect = np.mean(np.linalg.norm(vstar) * (1 / R) / (1 / R + mass))
            got = alignment_discrepancy(ens, kern, Truncation(R), 20)
            assert got == pytest.approx(expect, rel=1e-10)


def test_sla_wide_support_cluster_gap():
    # phi covers the whole domain: u_R is the damped global mean; k-NN with the cluster size
    # returns each cluster's own velocity
    m_a, m_b, R = 30, 20, 50.0
    x = np.vstack([np.column_stack([np.linspace(9, 11, m_a), np.zeros(m_a)]),
                   np.column_stack([np.linspace(-11, -9, m_b), np.zeros(m_b)])])
    v = np.vstack([np.tile([1.0, 0.0], (m_a, 1)), np.tile([-1.0, 0.0], (m_b, 1))])
    ens = ParticleEnsemble(x, v)
    kern = KernelSpec(Constant(0), Constant(0), Bump(100.0, 200.0, 1.0))
    n = m_a + m_b
    g = (m_a - m_b) / n / (1 / R + 1.0)
    expect = (m_a * abs(1 - g) + m_b * abs(1 + g)) / n
    assert alignment_discrepancy(ens, kern, Truncation(R), m_b) == pytest.approx(expect, rel=1e-12)


def test_sla_small_deterministic():
    kern = KernelSpec(Constant(0), Constant(0), Bump(1, 2), ConstantForce((0.2, 0.2)))
    base = SimConfig(n=64, kernel=kern, t_final=0.1, dt=0.05, truncation_R=1e4)
    spec = StudySpec(base, PhiRSweep((1.0, 0.5), n_proj=16), (0,))
    a, b = study_sla_limit(spec), study_sla_limit(spec)
    assert a.numbers() == b.numbers()
    assert {v.criterion for v in a.verdicts} == {"C5.alignment", "C5.cauchy"}


def test_sla_validation():
    with pytest.raises(ConfigError):
        study_sla_limit(StudySpec(small(), PhiRSweep((0.5, 1.0)), (0,)))


def flock_config(**kw):
    kern = KernelSpec(Constant(1.0), Constant(0.0), Bump(1e-4, 2e-4), ZeroForce())
    return SimConfig(**{"n": 32, "kernel": kern, "t_final": 1.0, "dt": 1e-3, "truncation_R": 1e6,
                        "record_every": 10, **kw})


def test_flocking_rate():
    rep = study_flocking(StudySpec(flock_config(), None, (0,)))
    assert rep.passed, [v.line() for v in rep.verdicts]
    assert rep.slopes["oracle_decay_rate"] == pytest.approx(2.0, rel=1e-6)


def test_flocking_equal_velocities_fixed_point():
    c = flock_config(init=GaussianInit(vel_mean=0.5, vel_std=0.0))
    rep = study_flocking(StudySpec(c, None, (0,)))
    assert all(row["velocity_variance"] == 0.0 for row in rep.tables["variance"])


def test_flocking_with_noise_bounded():
    kern = KernelSpec(Constant(1.0), Constant(0.5), Bump(1e-4, 2e-4), ZeroForce())
    c = flock_config(kernel=kern, dt=0.01)
    rep = study_flocking(StudySpec(c, None, tuple(range(5))), allow_noise=True)
    var = np.array([row["velocity_variance"] for row in rep.tables["variance"]]).reshape(5, -1)
    mean = var.mean(axis=0)
    assert np.all(np.isfinite(mean)) and mean.max() <= 1.5 * mean[0]
    assert not rep.verdicts


def test_flocking_precondition():
    kern = KernelSpec(Constant(1.0), Constant(0.3), Bump(1e-4, 2e-4), ZeroForce())
    with pytest.raises(ConfigError):
        study_flocking(StudySpec(flock_config(kernel=kern), None, (0,)))


def test_report_write(tmp_path):
    spec = StudySpec(flock_config(t_final=0.1), None, (0,), outputs=str(tmp_path / "out"))
    rep = run_study("flock", spec)
    files = sorted(p.name for p in (tmp_path / "out").iterdir())
    assert files == ["flocking_variance.csv", "flocking_verdicts.json"]
    summary = json.loads((tmp_path / "out" / "flocking_verdicts.json").read_text())
    assert summary["passed"] == rep.passed
    assert all(v["criterion"].startswith("C6.") for v in summary["verdicts"])
    assert {"criterion", "measured", "threshold", "passed"} <= set(summary["verdicts"][0])


def test_unknown_study_kind():
    with pytest.raises(ConfigError):
        run_study("bogus", StudySpec(small(), None, (0,)))


def test_study_spec_needs_seed():
    with pytest.raises(ConfigError):
        StudySpec(small(), None, ())
