import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochflock.coefficients import (CellIndex, ParticleEnsemble, eval_bundle, eval_k_r, eval_l_cs,
                                     eval_l_mt, eval_s_r, eval_u_r)
from stochflock.errors import InvalidIndex, InvalidInput
from stochflock.kernels import (Bump, Constant, ConstantForce, KernelSpec, Rational, SmoothLinearForce,
                                Truncation, ZeroForce, theta)

from conftest import random_ensemble

BIG = Truncation(1e6)


def one_d(x, v):
    return ParticleEnsemble(np.asarray(x, float)[:, None], np.asarray(v, float)[:, None])


def test_l_cs_two_particles():
    spec = KernelSpec(Constant(1.0), Constant(0.0), Bump(1, 2), dim=1)
    ens = one_d([0.0, 0.0], [0.0, 2.0])
    assert eval_l_cs(ens, spec, BIG, 0)[0] == 1.0
    assert eval_l_cs(ens, spec, BIG, 1)[0] == -1.0


def test_l_cs_degenerate(rng, ref_kernel):
    single = ParticleEnsemble(rng.standard_normal((1, 2)), rng.standard_normal((1, 2)))
    assert np.array_equal(eval_l_cs(single, ref_kernel, BIG, 0), np.zeros(2))
    same_v = ParticleEnsemble(rng.standard_normal((10, 2)), np.tile([0.3, -1.0], (10, 1)))
    assert np.array_equal(eval_l_cs(same_v, ref_kernel, BIG, np.arange(10)), np.zeros((10, 2)))


def test_u_r_single_particle():
    spec = KernelSpec(Constant(0.0), Constant(0.0), Bump(1, 2, 1.0), dim=1)
    ens = one_d([0.0], [1.0])
    tr = Truncation(10.0)
    assert eval_u_r(ens, spec, tr, np.array([0.0]))[0] == pytest.approx(1.0 / 1.1, rel=1e-15)
    assert eval_l_mt(ens, spec, tr, 0)[0] == pytest.approx(-1.0 / 11.0, rel=1e-14)
    # no particle within r2
    assert eval_u_r(ens, spec, tr, np.array([5.0]))[0] == 0.0


def test_l_mt_isolated_particle(ref_kernel):
    ens = ParticleEnsemble(np.array([[0.0, 0.0], [100.0, 0.0]]), np.array([[1.0, 2.0], [0.0, 0.0]]))
    tr = Truncation(50.0)
    # only the self term survives: u_R = (phi(0) v / N) / (1/R + phi(0) / N)
    u = eval_u_r(ens, ref_kernel, tr, ens.positions[0])
    assert np.allclose(u, 0.5 * np.array([1.0, 2.0]) / (1.0 / 50.0 + 0.5), rtol=1e-15)
    assert np.array_equal(eval_l_mt(ens, ref_kernel, tr, 0), u - ens.velocities[0])


def test_u_r_uniform_velocity_approaches_v(rng, ref_kernel):
    vstar = np.array([0.7, -0.4])
    ens = ParticleEnsemble(rng.uniform(-1, 1, (50, 2)), np.tile(vstar, (50, 1)))
    errs = []
    for R in (10.0, 100.0, 1e4):
        u = eval_u_r(ens, ref_kernel, Truncation(R), np.zeros(2))
        assert np.linalg.norm(u) <= np.linalg.norm(vstar)
        errs.append(np.linalg.norm(u - vstar))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-4


def test_k_r_examples(rng):
    ens = random_ensemble(rng, 20)
    spec = KernelSpec(Rational(1, 1), Constant(0.0), Bump(1, 2), ZeroForce())
    assert np.array_equal(eval_k_r(ens, spec, BIG, np.arange(20)), np.zeros((20, 2)))
    # psi~ = sqrt(2 sigma) constant: K = sqrt(2 sigma) (mean(v) - v_i)
    c = np.sqrt(2 * 0.3)
    spec = KernelSpec(Rational(1, 1), Constant(c), Bump(1, 2), ZeroForce())
    k = eval_k_r(ens, spec, BIG, np.arange(20))
    oracle = c * (ens.velocities.mean(axis=0) - ens.velocities)
    assert np.allclose(k, oracle, rtol=0, atol=1e-14)
    single = ParticleEnsemble(np.array([[1.0, 1.0]]), np.array([[5.0, 0.0]]))
    spec = KernelSpec(Rational(1, 1), Constant(c), Bump(1, 2), ConstantForce((0.25, -3.0)))
    assert np.array_equal(eval_k_r(single, spec, Truncation(10.0), 0), np.array([0.25, -3.0]))


def test_s_r_examples(rng):
    ens = one_d([0.0, 0.5], [0.0, 0.0])
    spec = KernelSpec(Constant(0.0), Constant(1.0), Bump(1, 2), dim=1)
    k1, k2 = 0.3, -1.7
    s = eval_s_r(ens, spec, BIG, 0, k_all=np.array([[k1], [k2]]))
    assert s[0] == pytest.approx(0.25 * (k2 - k1), rel=1e-15)
    # psi~ = 0
    ens2 = random_ensemble(rng, 12)
    zero = KernelSpec(Rational(1, 1), Constant(0.0), Bump(1, 2), ConstantForce((1.0, 1.0)))
    assert np.array_equal(eval_s_r(ens2, zero, BIG, np.arange(12)), np.zeros((12, 2)))
    # equal K everywhere: constant forcing and equal velocities
    eq = ParticleEnsemble(rng.uniform(-1, 1, (12, 2)), np.tile([1.0, 2.0], (12, 1)))
    spec = KernelSpec(Rational(1, 1), Rational(0.5, 1.0), Bump(1, 2), ConstantForce((1.0, 1.0)))
    assert np.array_equal(eval_s_r(eq, spec, Truncation(50.0), np.arange(12)), np.zeros((12, 2)))


def test_s_r_brute_force(rng):
    # independent direct double loop
    ens = random_ensemble(rng, 9)
    spec = KernelSpec(Rational(1, 1), Rational(0.7, 1.5), Bump(1, 2), SmoothLinearForce(1.0))
    tr = Truncation(2.0)
    k = eval_k_r(ens, spec, tr, np.arange(9))
    x = ens.positions
    expect = np.zeros((9, 2))
    for i in range(9):
        for j in range(9):
            w = 0.7 / (1 + np.sum((x[i] - x[j]) ** 2)) ** 1.5
            expect[i] += w * (k[j] - k[i])
    expect /= 2 * 9
    assert np.allclose(eval_s_r(ens, spec, tr, np.arange(9)), expect, rtol=1e-12, atol=1e-14)


def test_bundle_identity(rng, ref_kernel):
    ens = random_ensemble(rng, 40, vel_scale=3.0)
    b = eval_bundle(ens, ref_kernel, Truncation(2.0))
    assert np.array_equal(b.drift, b.l_cs + b.l_mt + b.s)
    single = ens.subset(1)
    b1 = eval_bundle(single, ref_kernel, Truncation(2.0))
    assert np.array_equal(b1.l_cs, np.zeros((1, 2)))
    assert np.array_equal(b1.s, np.zeros((1, 2)))
    strat = eval_bundle(ens, ref_kernel, Truncation(2.0), with_s=False)
    assert np.array_equal(strat.drift, strat.l_cs + strat.l_mt)


def test_cell_list_bit_identical(rng, ref_kernel):
    ens = random_ensemble(rng, 200, pos_scale=4.0)
    tr = Truncation(50.0)
    brute = eval_u_r(ens, ref_kernel, tr, ens.positions)
    indexed = eval_u_r(ens, ref_kernel, tr, ens.positions, index=CellIndex.build(ens, ref_kernel))
    assert np.array_equal(brute, indexed)


def test_cell_list_dense_branch_bit_identical(rng):
    # support covers most of the cloud, so queries take the dense scan path
    spec = KernelSpec(Constant(0), Constant(0), Bump(3.0, 6.0))
    ens = random_ensemble(rng, 300)
    tr = Truncation(50.0)
    q = rng.uniform(-2, 2, (40, 2))
    assert np.array_equal(eval_u_r(ens, spec, tr, q),
                          eval_u_r(ens, spec, tr, q, index=CellIndex.build(ens, spec)))


def test_cell_neighbors_superset(rng):
    ens = random_ensemble(rng, 500, pos_scale=3.0)
    index = CellIndex(ens.positions, 0.7)
    ids = np.arange(500)
    for q in rng.uniform(-4, 4, (50, 2)):
        near = ids[np.linalg.norm(ens.positions - q, axis=1) <= 0.7]
        assert set(near) <= set(index.neighbors(q).tolist())
    # each particle sits in exactly one cell
    assert np.array_equal(np.sort(index.order), ids)


def test_stale_index_rejected(rng, ref_kernel):
    ens = random_ensemble(rng, 30)
    index = CellIndex.build(ens, ref_kernel)
    moved = ParticleEnsemble(ens.positions + 1e-3, ens.velocities)
    with pytest.raises(InvalidIndex):
        eval_u_r(moved, ref_kernel, Truncation(10.0), moved.positions, index=index)


def test_hull_bound(rng, ref_kernel):
    for _ in range(1000):
        n = int(rng.integers(1, 12))
        ens = random_ensemble(rng, n, pos_scale=1.5, vel_scale=2.0)
        tr = Truncation(float(rng.choice([1.0, 10.0, 100.0])))
        q = rng.uniform(-3, 3, (4, 2))
        u = np.linalg.norm(eval_u_r(ens, ref_kernel, tr, q), axis=1)
        cap = np.max(np.linalg.norm(theta(tr, ens.velocities), axis=1))
        assert np.all(u <= cap)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(2, 60), R=st.sampled_from([1.0, 10.0, 100.0]))
def test_cs_antisymmetry(seed, n, R):
    gen = np.random.default_rng(seed)
    ens = random_ensemble(gen, n, vel_scale=5.0)
    spec = KernelSpec(Rational(1, 1), Constant(0.5), Bump(1, 2))
    l = eval_l_cs(ens, spec, Truncation(R), np.arange(n))
    scale = max(np.sum(np.abs(l)), 1e-300)
    assert np.all(np.abs(l.sum(axis=0)) <= 1e-10 * scale)


def test_sublinearity(rng):
    # a priori constant from the kernel sups: |L_CS| <= sup psi (|v_i| + mean|v|),
    # |K| <= C_F (1 + |x_i|) + sup psi~ (|v_i| + mean|v|), |S| <= 1.5 sup psi~ C_K (...)
    spec = KernelSpec(Rational(1, 1), Constant(0.5), Bump(1, 2), SmoothLinearForce(1.0))
    c_k = 2.0 + 0.5
    c = max(1.0, c_k, 1.5 * 0.5 * c_k)
    for R in (1.0, 10.0, 100.0):
        tr = Truncation(R)
        for _ in range(100):
            ens = random_ensemble(rng, 25, pos_scale=float(rng.choice([1, 10, 100])),
                                  vel_scale=float(rng.choice([1, 10, 100])))
            zn = np.linalg.norm(ens.states, axis=1)
            bound = c * (1.0 + zn + zn.mean())
            b = eval_bundle(ens, spec, tr)
            for arr in (b.l_cs, b.k, b.s):
                assert np.all(np.linalg.norm(arr, axis=1) <= bound)


def test_lipschitz_spot_check(rng):
    spec = KernelSpec(Rational(1, 1), Constant(0.5), Bump(1, 2), SmoothLinearForce(1.0))
    n = 40
    for R in (1.0, 10.0, 100.0):
        tr = Truncation(R)
        ratios_self, ratios_other = [], []
        for _ in range(20):
            ens = random_ensemble(rng, n, vel_scale=2.0)
            base = eval_bundle(ens, spec, tr).drift
            for delta in (1e-5, 1e-6):
                dz = rng.standard_normal(4)
                dz *= delta / np.linalg.norm(dz)
                x = ens.positions.copy()
                v = ens.velocities.copy()
                x[0] += dz[:2]
                v[0] += dz[2:]
                moved = eval_bundle(ParticleEnsemble(x, v), spec, tr).drift
                change = np.linalg.norm(moved - base, axis=1)
                ratios_self.append(change[0] / delta)
                ratios_other.append(change[1:].max() * n / delta)
        # finite and of moderate size; the O(delta / N) effect on other particles holds uniformly
        assert np.isfinite(max(ratios_self)) and max(ratios_self) < 10 * R + 50
        assert max(ratios_other) < 10 * R + 50


def test_ensemble_validation():
    with pytest.raises(InvalidInput):
        ParticleEnsemble(np.array([[np.nan, 0.0]]), np.zeros((1, 2)))
    with pytest.raises(InvalidInput):
        ParticleEnsemble(np.zeros((3, 2)), np.zeros((2, 2)))
    ens = ParticleEnsemble(np.arange(6.0).reshape(3, 2), np.ones((3, 2)))
    assert ens.n == 3 and ens.dim == 2 and ens.states.shape == (3, 4)
