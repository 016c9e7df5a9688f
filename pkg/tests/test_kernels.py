import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stochflock.errors import ConfigError, InvalidParameter
from stochflock.kernels import (Bump, Constant, ConstantForce, KernelSpec, QuadraticForce, Rational,
                                SmoothLinearForce, Truncation, ZeroForce, chi, eval_forcing, eval_phi,
                                eval_psi, eval_psi_tilde, phi_mass, rescale_phi, smoothstep, theta,
                                truncation_divergence_bound, validate_assumptions)

finite = st.floats(-1e3, 1e3, allow_nan=False)
vec2 = arrays(np.float64, 2, elements=finite)


def test_psi_examples(ref_kernel):
    assert eval_psi(ref_kernel, np.zeros(2)) == 1.0
    assert eval_psi(ref_kernel, np.array([1.0, 0.0])) == 0.5
    spec = KernelSpec(Constant(2.0), Constant(0.0), Bump(1, 2))
    assert eval_psi(spec, np.array([3.0, -7.0])) == 2.0
    assert eval_psi_tilde(ref_kernel, np.array([5.0, 5.0])) == 0.5


def test_phi_examples():
    b = Bump(1.0, 2.0, 1.0)
    assert eval_phi(b, np.zeros(2)) == 1.0
    assert eval_phi(b, np.array([2.5, 0.0])) == 0.0
    assert eval_phi(b, np.array([2.0, 0.0])) == 0.0
    # smoothstep at the middle of the band is exactly 1/2
    assert eval_phi(b, np.array([0.0, 1.5])) == pytest.approx(0.5, abs=1e-15)


def test_smoothstep_endpoints():
    assert smoothstep(0.0) == 0.0
    assert smoothstep(1.0) == 1.0
    assert smoothstep(0.5) == pytest.approx(0.5)


def test_theta_examples():
    tr = Truncation(10.0)
    v = np.array([3.0, 0.0])
    assert np.array_equal(theta(tr, v), v)
    assert np.array_equal(theta(tr, np.zeros(2)), np.zeros(2))
    far = np.array([0.0, 10.0 * 1.5 + 1.0])
    assert np.array_equal(theta(tr, far), np.zeros(2))


def test_chi_profile():
    tr = Truncation(10.0, 0.5)
    assert chi(tr, np.array([10.0, 0.0])) == 1.0
    assert chi(tr, np.array([15.0, 0.0])) == 0.0
    mid = chi(tr, np.array([12.5, 0.0]))
    assert mid == pytest.approx(0.5)


@settings(max_examples=200, deadline=None)
@given(v=vec2, R=st.sampled_from([1.0, 10.0, 100.0]), w=st.sampled_from([0.1, 0.5, 1.0]))
def test_truncation_sandwich(v, R, w):
    tr = Truncation(R, w)
    t = theta(tr, v)
    nv = np.linalg.norm(v)
    assert np.linalg.norm(t) <= min(nv, tr.hard_cap) + 1e-12
    if nv <= R:
        assert np.array_equal(t, v)
    assert np.array_equal(theta(tr, -v), -t)
    c = chi(tr, v)
    assert 0.0 <= c <= 1.0


SYM_KERNEL = KernelSpec(Rational(1.0, 2.0), Constant(0.5), Bump(1.0, 2.0, 3.0))


@settings(max_examples=100, deadline=None)
@given(x=vec2)
def test_symmetry(x):
    assert eval_psi(SYM_KERNEL, x) == eval_psi(SYM_KERNEL, -x)
    assert eval_psi_tilde(SYM_KERNEL, x) == eval_psi_tilde(SYM_KERNEL, -x)
    assert eval_phi(SYM_KERNEL, x) == eval_phi(SYM_KERNEL, -x)


def test_divergence_bound_uniform_in_R():
    bounds, analytic = truncation_divergence_bound(0.5, (1.0, 10.0, 100.0))
    assert all(np.isfinite(bounds))
    assert max(bounds) <= analytic
    # the divergence profile is scale free, so the sup is the same for every R
    assert max(bounds) - min(bounds) < 1e-3 * max(bounds)


def test_rescale_phi():
    spec = KernelSpec(Rational(1, 1), Constant(0), Bump(1.0, 2.0, 1.0), dim=2)
    assert rescale_phi(spec, 1.0) == spec
    half = rescale_phi(spec, 0.5)
    assert eval_phi(half, np.zeros(2)) == 4.0
    assert half.phi.r2 == 1.0
    with pytest.raises(InvalidParameter):
        rescale_phi(spec, 0.0)


def test_mollifier_mass_closed_form():
    # d = 2: pi r1^2 plus 2 pi int_1^2 r (1 - s(r - 1)) dr = pi + 2 pi 9/14
    spec = KernelSpec(Constant(0), Constant(0), Bump(1.0, 2.0, 1.0), dim=2)
    exact = 16.0 * math.pi / 7.0
    for r in (2.0, 1.0, 0.5, 0.25):
        assert phi_mass(rescale_phi(spec, r)) == pytest.approx(exact, rel=1e-6)


def test_forcing_families():
    spec = KernelSpec(Constant(0), Constant(0), Bump(1, 2), ConstantForce((1.0, -2.0)))
    assert np.array_equal(eval_forcing(spec, np.zeros((3, 2))), np.tile([1.0, -2.0], (3, 1)))
    spec = KernelSpec(Constant(0), Constant(0), Bump(1, 2), SmoothLinearForce(2.0, 1.0))
    # F(x) = -a x (1 + exp(-|x|^2 / l^2)) at x = e1
    assert eval_forcing(spec, np.array([1.0, 0.0]))[0] == pytest.approx(-2.0 * (1 + math.exp(-1.0)))


def test_validate_reference_passes(ref_kernel):
    report = validate_assumptions(ref_kernel)
    assert report.passed, report.summary()
    assert report.metrics["sup_psi"] == 1.0
    assert report.metrics["inf_phi_inner_ball"] > 0


def test_validate_phi_order():
    spec = KernelSpec(Rational(1, 1), Constant(0), Bump(3.0, 2.0))
    report = validate_assumptions(spec)
    assert not report.passed
    assert any(f.assumption == "phi" for f in report.failures)
    assert "[phi]" in report.summary()


def test_validate_quadratic_forcing():
    spec = KernelSpec(Rational(1, 1), Constant(0), Bump(1, 2), QuadraticForce(1.0))
    report = validate_assumptions(spec)
    assert [f.assumption for f in report.failures] == ["sublinearity"]


def test_validate_linear_forcing_passes():
    spec = KernelSpec(Rational(1, 1), Constant(0), Bump(1, 2), SmoothLinearForce(1.0))
    report = validate_assumptions(spec)
    assert report.passed, report.summary()
    assert report.metrics["forcing_linear_growth_constant"] == pytest.approx(1.0, rel=0.05)


def test_kernel_spec_roundtrip(ref_kernel):
    assert KernelSpec.from_dict(ref_kernel.to_dict()) == ref_kernel
    spec = KernelSpec(Constant(1), Constant(0), Bump(1, 2), ConstantForce((0.5, 0.5)))
    assert KernelSpec.from_dict(spec.to_dict()) == spec


def test_kernel_spec_errors_carry_path(ref_kernel):
    data = ref_kernel.to_dict()
    del data["psi"]
    with pytest.raises(ConfigError, match="kernel.psi"):
        KernelSpec.from_dict(data)
    data = ref_kernel.to_dict()
    data["phi"] = {"kind": "gauss"}
    with pytest.raises(ConfigError, match="kernel.phi"):
        KernelSpec.from_dict(data)
    assert isinstance(KernelSpec.from_dict(ref_kernel.to_dict()).forcing, ZeroForce)
