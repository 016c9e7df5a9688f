"""Weight functions, truncations and assumption checks.

The interaction weights are restricted to small parametric families so that a
model is fully described by serializable data:

* ``Rational(lam, gamma)``   psi(x) = lam / (1 + |x|^2)^gamma
* ``Constant(c)``            psi(x) = c
* ``Bump(r1, r2, amplitude)`` flat top on |x| <= r1, smoothstep decay to zero at r2
* forcings ``ZeroForce``, ``ConstantForce``, ``SmoothLinearForce`` and
  ``QuadraticForce`` (the last one grows too fast and only exists so the
  validator has something to reject).

Truncations chi_R and theta_R share one C^2 radial profile built from the
quintic smoothstep ``s(u) = 6u^5 - 15u^4 + 10u^3`` over the band
``[R, R(1 + width)]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np
from numba import njit

from .errors import ConfigError, InvalidParameter

__all__ = [
    "Rational", "Constant", "Bump", "ZeroForce", "ConstantForce", "SmoothLinearForce",
    "QuadraticForce", "KernelSpec", "Truncation", "eval_weight", "eval_psi", "eval_psi_tilde",
    "eval_phi", "eval_forcing", "chi", "theta", "rescale_phi", "phi_mass",
    "validate_assumptions", "truncation_divergence_bound", "ValidationReport", "Failure",
]

# Codes shared with the compiled loops in ``coefficients``.
WEIGHT_CONSTANT = 0
WEIGHT_RATIONAL = 1
FORCE_ZERO = 0
FORCE_CONSTANT = 1
FORCE_SMOOTH_LINEAR = 2
FORCE_QUADRATIC = 3


@dataclass(frozen=True)
class Rational:
    lam: float
    gamma: float

    kind = "rational"

    def to_dict(self):
        return {"kind": self.kind, "lambda": self.lam, "gamma": self.gamma}


@dataclass(frozen=True)
class Constant:
    c: float

    kind = "constant"

    def to_dict(self):
        return {"kind": self.kind, "c": self.c}


@dataclass(frozen=True)
class Bump:
    r1: float
    r2: float
    amplitude: float = 1.0

    kind = "bump"

    def to_dict(self):
        return {"kind": self.kind, "r1": self.r1, "r2": self.r2, "amplitude": self.amplitude}


@dataclass(frozen=True)
class ZeroForce:
    kind = "zero"

    def to_dict(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class ConstantForce:
    vector: tuple

    kind = "constant"

    def to_dict(self):
        return {"kind": self.kind, "vector": list(self.vector)}


@dataclass(frozen=True)
class SmoothLinearForce:
    """F(x) = -amplitude * x * (1 + exp(-|x|^2 / scale^2)); grows linearly."""

    amplitude: float
    scale: float = 1.0

    kind = "smooth_linear"

    def to_dict(self):
        return {"kind": self.kind, "amplitude": self.amplitude, "scale": self.scale}


@dataclass(frozen=True)
class QuadraticForce:
    """F(x) = amplitude * |x| * x. Not sublinear; rejected by the validator."""

    amplitude: float

    kind = "quadratic"

    def to_dict(self):
        return {"kind": self.kind, "amplitude": self.amplitude}


Weight = Union[Rational, Constant]
Forcing = Union[ZeroForce, ConstantForce, SmoothLinearForce, QuadraticForce]


@dataclass(frozen=True)
class KernelSpec:
    """Complete description of the interaction weights and forcing."""

    psi: Weight
    psi_tilde: Weight
    phi: Bump
    forcing: Forcing = field(default_factory=ZeroForce)
    dim: int = 2

    def to_dict(self):
        return {
            "dim": self.dim,
            "psi": self.psi.to_dict(),
            "psi_tilde": self.psi_tilde.to_dict(),
            "phi": self.phi.to_dict(),
            "forcing": self.forcing.to_dict(),
        }

    @classmethod
    def from_dict(cls, data, path="kernel"):
        if not isinstance(data, dict):
            raise ConfigError("expected a table", path)
        for key in ("psi", "psi_tilde", "phi"):
            if key not in data:
                raise ConfigError("missing required field", f"{path}.{key}")
        dim = int(data.get("dim", 2))
        if dim < 1:
            raise ConfigError("dim must be >= 1", f"{path}.dim")
        return cls(
            psi=_weight_from_dict(data["psi"], f"{path}.psi"),
            psi_tilde=_weight_from_dict(data["psi_tilde"], f"{path}.psi_tilde"),
            phi=_bump_from_dict(data["phi"], f"{path}.phi"),
            forcing=_forcing_from_dict(data.get("forcing", {"kind": "zero"}), f"{path}.forcing", dim),
            dim=dim,
        )


def _get(data, key, path, default=None):
    if key in data:
        return data[key]
    if default is not None:
        return default
    raise ConfigError("missing required field", f"{path}.{key}")


def _weight_from_dict(data, path):
    if not isinstance(data, dict) or "kind" not in data:
        raise ConfigError("expected a table with a 'kind' field", path)
    kind = data["kind"]
    if kind == "rational":
        return Rational(float(_get(data, "lambda", path)), float(_get(data, "gamma", path)))
    if kind == "constant":
        return Constant(float(_get(data, "c", path)))
    raise ConfigError(f"unknown weight kind {kind!r}", f"{path}.kind")


def _bump_from_dict(data, path):
    if not isinstance(data, dict):
        raise ConfigError("expected a table", path)
    kind = data.get("kind", "bump")
    if kind != "bump":
        raise ConfigError(f"unknown phi kind {kind!r}", f"{path}.kind")
    return Bump(float(_get(data, "r1", path)), float(_get(data, "r2", path)),
                float(data.get("amplitude", 1.0)))


def _forcing_from_dict(data, path, dim):
    if not isinstance(data, dict) or "kind" not in data:
        raise ConfigError("expected a table with a 'kind' field", path)
    kind = data["kind"]
    if kind == "zero":
        return ZeroForce()
    if kind == "constant":
        vec = _get(data, "vector", path)
        if np.ndim(vec) == 0:
            vec = [vec] * dim
        if len(vec) != dim:
            raise ConfigError(f"vector must have length {dim}", f"{path}.vector")
        return ConstantForce(tuple(float(c) for c in vec))
    if kind == "smooth_linear":
        return SmoothLinearForce(float(_get(data, "amplitude", path)), float(data.get("scale", 1.0)))
    if kind == "quadratic":
        return QuadraticForce(float(_get(data, "amplitude", path)))
    raise ConfigError(f"unknown forcing kind {kind!r}", f"{path}.kind")


@dataclass(frozen=True)
class Truncation:
    """Radial cut-offs chi_R and theta_R.

    Both equal their untruncated value inside the ball of radius ``R`` and
    vanish beyond ``R * (1 + smoothing_width)``.
    """

    R: float
    smoothing_width: float = 0.5

    @property
    def outer_radius(self):
        return self.R * (1.0 + self.smoothing_width)

    @property
    def hard_cap(self):
        """Upper bound on |theta_R(v)| over all v."""
        return self.outer_radius

    def to_dict(self):
        return {"R": self.R, "smoothing_width": self.smoothing_width}


# ---------------------------------------------------------------------------
# compiled scalar primitives


@njit(cache=True)
def smoothstep(u):
    if u <= 0.0:
        return 0.0
    if u >= 1.0:
        return 1.0
    return u * u * u * (u * (6.0 * u - 15.0) + 10.0)


@njit(cache=True)
def taper(r, R, width):
    """1 on [0, R], smoothstep decay on [R, R(1+width)], 0 beyond."""
    if r <= R:
        return 1.0
    return 1.0 - smoothstep((r - R) / (width * R))


@njit(cache=True)
def weight_value(kind, a, b, r2):
    """psi as a function of the squared distance ``r2``."""
    if kind == WEIGHT_CONSTANT:
        return a
    if b == 1.0:
        return a / (1.0 + r2)
    return a * (1.0 + r2) ** (-b)


@njit(cache=True)
def bump_value(r1, r2, amp, r):
    if r >= r2:
        return 0.0
    if r <= r1:
        return amp
    return amp * (1.0 - smoothstep((r - r1) / (r2 - r1)))


def _weight_params(w):
    if isinstance(w, Constant):
        return WEIGHT_CONSTANT, float(w.c), 0.0
    if isinstance(w, Rational):
        return WEIGHT_RATIONAL, float(w.lam), float(w.gamma)
    raise InvalidParameter(f"unsupported weight {w!r}")


def _forcing_params(f, dim):
    """(code, parameter vector) for the compiled forcing evaluation."""
    if isinstance(f, ZeroForce):
        return FORCE_ZERO, np.zeros(dim)
    if isinstance(f, ConstantForce):
        vec = np.asarray(f.vector, dtype=float)
        if vec.shape != (dim,):
            raise InvalidParameter(f"constant forcing must have length {dim}")
        return FORCE_CONSTANT, vec
    if isinstance(f, SmoothLinearForce):
        return FORCE_SMOOTH_LINEAR, np.array([f.amplitude, f.scale], dtype=float)
    if isinstance(f, QuadraticForce):
        return FORCE_QUADRATIC, np.array([f.amplitude], dtype=float)
    raise InvalidParameter(f"unsupported forcing {f!r}")


# ---------------------------------------------------------------------------
# vectorized public evaluation


def _sqnorm(x):
    x = np.asarray(x, dtype=float)
    return np.einsum("...i,...i->...", x, x)


def eval_weight(w, x):
    """Evaluate a ``Rational`` or ``Constant`` weight at points ``x`` (shape ``(..., d)``)."""
    r2 = _sqnorm(x)
    if isinstance(w, Constant):
        return np.full(r2.shape, float(w.c)) if r2.ndim else float(w.c)
    out = w.lam * (1.0 + r2) ** (-w.gamma)
    return out if np.ndim(out) else float(out)


def eval_psi(spec, x):
    """psi(x) for the Cucker-Smale weight of ``spec``."""
    return eval_weight(spec.psi, x)


def eval_psi_tilde(spec, x):
    """The noise weight psi~(x) of ``spec``."""
    return eval_weight(spec.psi_tilde, x)


def _smoothstep_np(u):
    u = np.clip(u, 0.0, 1.0)
    return u * u * u * (u * (6.0 * u - 15.0) + 10.0)


def _bump_np(b, r):
    out = b.amplitude * (1.0 - _smoothstep_np((r - b.r1) / (b.r2 - b.r1)))
    out = np.where(r <= b.r1, b.amplitude, out)
    return np.where(r >= b.r2, 0.0, out)


def eval_phi(spec, x):
    """Bump weight phi(x); exactly zero for |x| >= r2."""
    phi = spec.phi if isinstance(spec, KernelSpec) else spec
    out = _bump_np(phi, np.sqrt(_sqnorm(x)))
    return out if np.ndim(out) else float(out)


def eval_forcing(spec, x):
    """Environmental forcing F(x), shape ``(..., d)``."""
    x = np.asarray(x, dtype=float)
    f = spec.forcing
    if isinstance(f, ZeroForce):
        return np.zeros_like(x)
    if isinstance(f, ConstantForce):
        return np.broadcast_to(np.asarray(f.vector, dtype=float), x.shape).copy()
    r2 = _sqnorm(x)[..., None]
    if isinstance(f, SmoothLinearForce):
        return -f.amplitude * x * (1.0 + np.exp(-r2 / f.scale ** 2))
    if isinstance(f, QuadraticForce):
        return f.amplitude * np.sqrt(r2) * x
    raise InvalidParameter(f"unsupported forcing {f!r}")


def _taper_np(tr, r):
    out = 1.0 - _smoothstep_np((r - tr.R) / (tr.smoothing_width * tr.R))
    return np.where(r <= tr.R, 1.0, out)


def chi(tr, x):
    """Spatial cut-off chi_R(x) in [0, 1]."""
    out = _taper_np(tr, np.sqrt(_sqnorm(x)))
    return out if np.ndim(out) else float(out)


def theta(tr, v):
    """Velocity truncation theta_R(v) = v * taper(|v|)."""
    v = np.asarray(v, dtype=float)
    return v * _taper_np(tr, np.sqrt(_sqnorm(v)))[..., None]


def rescale_phi(spec, r):
    """Return ``spec`` with phi replaced by r^-d phi(x / r).

    The bump family is closed under this dilation, so only its three
    parameters change. The integral of phi is preserved.
    """
    if not r > 0:
        raise InvalidParameter(f"rescaling radius must be positive, got {r}")
    b = spec.phi
    return replace(spec, phi=Bump(b.r1 * r, b.r2 * r, b.amplitude * r ** (-spec.dim)))


def phi_mass(spec, n_nodes=4001):
    """Integral of phi over R^d by radial quadrature (trapezoid on [0, r2])."""
    from scipy.special import gamma as gamma_fn

    d = spec.dim
    r = np.linspace(0.0, spec.phi.r2, n_nodes)
    sphere = 2.0 * math.pi ** (d / 2) / gamma_fn(d / 2)
    return float(np.trapezoid(_bump_np(spec.phi, r) * r ** (d - 1), r) * sphere)


def truncation_divergence_bound(width, R_values=(1.0, 10.0, 100.0), dim=2, n=2001, h=1e-4):
    """Finite-difference sup of |div theta_R| along a ray, for each R.

    Returns ``(bounds, analytic)`` where ``analytic = dim + 15/8 (1 + width)/width``
    bounds the divergence for every R.
    """
    bounds = []
    e = np.zeros(dim)
    e[0] = 1.0
    for R in R_values:
        tr = Truncation(R, width)
        radii = np.linspace(0.0, 1.2 * tr.outer_radius, n)
        div = np.zeros(n)
        # radial field => divergence is the same along any ray; sum the d partials
        for k in range(dim):
            ek = np.zeros(dim)
            ek[k] = h
            pts = radii[:, None] * e[None, :]
            div += (theta(tr, pts + ek)[:, k] - theta(tr, pts - ek)[:, k]) / (2 * h)
        bounds.append(float(np.max(np.abs(div))))
    analytic = dim + 1.875 * (1.0 + width) / width
    return bounds, analytic


# ---------------------------------------------------------------------------
# assumption checks


@dataclass
class Failure:
    assumption: str
    message: str

    def __str__(self):
        return f"[{self.assumption}] {self.message}"


@dataclass
class ValidationReport:
    failures: list
    metrics: dict

    @property
    def passed(self):
        return not self.failures

    def summary(self):
        lines = [f"{k} = {v:.6g}" if isinstance(v, float) else f"{k} = {v}"
                 for k, v in sorted(self.metrics.items())]
        lines += [f"FAIL {f}" for f in self.failures]
        lines.append("PASS" if self.passed else "FAIL")
        return "\n".join(lines)


def _sections(dim, radii):
    """Sample points along each coordinate axis and the main diagonal."""
    dirs = list(np.eye(dim))
    if dim > 1:
        dirs.append(np.ones(dim) / math.sqrt(dim))
    return [radii[:, None] * u[None, :] for u in dirs]


def _fd_derivatives(fun, line, t, orders=(1, 2, 3, 4)):
    """Sup of |d^k/dt^k fun(line(t))| by central differences.

    Steps grow with the order so roundoff stays below truncation error.
    """
    steps = {1: 1e-4, 2: 1e-3, 3: 1e-2, 4: 1e-2}
    coeffs = {
        1: ([-1, 1], [-0.5, 0.5]),
        2: ([-1, 0, 1], [1.0, -2.0, 1.0]),
        3: ([-2, -1, 1, 2], [-0.5, 1.0, -1.0, 0.5]),
        4: ([-2, -1, 0, 1, 2], [1.0, -4.0, 6.0, -4.0, 1.0]),
    }
    out = {}
    for k in orders:
        h = steps[k]
        offs, ws = coeffs[k]
        acc = sum(w * fun(line(t + o * h)) for o, w in zip(offs, ws))
        out[k] = float(np.max(np.abs(acc)) / h ** k)
    return out


def _growth(values, radii):
    """Ratio of the outer-half sup to the inner-half sup of |values|."""
    half = radii >= 0.5 * radii[-1]
    inner = np.max(np.abs(values[~half]))
    outer = np.max(np.abs(values[half]))
    return outer / inner if inner > 0 else (np.inf if outer > 0 else 1.0)


def validate_assumptions(spec, n_points=1000, extent=50.0, forcing_extent=1e3):
    """Sample psi, psi~, phi and F on a deterministic grid and check the standing hypotheses.

    Never raises on a bad spec; every violation is returned as a ``Failure``
    tagged with the assumption it breaks ("psi", "phi" or "sublinearity").
    """
    failures = []
    metrics = {}
    d = spec.dim
    radii = np.linspace(0.0, extent, n_points)

    for name, w in (("psi", spec.psi), ("psi_tilde", spec.psi_tilde)):
        if isinstance(w, Rational) and not (w.lam > 0 and w.gamma > 0):
            failures.append(Failure("psi", f"{name}: Rational needs lambda > 0 and gamma > 0"))
        if isinstance(w, Constant) and w.c < 0:
            failures.append(Failure("psi", f"{name}: constant must be nonnegative"))
        sup = 0.0
        growth = 0.0
        deriv = {k: 0.0 for k in (1, 2, 3, 4)}
        line = np.linspace(-extent, extent, n_points | 1)  # odd count keeps the origin
        for sec in _sections(d, line):
            vals = eval_weight(w, sec)
            sup = max(sup, float(np.max(np.abs(vals))))
            if np.any(vals < 0):
                failures.append(Failure("psi", f"{name} takes negative values"))
                break
            u = sec[-1] / extent
            fd = _fd_derivatives(lambda p: eval_weight(w, p), lambda t: t[:, None] * u[None, :], line)
            deriv = {k: max(deriv[k], fd[k]) for k in fd}
        for u in np.eye(d):
            growth = max(growth, _growth(eval_weight(w, radii[:, None] * u[None, :]), radii))
        metrics[f"sup_{name}"] = sup
        for k, v in deriv.items():
            metrics[f"sup_d{k}_{name}"] = v
        if not np.isfinite(sup) or growth > 1.0 + 1e-9:
            failures.append(Failure("psi", f"{name} is not bounded on the sampled grid"))

    b = spec.phi
    if not (0 < b.r1 < b.r2):
        failures.append(Failure("phi", f"need 0 < r1 < r2, got r1={b.r1}, r2={b.r2}"))
    if not b.amplitude > 0:
        failures.append(Failure("phi", "amplitude must be positive"))
    r_out = max(abs(b.r1), abs(b.r2), 1e-12)
    inner_min = np.inf
    outer_max = 0.0
    for sec in _sections(d, np.linspace(-1.5 * r_out, 1.5 * r_out, n_points)):
        vals = eval_phi(b, sec)
        r = np.sqrt(_sqnorm(sec))
        if np.any(vals < 0):
            failures.append(Failure("phi", "phi takes negative values"))
        if np.any(r <= b.r1):
            inner_min = min(inner_min, float(np.min(vals[r <= b.r1])))
        if np.any(r >= b.r2):
            outer_max = max(outer_max, float(np.max(np.abs(vals[r >= b.r2]))))
    metrics["inf_phi_inner_ball"] = inner_min
    metrics["sup_phi_outside_support"] = outer_max
    if b.r1 > 0 and not inner_min > 0:
        failures.append(Failure("phi", "phi is not bounded below on B(0, r1)"))
    if outer_max != 0.0:
        failures.append(Failure("phi", "phi does not vanish outside B(0, r2)"))

    fr = np.linspace(0.0, forcing_extent, n_points)
    ratio_sup = 0.0
    ratio_growth = 0.0
    for u in np.eye(d):
        pts = fr[:, None] * u[None, :]
        ratio = np.sqrt(_sqnorm(eval_forcing(spec, pts))) / (1.0 + fr)
        ratio_sup = max(ratio_sup, float(np.max(ratio)))
        ratio_growth = max(ratio_growth, _growth(ratio, fr) if np.any(ratio > 0) else 1.0)
    metrics["forcing_linear_growth_constant"] = ratio_sup
    metrics["forcing_ratio_growth"] = ratio_growth
    if not np.isfinite(ratio_sup) or ratio_growth > 1.5:
        failures.append(Failure(
            "sublinearity",
            f"|F(x)|/(1+|x|) grows by a factor {ratio_growth:.3g} across the sampled range",
        ))
    return ValidationReport(failures, metrics)
