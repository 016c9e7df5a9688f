"""Regularized mean-field coefficients evaluated on an empirical measure.

For an ensemble of N particles ``z_i = (x_i, v_i)`` with uniform weights 1/N
this module computes, at every particle,

* ``l_cs``  alignment   (1/N) sum_j chi_R psi(x_i - x_j) theta_R(v_j - v_i)
* ``u``     local mean  (1/N) sum_j phi(x_i - x_j) theta_R(v_j) / (1/R + (1/N) sum_j phi(x_i - x_j))
* ``l_mt``  ``u - v_i``
* ``k``     diffusion   chi_R(x_i) F(x_i) + (1/N) sum_j chi_R psi~(x_i - x_j) theta_R(v_j - v_i)
* ``s``     Ito drift   (1/2N) sum_j psi~(x_i - x_j) (k_j - k_i)

All pair sums run in compiled loops with Kahan-compensated accumulation over
``j`` in ascending order. Terms whose weight is exactly zero are skipped, which
makes the cell-list path for the compactly supported phi bit-identical to the
brute-force path.
"""
from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from . import kernels as K
from .errors import InvalidIndex, InvalidInput

__all__ = [
    "ParticleEnsemble", "CoefficientBundle", "CellIndex", "eval_l_cs", "eval_u_r", "eval_l_mt",
    "eval_k_r", "eval_s_r", "eval_bundle",
]


@dataclass(frozen=True)
class ParticleEnsemble:
    """N positions and velocities in R^d, implicitly weighted 1/N each."""

    positions: np.ndarray
    velocities: np.ndarray

    def __post_init__(self):
        x = np.ascontiguousarray(self.positions, dtype=float)
        v = np.ascontiguousarray(self.velocities, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if v.ndim == 1:
            v = v[:, None]
        if x.shape != v.shape or x.ndim != 2 or x.shape[0] < 1:
            raise InvalidInput(f"positions {x.shape} and velocities {v.shape} must both be N x d with N >= 1")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
            raise InvalidInput("ensemble contains non-finite coordinates")
        object.__setattr__(self, "positions", x)
        object.__setattr__(self, "velocities", v)

    @property
    def n(self):
        return self.positions.shape[0]

    @property
    def dim(self):
        return self.positions.shape[1]

    @property
    def states(self):
        """(N, 2d) array of concatenated (x, v)."""
        return np.hstack([self.positions, self.velocities])

    def subset(self, n):
        return ParticleEnsemble(self.positions[:n], self.velocities[:n])


@dataclass
class CoefficientBundle:
    l_cs: np.ndarray
    u: np.ndarray
    l_mt: np.ndarray
    k: np.ndarray
    s: np.ndarray
    drift: np.ndarray


# ---------------------------------------------------------------------------
# compiled loops


@njit(cache=True, inline="always")
def _kahan_add(s, c, k, value):
    y = value - c[k]
    t = s[k] + y
    c[k] = (t - s[k]) - y
    s[k] = t


@njit(cache=True, parallel=True)
def _pair_alignment(X, V, rows, kind, a, b, R, width, out):
    """out[r] = (1/N) sum_j chi_R(x_i-x_j) w(x_i-x_j) theta_R(v_j-v_i), i = rows[r]."""
    n, d = X.shape
    cut = R * (1.0 + width)
    for r in prange(rows.shape[0]):
        i = rows[r]
        s = np.zeros(d)
        c = np.zeros(d)
        dv = np.zeros(d)
        for j in range(n):
            if j == i:
                continue
            r2 = 0.0
            for k in range(d):
                t = X[i, k] - X[j, k]
                r2 += t * t
            dist = np.sqrt(r2)
            if dist >= cut:
                continue
            wt = K.taper(dist, R, width) * K.weight_value(kind, a, b, r2)
            if wt == 0.0:
                continue
            vn2 = 0.0
            for k in range(d):
                dv[k] = V[j, k] - V[i, k]
                vn2 += dv[k] * dv[k]
            g = K.taper(np.sqrt(vn2), R, width)
            if g == 0.0:
                continue
            for k in range(d):
                _kahan_add(s, c, k, wt * g * dv[k])
        for k in range(d):
            out[r, k] = s[k] / n


@njit(cache=True)
def _u_row(X, V, q, cand, r1, r2, amp, R, width, out_row):
    n, d = X.shape
    num = np.zeros(d)
    cnum = np.zeros(d)
    den = np.zeros(1)
    cden = np.zeros(1)
    for idx in range(cand.shape[0]):
        j = cand[idx]
        d2 = 0.0
        for k in range(d):
            t = q[k] - X[j, k]
            d2 += t * t
        f = K.bump_value(r1, r2, amp, np.sqrt(d2))
        if f == 0.0:
            continue
        vn2 = 0.0
        for k in range(d):
            vn2 += V[j, k] * V[j, k]
        g = K.taper(np.sqrt(vn2), R, width)
        _kahan_add(den, cden, 0, f)
        if g == 0.0:
            continue
        for k in range(d):
            _kahan_add(num, cnum, k, f * g * V[j, k])
    scale = 1.0 / R + den[0] / n
    for k in range(d):
        out_row[k] = (num[k] / n) / scale


@njit(cache=True, parallel=True)
def _u_brute(X, V, Q, r1, r2, amp, R, width, out):
    n = X.shape[0]
    allj = np.arange(n)
    for r in prange(Q.shape[0]):
        _u_row(X, V, Q[r], allj, r1, r2, amp, R, width, out[r])


@njit(cache=True, parallel=True)
def _u_cells(X, V, Q, r1, r2, amp, R, width, origin, h, shape, strides,
             sorted_keys, order, offsets, out):
    n, d = X.shape
    for r in prange(Q.shape[0]):
        q = Q[r]
        base = np.empty(d, dtype=np.int64)
        for k in range(d):
            base[k] = np.int64(np.floor((q[k] - origin[k]) / h))
        buf = np.empty(n, dtype=np.int64)
        m = 0
        for o in range(offsets.shape[0]):
            key = np.int64(0)
            inside = True
            for k in range(d):
                ck = base[k] + offsets[o, k]
                if ck < 0 or ck >= shape[k]:
                    inside = False
                    break
                key += ck * strides[k]
            if not inside:
                continue
            lo = np.searchsorted(sorted_keys, key, side="left")
            hi = np.searchsorted(sorted_keys, key, side="right")
            for t in range(lo, hi):
                buf[m] = order[t]
                m += 1
        if 8 * m > n:
            # dense neighborhood: an ordered scan over a mark array beats sorting
            mark = np.zeros(n, dtype=np.bool_)
            for t in range(m):
                mark[buf[t]] = True
            c = 0
            for j in range(n):
                if mark[j]:
                    buf[c] = j
                    c += 1
            cand = buf[:m]
        else:
            cand = np.sort(buf[:m])
        _u_row(X, V, q, cand, r1, r2, amp, R, width, out[r])


@njit(cache=True)
def _forcing_rows(X, rows, code, params, R, width, out):
    n, d = X.shape
    for r in range(rows.shape[0]):
        i = rows[r]
        r2 = 0.0
        for k in range(d):
            r2 += X[i, k] * X[i, k]
        cx = K.taper(np.sqrt(r2), R, width)
        for k in range(d):
            if code == K.FORCE_ZERO:
                f = 0.0
            elif code == K.FORCE_CONSTANT:
                f = params[k]
            elif code == K.FORCE_SMOOTH_LINEAR:
                f = -params[0] * X[i, k] * (1.0 + np.exp(-r2 / (params[1] * params[1])))
            else:
                f = params[0] * np.sqrt(r2) * X[i, k]
            out[r, k] = cx * f


@njit(cache=True, parallel=True)
def _ito_correction(X, Kall, rows, kind, a, b, out):
    """out[r] = (1/2N) sum_j psi~(x_i - x_j) (K_j - K_i); no chi_R on the outer weight."""
    n, d = X.shape
    for r in prange(rows.shape[0]):
        i = rows[r]
        s = np.zeros(d)
        c = np.zeros(d)
        for j in range(n):
            if j == i:
                continue
            r2 = 0.0
            for k in range(d):
                t = X[i, k] - X[j, k]
                r2 += t * t
            wt = K.weight_value(kind, a, b, r2)
            if wt == 0.0:
                continue
            for k in range(d):
                _kahan_add(s, c, k, wt * (Kall[j, k] - Kall[i, k]))
        for k in range(d):
            out[r, k] = s[k] / (2.0 * n)


# ---------------------------------------------------------------------------
# cell index


def _checksum(positions):
    return hashlib.blake2b(np.ascontiguousarray(positions).tobytes(), digest_size=16).hexdigest()


class CellIndex:
    """Uniform hash grid with cell size equal to the support radius of phi.

    Particles are sorted by linearized cell key; a query visits the 3^d cells
    around the query point, which contain every particle within distance ``h``.
    """

    def __init__(self, positions, h):
        x = np.ascontiguousarray(positions, dtype=float)
        self.h = float(h)
        self.dim = x.shape[1]
        self.checksum = _checksum(x)
        self.origin = x.min(axis=0)
        coords = np.floor((x - self.origin) / self.h).astype(np.int64)
        self.shape = coords.max(axis=0) + 1
        total = 1
        for s in self.shape:
            total *= int(s)
        if total >= 2 ** 62:
            raise InvalidIndex("cell grid too fine for 64-bit keys; use brute force")
        self.strides = np.ones(self.dim, dtype=np.int64)
        for k in range(self.dim - 2, -1, -1):
            self.strides[k] = self.strides[k + 1] * self.shape[k + 1]
        keys = coords @ self.strides
        self.order = np.argsort(keys, kind="stable").astype(np.int64)
        self.sorted_keys = keys[self.order]
        self.offsets = np.array(list(itertools.product((-1, 0, 1), repeat=self.dim)), dtype=np.int64)

    @classmethod
    def build(cls, ens, spec):
        return cls(ens.positions, spec.phi.r2)

    def neighbors(self, point):
        """Sorted indices of particles in the 3^d cells around ``point``."""
        base = np.floor((np.asarray(point, dtype=float) - self.origin) / self.h).astype(np.int64)
        found = []
        for off in self.offsets:
            c = base + off
            if np.any(c < 0) or np.any(c >= self.shape):
                continue
            key = int(c @ self.strides)
            lo, hi = np.searchsorted(self.sorted_keys, key, "left"), np.searchsorted(self.sorted_keys, key, "right")
            found.extend(self.order[lo:hi].tolist())
        return np.sort(np.array(found, dtype=np.int64))

    def check(self, positions):
        if _checksum(positions) != self.checksum:
            raise InvalidIndex("cell index was built from different positions")


# ---------------------------------------------------------------------------
# public evaluation


def _rows(ens, rows):
    if rows is None:
        return np.arange(ens.n, dtype=np.int64)
    return np.atleast_1d(np.asarray(rows, dtype=np.int64))


def _is_zero(w):
    return isinstance(w, K.Constant) and w.c == 0.0


def _alignment(ens, w, tr, rows):
    out = np.zeros((rows.shape[0], ens.dim))
    if _is_zero(w) or ens.n == 1:
        return out
    kind, a, b = K._weight_params(w)
    _pair_alignment(ens.positions, ens.velocities, rows, kind, a, b,
                    float(tr.R), float(tr.smoothing_width), out)
    return out


def _u_at(ens, spec, tr, points, index=None):
    Q = np.ascontiguousarray(np.atleast_2d(points), dtype=float)
    out = np.zeros((Q.shape[0], ens.dim))
    b = spec.phi
    args = (ens.positions, ens.velocities, Q, float(b.r1), float(b.r2), float(b.amplitude),
            float(tr.R), float(tr.smoothing_width))
    if index is None:
        _u_brute(*args, out)
    else:
        index.check(ens.positions)
        _u_cells(*args, index.origin, index.h, index.shape, index.strides,
                 index.sorted_keys, index.order, index.offsets, out)
    return out


def _k_rows(ens, spec, tr, rows):
    code, params = K._forcing_params(spec.forcing, ens.dim)
    out = np.zeros((rows.shape[0], ens.dim))
    _forcing_rows(ens.positions, rows, code, params, float(tr.R), float(tr.smoothing_width), out)
    return out + _alignment(ens, spec.psi_tilde, tr, rows)


def _s_rows(ens, spec, k_all, rows):
    out = np.zeros((rows.shape[0], ens.dim))
    if _is_zero(spec.psi_tilde) or ens.n == 1:
        return out
    kind, a, b = K._weight_params(spec.psi_tilde)
    _ito_correction(ens.positions, np.ascontiguousarray(k_all), rows, kind, a, b, out)
    return out


def eval_l_cs(ens, spec, tr, i):
    """Truncated Cucker-Smale alignment at particle ``i`` (or an index array)."""
    out = _alignment(ens, spec.psi, tr, _rows(ens, i))
    return out[0] if np.ndim(i) == 0 else out


def eval_u_r(ens, spec, tr, x, index=None):
    """Damped local average velocity u_R at point(s) ``x``.

    The denominator is at least 1/R, so the result is defined everywhere,
    including far from all particles where it is exactly zero.
    """
    x = np.asarray(x, dtype=float)
    out = _u_at(ens, spec, tr, x.reshape(-1, ens.dim), index)
    return out[0] if x.ndim == 1 else out


def eval_l_mt(ens, spec, tr, i, index=None):
    rows = _rows(ens, i)
    out = _u_at(ens, spec, tr, ens.positions[rows], index) - ens.velocities[rows]
    return out[0] if np.ndim(i) == 0 else out


def eval_k_r(ens, spec, tr, i):
    """Diffusion coefficient K_R at particle ``i``."""
    out = _k_rows(ens, spec, tr, _rows(ens, i))
    return out[0] if np.ndim(i) == 0 else out


def eval_s_r(ens, spec, tr, i, k_all=None):
    """Ito correction drift S_R at particle ``i``.

    Needs K_R at every particle; pass ``k_all`` to reuse a previous evaluation.
    """
    if k_all is None:
        k_all = _k_rows(ens, spec, tr, _rows(ens, None))
    out = _s_rows(ens, spec, k_all, _rows(ens, i))
    return out[0] if np.ndim(i) == 0 else out


def eval_bundle(ens, spec, tr, index=None, with_s=True):
    """All coefficients at every particle.

    With ``index`` the phi sums visit only neighboring cells; the result is
    identical to the brute-force sums. ``with_s=False`` skips the O(N^2) Ito
    correction (``s`` is then zero and excluded from ``drift``), which is what
    the Stratonovich stepper needs.
    """
    rows = _rows(ens, None)
    l_cs = _alignment(ens, spec.psi, tr, rows)
    u = _u_at(ens, spec, tr, ens.positions, index)
    l_mt = u - ens.velocities
    k = _k_rows(ens, spec, tr, rows)
    s = _s_rows(ens, spec, k, rows) if with_s else np.zeros_like(k)
    return CoefficientBundle(l_cs=l_cs, u=u, l_mt=l_mt, k=k, s=s, drift=l_cs + l_mt + s)
