"""Analytics on empirical measures: moments, transport distances, densities.

Exact Wasserstein distances between equal-size uniform ensembles reduce to a
linear assignment problem (the optimal plan is a permutation). Anything else
goes through the sliced distance, averaged over seeded random directions.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree

from .coefficients import ParticleEnsemble
from .errors import CapExceeded, InvalidInput, InvalidParameter, Unsupported
from .kernels import Truncation, theta

__all__ = [
    "moment", "TransportResult", "wasserstein_exact", "wasserstein_sliced", "wasserstein_1d",
    "VelocityWeight", "GridSpec", "GridDensity", "grid_for", "silverman_bandwidth", "rho_phi",
    "sobolev_norm_time_series", "l2_time_series", "local_velocity_knn", "EXACT_CAP",
]

EXACT_CAP = 2048


def _coords(ens, part):
    if part == "full":
        return ens.states
    if part == "position":
        return ens.positions
    if part == "velocity":
        return ens.velocities
    raise InvalidParameter(f"part must be 'full', 'position' or 'velocity', got {part!r}")


def moment(ens, p, part="full"):
    """(1/N) sum_i |z_i|^p over the selected coordinates."""
    if p < 1:
        raise InvalidParameter("moment order must be >= 1")
    z = _coords(ens, part)
    return float(np.mean(np.linalg.norm(z, axis=1) ** p))


# ---------------------------------------------------------------------------
# transport


@dataclass
class TransportResult:
    distance: float
    p: float
    method: str
    n_projections: int = 0
    seed: int | None = None
    std_error: float = 0.0  # of the mean projected cost W_p^p, sliced only
    plan: np.ndarray | None = field(default=None, repr=False)


def _as_points(a):
    return a.states if isinstance(a, ParticleEnsemble) else np.atleast_2d(np.asarray(a, dtype=float))


def wasserstein_exact(a, b, p=2, cap=EXACT_CAP):
    """Exact W_p between two equal-size uniform empirical measures.

    ``a`` and ``b`` are ensembles (compared in the joint (x, v) space) or raw
    point arrays. ``plan[i]`` is the index in ``b`` matched to ``a[i]``.
    """
    za, zb = _as_points(a), _as_points(b)
    if za.shape[0] != zb.shape[0]:
        raise Unsupported(f"exact W_p needs equal counts, got {za.shape[0]} and {zb.shape[0]}; use the sliced distance")
    if za.shape[0] > cap:
        raise CapExceeded(f"N = {za.shape[0]} exceeds the exact-assignment cap {cap}")
    diff = za[:, None, :] - zb[None, :, :]
    cost = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff)) ** p
    rows, cols = linear_sum_assignment(cost)
    mean_cost = float(cost[rows, cols].mean())
    return TransportResult(mean_cost ** (1.0 / p), p, "exact", plan=cols)


def wasserstein_1d(x, y, p=2):
    """W_p^p between two 1-D uniform empirical measures of any sizes (quantile coupling)."""
    xs, ys = np.sort(x), np.sort(y)
    n, m = xs.size, ys.size
    if n == m:
        return float(np.mean(np.abs(xs - ys) ** p))
    # piecewise-constant quantile functions, merged breakpoints
    t = np.union1d(np.arange(1, n + 1) / n, np.arange(1, m + 1) / m)
    widths = np.diff(np.concatenate([[0.0], t]))
    mid = t - 0.5 * widths
    qx = xs[np.minimum((mid * n).astype(int), n - 1)]
    qy = ys[np.minimum((mid * m).astype(int), m - 1)]
    return float(np.sum(widths * np.abs(qx - qy) ** p))


def wasserstein_sliced(a, b, p=2, n_proj=64, seed=0):
    """Sliced W_p: p-th root of the mean 1-D W_p^p over random unit directions."""
    za, zb = _as_points(a), _as_points(b)
    if za.shape[1] != zb.shape[1]:
        raise InvalidInput("point clouds live in different dimensions")
    dirs = np.random.default_rng(seed).standard_normal((n_proj, za.shape[1]))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    pa, pb = za @ dirs.T, zb @ dirs.T
    costs = np.array([wasserstein_1d(pa[:, k], pb[:, k], p) for k in range(n_proj)])
    se = float(costs.std(ddof=1) / math.sqrt(n_proj)) if n_proj > 1 else 0.0
    return TransportResult(float(costs.mean()) ** (1.0 / p), p, "sliced", n_proj, seed, se)


# ---------------------------------------------------------------------------
# grid densities


@dataclass(frozen=True)
class VelocityWeight:
    """Velocity test function for the averaged density rho_phi = int phi(v) f dv.

    kinds: ``one`` (phi = 1), ``gaussian`` (exp(-|v|^2 / (2 scale^2))),
    ``component`` (k-th component of theta_R(v); set ``R`` to ``inf`` to disable
    truncation), ``linear`` (a list of (coefficient, VelocityWeight) terms).
    """

    kind: str = "one"
    scale: float = 1.0
    component: int = 0
    R: float = math.inf
    terms: tuple = ()

    def __call__(self, v):
        v = np.atleast_2d(v)
        if self.kind == "one":
            return np.ones(v.shape[0])
        if self.kind == "zero":
            return np.zeros(v.shape[0])
        if self.kind == "gaussian":
            return np.exp(-np.sum(v ** 2, axis=1) / (2 * self.scale ** 2))
        if self.kind == "component":
            w = v if math.isinf(self.R) else theta(Truncation(self.R), v)
            return w[:, self.component]
        if self.kind == "linear":
            return sum(c * f(v) for c, f in self.terms)
        raise InvalidParameter(f"unknown velocity weight {self.kind!r}")

    def to_dict(self):
        return {"kind": self.kind, "scale": self.scale, "component": self.component, "R": self.R}


@dataclass(frozen=True)
class GridSpec:
    """Periodic grid: node k along axis a sits at origin[a] + k * extent[a] / resolution[a]."""

    origin: tuple
    extent: tuple
    resolution: tuple
    padding: float = 0.0

    @property
    def spacing(self):
        return np.asarray(self.extent, float) / np.asarray(self.resolution)

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    def axes(self):
        return [o + np.arange(n) * h for o, n, h in zip(self.origin, self.resolution, self.spacing)]


def silverman_bandwidth(ens):
    """N^(-1/(d+4)) times the mean positional standard deviation."""
    sd = float(np.mean(ens.positions.std(axis=0)))
    return max(sd, 1e-12) * ens.n ** (-1.0 / (ens.dim + 4))


def grid_for(positions, bandwidth, cells_per_bandwidth=2.0, pad_bandwidths=4.0):
    """Grid covering the bounding box of ``positions`` (any shape ``(..., d)``), padded by 4 bandwidths."""
    pts = np.asarray(positions, dtype=float).reshape(-1, np.shape(positions)[-1])
    pad = pad_bandwidths * bandwidth
    lo = pts.min(axis=0) - pad
    hi = pts.max(axis=0) + pad
    h = bandwidth / cells_per_bandwidth
    res = np.maximum(np.ceil((hi - lo) / h).astype(int), 4)
    return GridSpec(tuple(lo), tuple(res * h), tuple(int(r) for r in res), pad)


@dataclass
class GridDensity:
    grid: GridSpec
    values: np.ndarray
    bandwidth: float
    mass_leak: float
    test_function: VelocityWeight | None = None

    def integral(self):
        return float(self.values.sum() * self.grid.cell_volume)

    def write_csv(self, path):
        """Header lines carry the grid geometry; then one row per node."""
        with open(path, "w", newline="") as fh:
            fh.write(f"# origin={list(self.grid.origin)}\n# extent={list(self.grid.extent)}\n")
            fh.write(f"# resolution={list(self.grid.resolution)}\n# bandwidth={self.bandwidth!r}\n")
            fh.write(f"# mass_leak={self.mass_leak!r}\n")
            d = len(self.grid.resolution)
            w = csv.writer(fh)
            w.writerow([f"x_{k + 1}" for k in range(d)] + ["value"])
            mesh = np.meshgrid(*self.grid.axes(), indexing="ij")
            for idx in np.ndindex(*self.values.shape):
                w.writerow([repr(float(m[idx])) for m in mesh] + [repr(float(self.values[idx]))])


def rho_phi(ens, test_fn, bandwidth, grid):
    """Gaussian-KDE deposit of phi_v(v_i) / N onto ``grid``.

    The kernel is isotropic with standard deviation ``bandwidth`` and separable,
    so the deposit is a chain of dense contractions, one per axis.
    """
    if not bandwidth > 0:
        raise InvalidParameter("bandwidth must be positive")
    w = np.asarray(test_fn(ens.velocities), dtype=float) / ens.n
    norm = 1.0 / (math.sqrt(2 * math.pi) * bandwidth)
    factors = []
    for k, ax in enumerate(grid.axes()):
        u = (ax[None, :] - ens.positions[:, k][:, None]) / bandwidth
        factors.append(norm * np.exp(-0.5 * u * u))  # (N, n_k)
    # sum_i w_i prod_k G_k[i, g_k]
    letters = "abcdefgh"[: len(factors)]
    expr = "i," + ",".join(f"i{c}" for c in letters) + "->" + letters
    values = np.einsum(expr, w, *factors, optimize=True)
    leak = float(w.sum() - values.sum() * grid.cell_volume)
    return GridDensity(grid, values, float(bandwidth), leak, test_fn)


def _wavenumbers(grid):
    ks = [2 * math.pi * np.fft.fftfreq(n, d=h) for n, h in zip(grid.resolution, grid.spacing)]
    mesh = np.meshgrid(*ks, indexing="ij")
    return np.sqrt(sum(m ** 2 for m in mesh))


def sobolev_norm_time_series(densities, eta, dt):
    """sum_t dt * sum_xi (1 + |xi|^2)^eta |rho_hat(t, xi)|^2 with continuum FT scaling.

    With the periodic box of volume V and spacing h, ``rho_hat = h^d FFT(rho)``
    and the frequency sum carries the factor 1/V, so eta = 0 gives the grid
    L^2 norm exactly (Plancherel).
    """
    if eta < 0:
        raise InvalidParameter("eta must be nonnegative")
    if not densities:
        return 0.0
    g = densities[0].grid
    for dens in densities:
        if dens.grid != g:
            raise InvalidInput("all densities must share one grid")
    weight = (1.0 + _wavenumbers(g) ** 2) ** eta
    vol = float(np.prod(g.extent))
    scale = g.cell_volume ** 2 / vol
    total = 0.0
    for dens in densities:
        spec = np.fft.fftn(dens.values)
        total += dt * scale * float(np.sum(weight * (spec.real ** 2 + spec.imag ** 2)))
    return total


def l2_time_series(densities, dt):
    """sum_t dt * sum_x h^d rho(t, x)^2 by direct grid summation."""
    return float(sum(dt * d.grid.cell_volume * np.sum(d.values ** 2) for d in densities))


# ---------------------------------------------------------------------------
# local velocity


def local_velocity_knn(ens, x, k):
    """Mean velocity of the k particles nearest to ``x`` in position space."""
    if ens is None or ens.n == 0:
        raise InvalidInput("empty ensemble")
    if not 1 <= k <= ens.n:
        raise InvalidParameter(f"k must be in [1, {ens.n}]")
    tree = cKDTree(ens.positions)
    q = np.atleast_2d(np.asarray(x, dtype=float))
    _, idx = tree.query(q, k=k)
    idx = np.asarray(idx).reshape(q.shape[0], k)
    out = ens.velocities[idx].mean(axis=1)
    return out[0] if np.ndim(x) == 1 else out
