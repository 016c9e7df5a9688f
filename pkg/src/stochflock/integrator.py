"""Time stepping of the regularized particle system under one shared Brownian motion.

Two schemes are provided:

``ito_em``
    Euler-Maruyama for the Ito form, drift ``L_cs + L_mt + S`` and diffusion ``K``.
``strat_heun``
    Heun predictor-corrector for the Stratonovich form, drift ``L_cs + L_mt``
    (no ``S``) and diffusion ``K``.

Both converge to the same process; comparing them on a common noise path is
the main consistency check of the Ito correction term.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np

from .coefficients import CellIndex, ParticleEnsemble, eval_bundle
from .errors import ConfigError, InvalidIndex, InvalidParameter, NumericalBlowup
from .kernels import KernelSpec, Truncation

__all__ = [
    "BrownianPath", "GaussianInit", "UniformBoxInit", "TwoClusterInit", "SimConfig",
    "Trajectory", "DiagnosticsRecord", "sample_initial", "step_ito_em", "step_strat_heun",
    "simulate", "SCHEMES", "BLOWUP_THRESHOLD",
]

SCHEMES = ("ito_em", "strat_heun")
BLOWUP_THRESHOLD = 1e12

# spawn keys separating the random streams derived from one integer seed
_NOISE_KEY = 17
_INIT_KEY = 29


def _stream(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


@dataclass(frozen=True)
class BrownianPath:
    """Increments of the scalar common noise on a uniform grid.

    ``refine()`` halves the step by Brownian-bridge splitting: each increment
    ``dB`` becomes ``dB/2 + e`` and ``dB/2 - e`` with ``e ~ N(0, dt/4)`` drawn
    from a stream keyed by the refinement level. Coarse and fine paths thus
    sample the same underlying Brownian motion.
    """

    seed: int
    dt: float
    increments: np.ndarray
    level: int = 0

    @classmethod
    def generate(cls, seed, dt, m):
        if not dt > 0:
            raise InvalidParameter("dt must be positive")
        inc = _stream(seed, _NOISE_KEY, 0).standard_normal(int(m)) * math.sqrt(dt)
        return cls(int(seed), float(dt), inc, 0)

    def refine(self):
        xi = _stream(self.seed, _NOISE_KEY, self.level + 1).standard_normal(self.increments.size)
        half = 0.5 * self.increments
        dev = 0.5 * math.sqrt(self.dt) * xi
        fine = np.column_stack([half + dev, half - dev]).ravel()
        return BrownianPath(self.seed, 0.5 * self.dt, fine, self.level + 1)

    def refined(self, levels):
        path = self
        for _ in range(levels):
            path = path.refine()
        return path

    @property
    def m(self):
        return self.increments.size

    def values(self):
        """beta at the grid times, starting from 0."""
        return np.concatenate([[0.0], np.cumsum(self.increments)])


# ---------------------------------------------------------------------------
# initial laws


@dataclass(frozen=True)
class GaussianInit:
    pos_mean: float = 0.0
    pos_std: float = 1.0
    vel_mean: float = 0.0
    vel_std: float = 1.0

    kind = "gaussian"


@dataclass(frozen=True)
class UniformBoxInit:
    pos_low: float = -1.0
    pos_high: float = 1.0
    vel_low: float = -1.0
    vel_high: float = 1.0

    kind = "uniform_box"


@dataclass(frozen=True)
class TwoClusterInit:
    """Two Gaussian blobs centered at +-separation/2 along the first axis.

    Particles in the cluster at +separation/2 move with mean velocity
    ``speed * e_1`` and the others with ``-speed * e_1``.
    """

    separation: float = 4.0
    pos_std: float = 0.5
    speed: float = 1.0
    vel_std: float = 0.1
    weight: float = 0.5

    kind = "two_cluster"


InitLaw = Union[GaussianInit, UniformBoxInit, TwoClusterInit]
INIT_LAWS = {c.kind: c for c in (GaussianInit, UniformBoxInit, TwoClusterInit)}


def init_from_dict(data, path="sim.init"):
    if not isinstance(data, dict) or "kind" not in data:
        raise ConfigError("expected a table with a 'kind' field", path)
    cls = INIT_LAWS.get(data["kind"])
    if cls is None:
        raise ConfigError(f"unknown initial law {data['kind']!r}", f"{path}.kind")
    fields = {k: v for k, v in data.items() if k != "kind"}
    try:
        return cls(**fields)
    except TypeError as exc:
        raise ConfigError(str(exc), path) from None


def init_to_dict(init):
    out = {"kind": init.kind}
    out.update(init.__dict__)
    return out


@dataclass(frozen=True)
class SimConfig:
    n: int
    kernel: KernelSpec
    t_final: float = 1.0
    dt: float = 0.01
    scheme: str = "ito_em"
    truncation_R: float = 50.0
    smoothing_width: float = 0.5
    noise_seed: int = 0
    init_seed: int = 0
    init: InitLaw = field(default_factory=GaussianInit)
    record_every: int = 1
    use_cell_list: bool = True
    include_s: bool = True

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("n must be >= 1", "sim.n")
        if not self.dt > 0:
            raise ConfigError("dt must be positive", "sim.dt")
        if not self.t_final >= 0:
            raise ConfigError("t_final must be nonnegative", "sim.t_final")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}", "sim.scheme")
        if not self.truncation_R > 0:
            raise ConfigError("truncation R must be positive", "truncation.R")
        if not self.smoothing_width > 0:
            raise ConfigError("smoothing width must be positive", "truncation.smoothing_width")
        if self.record_every < 1:
            raise ConfigError("record_every must be >= 1", "sim.record_every")
        if self.init.kind not in INIT_LAWS:
            raise ConfigError("unknown initial law", "sim.init")

    @property
    def dim(self):
        return self.kernel.dim

    @property
    def truncation(self):
        return Truncation(self.truncation_R, self.smoothing_width)

    @property
    def n_steps(self):
        return int(round(self.t_final / self.dt))

    def with_(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        return {
            "kernel": self.kernel.to_dict(),
            "truncation": self.truncation.to_dict(),
            "sim": {
                "n": self.n, "t_final": self.t_final, "dt": self.dt, "scheme": self.scheme,
                "noise_seed": self.noise_seed, "init_seed": self.init_seed,
                "record_every": self.record_every, "use_cell_list": self.use_cell_list,
                "include_s": self.include_s, "init": init_to_dict(self.init),
            },
        }


def sample_initial(config):
    """Draw N i.i.d. particles from the configured initial law.

    Every coordinate family comes from its own stream, filled particle by
    particle, so the first M particles of an N-draw equal the M-draw with the
    same seed.
    """
    n, d = config.n, config.dim
    law = config.init
    pos_rng = _stream(config.init_seed, _INIT_KEY, 0)
    vel_rng = _stream(config.init_seed, _INIT_KEY, 1)
    if isinstance(law, GaussianInit):
        x = law.pos_mean + law.pos_std * pos_rng.standard_normal((n, d))
        v = law.vel_mean + law.vel_std * vel_rng.standard_normal((n, d))
    elif isinstance(law, UniformBoxInit):
        x = law.pos_low + (law.pos_high - law.pos_low) * pos_rng.random((n, d))
        v = law.vel_low + (law.vel_high - law.vel_low) * vel_rng.random((n, d))
    elif isinstance(law, TwoClusterInit):
        side = np.where(_stream(config.init_seed, _INIT_KEY, 2).random(n) < law.weight, 1.0, -1.0)
        x = law.pos_std * pos_rng.standard_normal((n, d))
        v = law.vel_std * vel_rng.standard_normal((n, d))
        x[:, 0] += 0.5 * law.separation * side
        v[:, 0] += law.speed * side
    else:
        raise ConfigError(f"unknown initial law {law!r}", "sim.init")
    return ParticleEnsemble(x, v)


# ---------------------------------------------------------------------------
# stepping


def _index(ens, spec, use_cells):
    if not use_cells:
        return None
    try:
        return CellIndex.build(ens, spec)
    except InvalidIndex:
        return None


def _checked(x, v, step):
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
        raise NumericalBlowup(step, "non-finite state")
    worst = max(np.max(np.abs(x)), np.max(np.abs(v)))
    if worst > BLOWUP_THRESHOLD:
        raise NumericalBlowup(step, f"|coordinate| = {worst:.3g} exceeds {BLOWUP_THRESHOLD:.0e}")
    return ParticleEnsemble(x, v)


def step_ito_em(ens, spec, tr, dbeta, dt, include_s=True, use_cells=True, step=0):
    """One Euler-Maruyama step of the Ito system.

    Every particle's diffusion coefficient multiplies the same ``dbeta``.
    ``include_s=False`` drops the Ito correction (negative control only).
    """
    b = eval_bundle(ens, spec, tr, _index(ens, spec, use_cells), with_s=include_s)
    x = ens.positions + ens.velocities * dt
    v = ens.velocities + b.drift * dt + b.k * dbeta
    return _checked(x, v, step)


def step_strat_heun(ens, spec, tr, dbeta, dt, use_cells=True, step=0):
    """One Heun step of the Stratonovich system (drift without the Ito correction)."""
    b0 = eval_bundle(ens, spec, tr, _index(ens, spec, use_cells), with_s=False)
    xp = ens.positions + ens.velocities * dt
    vp = ens.velocities + b0.drift * dt + b0.k * dbeta
    pred = _checked(xp, vp, step)
    b1 = eval_bundle(pred, spec, tr, _index(pred, spec, use_cells), with_s=False)
    x = ens.positions + 0.5 * (ens.velocities + vp) * dt
    v = ens.velocities + 0.5 * (b0.drift + b1.drift) * dt + 0.5 * (b0.k + b1.k) * dbeta
    return _checked(x, v, step)


# ---------------------------------------------------------------------------
# diagnostics and trajectories


@dataclass
class DiagnosticsRecord:
    """Per-snapshot summary statistics of the ensemble."""

    step: list = field(default_factory=list)
    time: list = field(default_factory=list)
    mean_velocity: list = field(default_factory=list)
    velocity_variance: list = field(default_factory=list)
    velocity_moment2: list = field(default_factory=list)
    velocity_moment4: list = field(default_factory=list)
    position_moment2: list = field(default_factory=list)
    kinetic_energy: list = field(default_factory=list)

    def record(self, step, t, ens):
        v = ens.velocities
        # shifted two-pass variance: exactly zero when all velocities coincide
        dev = v - v[0]
        dev -= dev.mean(axis=0)
        v2 = np.einsum("ij,ij->i", v, v)
        self.step.append(int(step))
        self.time.append(float(t))
        self.mean_velocity.append(v.mean(axis=0))
        self.velocity_variance.append(float(np.mean(np.sum(dev ** 2, axis=1))))
        self.velocity_moment2.append(float(np.mean(v2)))
        self.velocity_moment4.append(float(np.mean(v2 ** 2)))
        self.position_moment2.append(float(np.mean(np.sum(ens.positions ** 2, axis=1))))
        self.kinetic_energy.append(float(0.5 * np.mean(v2)))

    def __len__(self):
        return len(self.time)

    def write_csv(self, path):
        d = len(self.mean_velocity[0]) if self.mean_velocity else 0
        header = (["step", "time"] + [f"mean_v_{k + 1}" for k in range(d)]
                  + ["velocity_variance", "velocity_moment2", "velocity_moment4",
                     "position_moment2", "kinetic_energy"])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k in range(len(self)):
                w.writerow([self.step[k], repr(self.time[k])]
                           + [repr(float(c)) for c in self.mean_velocity[k]]
                           + [repr(self.velocity_variance[k]), repr(self.velocity_moment2[k]),
                              repr(self.velocity_moment4[k]), repr(self.position_moment2[k]),
                              repr(self.kinetic_energy[k])])


@dataclass
class Trajectory:
    times: np.ndarray
    positions: np.ndarray   # (snapshots, N, d)
    velocities: np.ndarray  # (snapshots, N, d)
    path: BrownianPath

    def __len__(self):
        return self.times.size

    def snapshot(self, k):
        return ParticleEnsemble(self.positions[k], self.velocities[k])

    @property
    def final(self):
        return self.snapshot(-1)

    def write_csv(self, path):
        """One row per particle per snapshot: snapshot_index, time, particle_id, x_*, v_*."""
        s, n, d = self.positions.shape
        header = (["snapshot_index", "time", "particle_id"] + [f"x_{k + 1}" for k in range(d)]
                  + [f"v_{k + 1}" for k in range(d)])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k in range(s):
                t = repr(float(self.times[k]))
                for i in range(n):
                    w.writerow([k, t, i] + [repr(float(c)) for c in self.positions[k, i]]
                               + [repr(float(c)) for c in self.velocities[k, i]])

    def write_npy(self, path):
        """Columnar binary export: one structured ``.npy`` record per particle per snapshot.

        Fields mirror the CSV columns; ``x`` and ``v`` are length-d subarrays.
        """
        s, n, d = self.positions.shape
        dtype = np.dtype([("snapshot_index", "<i8"), ("time", "<f8"), ("particle_id", "<i8"),
                          ("x", "<f8", (d,)), ("v", "<f8", (d,))])
        rec = np.zeros(s * n, dtype=dtype)
        rec["snapshot_index"] = np.repeat(np.arange(s), n)
        rec["time"] = np.repeat(self.times, n)
        rec["particle_id"] = np.tile(np.arange(n), s)
        rec["x"] = self.positions.reshape(s * n, d)
        rec["v"] = self.velocities.reshape(s * n, d)
        np.save(path, rec)

    @staticmethod
    def read_csv(path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        s = int(data[:, 0].max()) + 1
        n = int(data[:, 2].max()) + 1
        d = (data.shape[1] - 3) // 2
        block = data.reshape(s, n, -1)
        return block[:, 0, 1], block[:, :, 3:3 + d], block[:, :, 3 + d:]


def simulate(config, path=None, initial=None):
    """Run the configured scheme for round(T/dt) steps.

    Snapshots are taken every ``record_every`` steps and always at the last step.

    Parameters
    ----------
    config : SimConfig
    path : BrownianPath, optional
        Common noise to use instead of the one generated from ``noise_seed``;
        must carry at least round(T/dt) increments at step ``config.dt``.
    initial : ParticleEnsemble, optional
        Overrides ``sample_initial(config)``.

    Returns
    -------
    (Trajectory, DiagnosticsRecord)
    """
    m = config.n_steps
    if path is None:
        path = BrownianPath.generate(config.noise_seed, config.dt, m)
    elif not math.isclose(path.dt, config.dt, rel_tol=1e-12) or path.m < m:
        raise InvalidParameter(f"noise path (dt={path.dt}, m={path.m}) does not cover {m} steps of {config.dt}")
    ens = sample_initial(config) if initial is None else initial
    spec, tr, dt = config.kernel, config.truncation, config.dt

    diag = DiagnosticsRecord()
    times, xs, vs = [0.0], [ens.positions], [ens.velocities]
    diag.record(0, 0.0, ens)
    for step in range(1, m + 1):
        db = path.increments[step - 1]
        try:
            if config.scheme == "ito_em":
                ens = step_ito_em(ens, spec, tr, db, dt, config.include_s, config.use_cell_list, step)
            else:
                ens = step_strat_heun(ens, spec, tr, db, dt, config.use_cell_list, step)
        except NumericalBlowup as exc:
            exc.diagnostics = diag
            raise
        if step % config.record_every == 0 or step == m:
            t = step * dt
            times.append(t)
            xs.append(ens.positions)
            vs.append(ens.velocities)
            diag.record(step, t, ens)
    traj = Trajectory(np.array(times), np.stack(xs), np.stack(vs), path)
    return traj, diag
