"""Reproducible desk-scale studies of the particle system.

Each study is a pure function of a ``StudySpec``: every replicate seed ``s``
runs with ``init_seed = noise_seed = s`` (the two streams are derived from
the seed under different keys), and every pair of runs being compared shares
both seeds. Verdicts carry the ID of the acceptance criterion they check.
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .coefficients import CellIndex, ParticleEnsemble, eval_u_r
from .errors import ConfigError
from .integrator import BrownianPath, sample_initial, simulate
from .kernels import Constant, ZeroForce, rescale_phi
from .measures import (VelocityWeight, grid_for, local_velocity_knn, rho_phi,
                       sobolev_norm_time_series, wasserstein_exact, wasserstein_sliced)

__all__ = [
    "DtHalvings", "NDoubling", "RSweep", "PhiRSweep", "StudySpec", "StudyReport", "Verdict",
    "study_strat_ito", "study_meanfield", "study_R_uniformity", "study_sla_limit",
    "study_flocking", "coupled_gap", "run_study",
]


@dataclass(frozen=True)
class DtHalvings:
    count: int = 4


@dataclass(frozen=True)
class NDoubling:
    n_list: tuple = (32, 64, 128, 256)


@dataclass(frozen=True)
class RSweep:
    r_values: tuple = (1.0, 10.0, 100.0)
    bandwidth: float = 0.5
    eta: float = 1.0 / 6.0
    weight: VelocityWeight = field(default_factory=lambda: VelocityWeight("gaussian", scale=1.0))


@dataclass(frozen=True)
class PhiRSweep:
    r_values: tuple = (2.0, 1.0, 0.5, 0.25)
    k: int | None = None  # k-NN size, default round(sqrt(N))
    n_proj: int = 64
    proj_seed: int = 0


@dataclass(frozen=True)
class StudySpec:
    base: object  # SimConfig
    sweep: object = None
    seeds: tuple = (0,)
    outputs: str | None = None

    def __post_init__(self):
        if len(self.seeds) < 1:
            raise ConfigError("at least one seed is required", "study.seeds")


@dataclass
class Verdict:
    criterion: str
    measured: float
    threshold: float
    passed: bool
    description: str = ""

    def line(self):
        mark = "PASS" if self.passed else "FAIL"
        return f"{mark} {self.criterion}: {self.description} measured={self.measured:.6g} threshold={self.threshold:.6g}"


@dataclass
class StudyReport:
    name: str
    tables: dict = field(default_factory=dict)
    slopes: dict = field(default_factory=dict)
    verdicts: list = field(default_factory=list)
    seeds: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def passed(self):
        return all(v.passed for v in self.verdicts)

    def numbers(self):
        """Everything numeric in the report, for determinism comparisons."""
        return {"tables": self.tables, "slopes": self.slopes,
                "verdicts": [(v.criterion, v.measured, v.passed) for v in self.verdicts]}

    def write(self, out_dir):
        """One CSV per table plus ``verdicts.json``; returns the written paths."""
        os.makedirs(out_dir, exist_ok=True)
        written = []
        for name, rows in self.tables.items():
            path = os.path.join(out_dir, f"{self.name}_{name}.csv")
            with open(path, "w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
                w.writeheader()
                for row in rows:
                    w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
            written.append(path)
        path = os.path.join(out_dir, f"{self.name}_verdicts.json")
        with open(path, "w") as fh:
            json.dump({
                "study": self.name,
                "passed": self.passed,
                "verdicts": [v.__dict__ for v in self.verdicts],
                "slopes": self.slopes,
                "seeds": self.seeds,
                "notes": self.notes,
            }, fh, indent=2, sort_keys=True, default=float)
        written.append(path)
        return written


def _mean_se(values):
    a = np.asarray(values, dtype=float)
    se = float(a.std(ddof=1) / math.sqrt(a.size)) if a.size > 1 else 0.0
    return float(a.mean()), se


def _seeded(config, seed):
    return config.with_(init_seed=int(seed), noise_seed=int(seed))


def _seed_record(spec):
    return {"init_seeds": [int(s) for s in spec.seeds], "noise_seeds": [int(s) for s in spec.seeds]}


def _log2_slope(dts, values):
    return float(np.polyfit(np.log2(dts), np.log2(values), 1)[0])


# ---------------------------------------------------------------------------


def study_strat_ito(spec, min_slope=0.4, plateau_tol=0.25):
    """Compare Stratonovich Heun against Ito Euler-Maruyama (+S) on refined common paths.

    For dt = base.dt / 2^k, k = 0..count, the endpoint discrepancy
    D(dt) = mean_i |V_heun - V_em| is averaged over seeds. The control row runs
    Euler-Maruyama without S; its discrepancy should stall at a positive level.
    """
    base = spec.base
    count = spec.sweep.count if spec.sweep is not None else 4
    if count < 1:
        raise ConfigError("need at least one halving", "study.count")
    dts = [base.dt / 2 ** k for k in range(count + 1)]
    d_s = np.zeros((len(spec.seeds), len(dts)))
    d_ctl = np.zeros_like(d_s)
    for a, seed in enumerate(spec.seeds):
        cfg = _seeded(base, seed)
        initial = sample_initial(cfg)
        coarse = BrownianPath.generate(seed, base.dt, base.n_steps)
        for b, dt in enumerate(dts):
            path = coarse.refined(b)
            c = cfg.with_(dt=path.dt)
            heun = simulate(c.with_(scheme="strat_heun"), path, initial)[0].final.velocities
            em = simulate(c.with_(scheme="ito_em", include_s=True), path, initial)[0].final.velocities
            ctl = simulate(c.with_(scheme="ito_em", include_s=False), path, initial)[0].final.velocities
            d_s[a, b] = np.mean(np.linalg.norm(heun - em, axis=1))
            d_ctl[a, b] = np.mean(np.linalg.norm(heun - ctl, axis=1))

    rows = []
    for b, dt in enumerate(dts):
        m, se = _mean_se(d_s[:, b])
        mc, sec = _mean_se(d_ctl[:, b])
        rows.append({"dt": dt, "D_mean": m, "D_se": se, "D_noS_mean": mc, "D_noS_se": sec})
    mean_s = d_s.mean(axis=0)
    mean_c = d_ctl.mean(axis=0)
    slope = _log2_slope(dts, mean_s)
    report = StudyReport("strat_ito", {"discrepancy": rows},
                         {"D": slope, "D_noS": _log2_slope(dts, mean_c)}, seeds=_seed_record(spec))
    if isinstance(base.kernel.psi_tilde, Constant) and base.kernel.psi_tilde.c == 0.0:
        report.notes.append("psi_tilde is zero: noise is additive and S vanishes, the comparison is vacuous")
    plateau = abs(mean_c[-1] - mean_c[-2]) / max(mean_c[-1], mean_c[-2])
    report.verdicts += [
        Verdict("C1.slope", slope, min_slope, slope >= min_slope,
                "log2-slope of D(dt) between Strat-Heun and Ito-EM with S"),
        Verdict("C1.plateau", plateau, plateau_tol, plateau < plateau_tol,
                "relative change of the no-S control over the two finest dt"),
    ]
    return report


def coupled_gap(base, n_small, n_large, seed):
    """sup over snapshots of W2^2(mu^n_small, mu^n_large) under shared noise and nested init.

    ``n_large`` must be a multiple of ``n_small``; the small ensemble's atoms
    are replicated so the exact assignment compares equal-size uniform measures
    representing the same distributions.
    """
    if n_large % n_small:
        raise ConfigError("n_large must be a multiple of n_small", "study.n_list")
    cfg = _seeded(base, seed)
    ts = simulate(cfg.with_(n=n_small))[0]
    tl = ts if n_large == n_small else simulate(cfg.with_(n=n_large))[0]
    return _gap(ts, tl)


def _gap(ts, tl):
    reps = tl.positions.shape[1] // ts.positions.shape[1]
    worst = 0.0
    for k in range(len(ts)):
        za = np.repeat(ts.snapshot(k).states, reps, axis=0)
        worst = max(worst, wasserstein_exact(za, tl.snapshot(k).states, p=2).distance ** 2)
    return worst


def study_meanfield(spec, n_sigma=2.0):
    """Cauchy behavior in N of the coupled empirical measures.

    For each N in the list, runs N and 2N particles with the same seeds and
    reports the seed-mean of sup_t W2^2. Each consecutive decrease must exceed
    ``n_sigma`` standard errors of the seed-paired difference.
    """
    n_list = tuple(int(n) for n in spec.sweep.n_list)
    if len(n_list) < 2:
        raise ConfigError("the N sweep needs at least 2 points", "study.n_list")
    if any(b <= a for a, b in zip(n_list, n_list[1:])) or n_list[0] < 1:
        raise ConfigError("n_list must be positive and strictly increasing", "study.n_list")
    sizes = sorted(set(n_list) | {2 * n for n in n_list})
    gaps = np.zeros((len(spec.seeds), len(n_list)))
    for a, seed in enumerate(spec.seeds):
        cfg = _seeded(spec.base, seed)
        runs = {n: simulate(cfg.with_(n=n))[0] for n in sizes}
        for b, n in enumerate(n_list):
            gaps[a, b] = _gap(runs[n], runs[2 * n])
    rows = []
    for b, n in enumerate(n_list):
        m, se = _mean_se(gaps[:, b])
        rows.append({"N": n, "sup_W2sq_mean": m, "sup_W2sq_se": se})
    report = StudyReport("meanfield", {"gaps": rows}, seeds=_seed_record(spec))
    means = gaps.mean(axis=0)
    report.slopes["log2_gap_vs_log2_N"] = _log2_slope(n_list, means)
    for b in range(len(n_list) - 1):
        diff = gaps[:, b] - gaps[:, b + 1]
        dm, dse = _mean_se(diff)
        report.verdicts.append(Verdict(
            f"C2.decrease[{n_list[b]}->{n_list[b + 1]}]", dm / dse if dse > 0 else math.inf, n_sigma,
            bool(dm > n_sigma * dse), "mean decrease of sup_t W2^2 in standard errors"))
    return report


def study_R_uniformity(spec, moment_ratio=3.0, norm_ratio=2.0):
    """Velocity moments and the averaged-density Sobolev norm across truncation levels R."""
    sweep = spec.sweep
    r_values = tuple(float(r) for r in sweep.r_values)
    if any(r <= 0 for r in r_values) or list(r_values) != sorted(r_values):
        raise ConfigError("R values must be positive and sorted", "study.r_values")
    m2 = np.zeros((len(spec.seeds), len(r_values)))
    m4 = np.zeros_like(m2)
    norms = np.zeros_like(m2)
    for b, R in enumerate(r_values):
        for a, seed in enumerate(spec.seeds):
            cfg = _seeded(spec.base, seed).with_(truncation_R=R)
            traj, diag = simulate(cfg)
            m2[a, b] = max(diag.velocity_moment2)
            m4[a, b] = max(diag.velocity_moment4)
            grid = grid_for(traj.positions, sweep.bandwidth)
            dens = [rho_phi(traj.snapshot(k), sweep.weight, sweep.bandwidth, grid) for k in range(len(traj))]
            norms[a, b] = sobolev_norm_time_series(dens, sweep.eta, cfg.dt * cfg.record_every)
    rows = []
    for b, R in enumerate(r_values):
        row = {"R": R}
        for name, arr in (("sup_m2", m2), ("sup_m4", m4), ("averaging_norm", norms)):
            row[f"{name}_mean"], row[f"{name}_se"] = _mean_se(arr[:, b])
        rows.append(row)
    report = StudyReport("R_uniformity", {"moments": rows}, seeds=_seed_record(spec))
    report.notes.append(f"KDE bandwidth {sweep.bandwidth} fixed across the sweep; eta = {sweep.eta:.6g}")
    r4 = m4.mean(axis=0)
    rn = norms.mean(axis=0)
    ratio4 = float(r4.max() / r4.min())
    ratio2 = float(m2.mean(axis=0).max() / m2.mean(axis=0).min())
    finite = bool(np.all(np.isfinite(norms)))
    ration = float(rn.max() / rn.min()) if finite else math.inf
    report.slopes["moment2_ratio"] = ratio2
    report.verdicts += [
        Verdict("C3.moment4_ratio", ratio4, moment_ratio, ratio4 <= moment_ratio,
                "max/min over R of seed-mean sup_t velocity 4th moment"),
        Verdict("C4.averaging_ratio", ration, norm_ratio, finite and ration <= norm_ratio,
                "max/min over R of the eta-Sobolev norm of rho_phi (finite at every R)"),
    ]
    return report


def alignment_discrepancy(ens, kernel, tr, k):
    """mean_i |u_R(x_i) - kNN mean velocity around x_i|."""
    u = eval_u_r(ens, kernel, tr, ens.positions, index=_safe_index(ens, kernel))
    knn = local_velocity_knn(ens, ens.positions, k)
    return float(np.mean(np.linalg.norm(u - knn, axis=1)))


def _safe_index(ens, kernel):
    try:
        return CellIndex.build(ens, kernel)
    except Exception:
        return None


def study_sla_limit(spec):
    """Shrinking the alignment radius: phi_r(x) = r^-d phi_1(x / r).

    Reports (i) the endpoint gap between u_R and the k-NN local velocity and
    (ii) sliced W2 between endpoints of consecutive radii (shared seeds).
    """
    sweep = spec.sweep
    r_values = tuple(float(r) for r in sweep.r_values)
    if any(r <= 0 for r in r_values) or list(r_values) != sorted(r_values, reverse=True):
        raise ConfigError("mollifier radii must be positive and decreasing", "study.r_values")
    base = spec.base
    k = sweep.k or max(1, int(round(math.sqrt(base.n))))
    gaps = np.zeros((len(spec.seeds), len(r_values)))
    dists = np.zeros((len(spec.seeds), max(len(r_values) - 1, 0)))
    report = StudyReport("sla_limit", seeds=_seed_record(spec))
    for a, seed in enumerate(spec.seeds):
        ends = []
        for b, r in enumerate(r_values):
            cfg = _seeded(base, seed).with_(kernel=rescale_phi(base.kernel, r))
            end = simulate(cfg)[0].final
            ends.append(end)
            gaps[a, b] = alignment_discrepancy(end, cfg.kernel, cfg.truncation, k)
            floor = float(np.mean(end.positions.std(axis=0))) * base.n ** (-1.0 / base.dim)
            if r * base.kernel.phi.r2 < floor and a == 0:
                report.notes.append(f"r={r}: support radius below the resolution floor {floor:.3g}")
        for b in range(len(r_values) - 1):
            dists[a, b] = wasserstein_sliced(ends[b], ends[b + 1], 2, sweep.n_proj, sweep.proj_seed).distance
    rows = []
    for b, r in enumerate(r_values):
        m, se = _mean_se(gaps[:, b])
        row = {"r": r, "u_gap_mean": m, "u_gap_se": se}
        if b > 0:
            row["sliced_W2_to_previous_mean"], row["sliced_W2_to_previous_se"] = _mean_se(dists[:, b - 1])
        else:
            row["sliced_W2_to_previous_mean"] = row["sliced_W2_to_previous_se"] = None
        rows.append(row)
    report.tables["sweep"] = rows
    report.notes.append(f"k-NN oracle with k = {k}")
    g = gaps.mean(axis=0)
    dm = dists.mean(axis=0)
    g_ok = bool(np.all(np.diff(g) < 0))
    d_ok = bool(np.all(np.diff(dm) < 0))
    report.verdicts += [
        Verdict("C5.alignment", float(np.max(np.diff(g))) if g.size > 1 else 0.0, 0.0, g_ok,
                "largest step change of mean |u_R - u_knn| along the sweep (must be < 0)"),
        Verdict("C5.cauchy", float(np.max(np.diff(dm))) if dm.size > 1 else 0.0, 0.0, d_ok,
                "largest step change of consecutive sliced W2 distances (must be < 0)"),
    ]
    return report


def _fit_rate(times, variance):
    t = np.asarray(times)
    v = np.asarray(variance)
    ok = v > 0
    if ok.sum() < 2:
        return 0.0
    return float(-np.polyfit(t[ok], np.log(v[ok]), 1)[0])


def ode_variance_oracle(v0, lam, t_final, max_step):
    """Velocity variance of dv_i/dt = lam (mean(v) - v_i), integrated by RK45."""
    n, d = v0.shape

    def rhs(_, y):
        v = y.reshape(n, d)
        return (lam * (v.mean(axis=0) - v)).ravel()

    sol = solve_ivp(rhs, (0.0, t_final), v0.ravel(), method="RK45", max_step=max_step,
                    rtol=1e-10, atol=1e-12, dense_output=True)
    return sol


def study_flocking(spec, rate_tol=0.10, monotone_tol=1e-6, allow_noise=False):
    """Velocity-variance decay of the noiseless alignment dynamics.

    For a constant Cucker-Smale weight lam, the continuous-time variance decays
    like exp(-2 lam t); the fitted rate is compared to 2 lam and to an
    independent RK45 integration of the reduced ODE at step dt/10.
    """
    kern = spec.base.kernel
    noiseless = (isinstance(kern.psi_tilde, Constant) and kern.psi_tilde.c == 0.0
                 and isinstance(kern.forcing, ZeroForce))
    if not noiseless and not allow_noise:
        raise ConfigError("flocking study needs psi_tilde = 0 and F = 0", "kernel")
    report = StudyReport("flocking", seeds=_seed_record(spec))
    rows = []
    rates = []
    worst_rise = -math.inf
    snap_times = None
    for seed in spec.seeds:
        cfg = _seeded(spec.base, seed)
        traj, diag = simulate(cfg)
        var = np.asarray(diag.velocity_variance)
        times = np.asarray(diag.time)
        if var[0] > 0:
            worst_rise = max(worst_rise, float(np.max(np.diff(var) / var[:-1])) if var.size > 1 else -math.inf)
        snap_times = times
        rate = _fit_rate(times, var)
        rates.append(rate)
        for t, s in zip(times, var):
            rows.append({"seed": int(seed), "time": float(t), "velocity_variance": float(s)})
    report.tables["variance"] = rows
    rate, _ = _mean_se(rates)
    report.slopes["decay_rate"] = rate
    if noiseless:
        report.verdicts.append(Verdict(
            "C6.monotone", worst_rise if np.isfinite(worst_rise) else 0.0, monotone_tol,
            bool(worst_rise <= monotone_tol), "largest relative one-snapshot increase of the variance"))
    if noiseless and isinstance(kern.psi, Constant):
        lam = kern.psi.c
        cfg = _seeded(spec.base, spec.seeds[0])
        v0 = sample_initial(cfg).velocities
        sol = ode_variance_oracle(v0, lam, cfg.t_final, cfg.dt / 10)
        times = snap_times
        vv = sol.sol(times).T.reshape(times.size, *v0.shape)
        ovar = np.mean(np.sum((vv - vv.mean(axis=1, keepdims=True)) ** 2, axis=2), axis=1)
        orate = _fit_rate(times, ovar)
        report.slopes["oracle_decay_rate"] = orate
        report.slopes["target_rate"] = 2 * lam
        rel = abs(rate - 2 * lam) / (2 * lam) if lam > 0 else math.inf
        rel_o = abs(rate - orate) / orate if orate > 0 else math.inf
        report.verdicts += [
            Verdict("C6.rate", rel, rate_tol, rel <= rate_tol, "relative gap of the fitted decay rate to 2*lambda"),
            Verdict("C6.oracle", rel_o, rate_tol, rel_o <= rate_tol,
                    "relative gap of the fitted decay rate to the RK45 oracle at dt/10"),
        ]
    return report


STUDIES = {
    "strat-ito": study_strat_ito,
    "meanfield": study_meanfield,
    "sweep-R": study_R_uniformity,
    "sweep-r": study_sla_limit,
    "flock": study_flocking,
}


def run_study(kind, spec):
    try:
        fn = STUDIES[kind]
    except KeyError:
        raise ConfigError(f"unknown study kind {kind!r}", "study.kind") from None
    report = fn(spec)
    if spec.outputs:
        report.write(spec.outputs)
    return report
