"""Command-line entry point: ``stochflock {simulate,study,validate}``.

Exit codes are part of the interface: 0 success, 1 a verdict or validation
check failed, 2 the config could not be parsed or validated, 3 the time
stepper blew up.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, field

from . import __version__
from .config import build_sim_config, build_study_spec, config_hash, load_config
from .errors import ConfigError, InvalidParameter, NumericalBlowup, StochFlockError
from .experiments import run_study
from .integrator import simulate
from .kernels import KernelSpec, validate_assumptions

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_BLOWUP = 0, 1, 2, 3
STUDY_KINDS = ("strat-ito", "meanfield", "sweep-R", "sweep-r", "flock")


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    command: str
    config_hash: str
    tool_version: str = __version__
    seeds: list = field(default_factory=list)
    started: str = ""
    finished: str = ""
    outputs: dict = field(default_factory=dict)  # relative path -> sha256

    def add_outputs(self, out_dir, paths):
        for p in paths:
            self.outputs[os.path.relpath(p, out_dir)] = sha256_file(p)

    def write(self, out_dir):
        path = os.path.join(out_dir, "manifest.json")
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
        return path


def _parse_seeds(text):
    if text is None:
        return None
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse seed list {text!r}", "--seeds") from None
    if not seeds:
        raise ConfigError("empty seed list", "--seeds")
    return seeds


def _set_threads(k):
    if not k:
        return
    import numba

    numba.set_num_threads(max(1, min(int(k), numba.config.NUMBA_NUM_THREADS)))


def cmd_simulate(config_path, out_dir, seeds=None, fmt="csv"):
    raw = load_config(config_path)
    config = build_sim_config(raw)
    manifest = RunManifest("simulate", config_hash(raw), started=_now())
    runs = [(None, out_dir)] if seeds is None else [
        (s, out_dir if len(seeds) == 1 else os.path.join(out_dir, f"seed_{s}")) for s in seeds]
    written = []
    for seed, target in runs:
        cfg = config if seed is None else config.with_(noise_seed=seed, init_seed=seed)
        manifest.seeds.append({"noise_seed": cfg.noise_seed, "init_seed": cfg.init_seed})
        os.makedirs(target, exist_ok=True)
        traj, diag = simulate(cfg)
        if fmt == "csv":
            tpath = os.path.join(target, "trajectory.csv")
            traj.write_csv(tpath)
        else:
            tpath = os.path.join(target, "trajectory.npy")
            traj.write_npy(tpath)
        dpath = os.path.join(target, "diagnostics.csv")
        diag.write_csv(dpath)
        written += [tpath, dpath]
    manifest.add_outputs(out_dir, written)
    manifest.finished = _now()
    manifest.write(out_dir)
    return EXIT_OK


def cmd_study(kind, config_path, out_dir, seeds=None):
    raw = load_config(config_path)
    spec = build_study_spec(kind, raw, seeds=None if seeds is None else tuple(seeds), outputs=None)
    manifest = RunManifest(f"study {kind}", config_hash(raw), seeds=list(spec.seeds), started=_now())
    report = run_study(kind, spec)
    os.makedirs(out_dir, exist_ok=True)
    written = report.write(out_dir)
    for note in report.notes:
        print(f"note: {note}")
    for v in report.verdicts:
        print(v.line())
    manifest.add_outputs(out_dir, written)
    manifest.finished = _now()
    manifest.write(out_dir)
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_validate(config_path):
    raw = load_config(config_path)
    if "kernel" not in raw:
        raise ConfigError("missing required section", "kernel")
    spec = KernelSpec.from_dict(raw["kernel"])
    report = validate_assumptions(spec)
    print(report.summary())
    return EXIT_OK if report.passed else EXIT_FAIL


def build_parser():
    parser = argparse.ArgumentParser(prog="stochflock", description="Stochastic flocking simulations and studies.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--config", required=True, metavar="PATH", help="TOML config file")
        if out:
            p.add_argument("--out", required=True, metavar="DIR", help="output directory")
            p.add_argument("--seeds", metavar="S1,S2,...", help="override the config seeds")
        p.add_argument("--threads", type=int, default=0, metavar="K", help="worker threads (0 = auto)")

    p = sub.add_parser("simulate", help="run one simulation and export the trajectory")
    common(p)
    p.add_argument("--format", choices=("csv", "binary"), default="csv")
    p = sub.add_parser("study", help="run a convergence or sweep study")
    p.add_argument("kind", choices=STUDY_KINDS)
    common(p)
    p = sub.add_parser("validate", help="check kernel assumptions only")
    common(p, out=False)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        _set_threads(args.threads)
        if args.command == "simulate":
            return cmd_simulate(args.config, args.out, _parse_seeds(args.seeds), args.format)
        if args.command == "study":
            return cmd_study(args.kind, args.config, args.out, _parse_seeds(args.seeds))
        return cmd_validate(args.config)
    except (ConfigError, InvalidParameter) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalBlowup as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except StochFlockError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
