"""TOML run configuration with environment overrides.

A config file has the sections ``[kernel]``, ``[truncation]``, ``[sim]`` and
(for studies) ``[study]``. Any leaf can be overridden from the environment
with ``STOCHFLOCK_<SECTION>__<KEY>[__<SUBKEY>...]=<toml literal>``, e.g.
``STOCHFLOCK_SIM__DT=0.005`` or ``STOCHFLOCK_KERNEL__PSI__GAMMA=2``.
"""
from __future__ import annotations

import copy
import hashlib
import json
import os
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .experiments import DtHalvings, NDoubling, PhiRSweep, RSweep, StudySpec
from .integrator import SimConfig, init_from_dict
from .kernels import KernelSpec
from .measures import VelocityWeight

ENV_PREFIX = "STOCHFLOCK_"


def _parse_literal(text):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_env_overrides(raw, environ=None):
    environ = os.environ if environ is None else environ
    raw = copy.deepcopy(raw)
    for name in sorted(environ):
        if not name.startswith(ENV_PREFIX):
            continue
        keys = [k.lower() for k in name[len(ENV_PREFIX):].split("__") if k]
        if not keys:
            continue
        node = raw
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError("override targets a non-table value", ".".join(keys))
        node[keys[-1]] = _parse_literal(environ[name])
    return raw


def load_config(path, environ=None):
    """Read a TOML config and apply environment overrides; returns the raw dict."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return apply_env_overrides(raw, environ)


def config_hash(raw):
    """SHA-256 of the canonical JSON form; independent of key order."""
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def _section(raw, name):
    if name not in raw:
        raise ConfigError("missing required section", name)
    if not isinstance(raw[name], dict):
        raise ConfigError("expected a table", name)
    return raw[name]


_SIM_KEYS = {"n", "t_final", "dt", "scheme", "noise_seed", "init_seed", "record_every",
             "use_cell_list", "include_s", "init"}


def build_sim_config(raw):
    kernel = KernelSpec.from_dict(_section(raw, "kernel"))
    trunc = raw.get("truncation", {})
    sim = _section(raw, "sim")
    unknown = set(sim) - _SIM_KEYS
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", "sim")
    if "n" not in sim:
        raise ConfigError("missing required field", "sim.n")
    kwargs = {k: sim[k] for k in _SIM_KEYS - {"init"} if k in sim}
    try:
        for k in ("t_final", "dt"):
            if k in kwargs:
                kwargs[k] = float(kwargs[k])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), "sim") from None
    if "init" in sim:
        kwargs["init"] = init_from_dict(sim["init"])
    return SimConfig(kernel=kernel, truncation_R=float(trunc.get("R", 50.0)),
                     smoothing_width=float(trunc.get("smoothing_width", 0.5)), **kwargs)


def _weight_from(data):
    if data is None:
        return VelocityWeight("gaussian", scale=1.0)
    if not isinstance(data, dict):
        raise ConfigError("expected a table", "study.weight")
    return VelocityWeight(kind=data.get("kind", "gaussian"), scale=float(data.get("scale", 1.0)),
                          component=int(data.get("component", 0)), R=float(data.get("R", float("inf"))))


def build_study_spec(kind, raw, seeds=None, outputs=None):
    base = build_sim_config(raw)
    st = raw.get("study", {})
    if seeds is None:
        seeds = tuple(int(s) for s in st.get("seeds", [0]))
    if kind == "strat-ito":
        sweep = DtHalvings(int(st.get("count", 4)))
    elif kind == "meanfield":
        sweep = NDoubling(tuple(int(n) for n in st.get("n_list", (32, 64, 128, 256))))
    elif kind == "sweep-R":
        sweep = RSweep(tuple(float(r) for r in st.get("r_values", (1.0, 10.0, 100.0))),
                       bandwidth=float(st.get("bandwidth", 0.5)), eta=float(st.get("eta", 1.0 / 6.0)),
                       weight=_weight_from(st.get("weight")))
    elif kind == "sweep-r":
        k = st.get("k")
        sweep = PhiRSweep(tuple(float(r) for r in st.get("r_values", (2.0, 1.0, 0.5, 0.25))),
                          k=int(k) if k else None, n_proj=int(st.get("n_proj", 64)),
                          proj_seed=int(st.get("proj_seed", 0)))
    elif kind == "flock":
        sweep = None
    else:
        raise ConfigError(f"unknown study kind {kind!r}", "study.kind")
    return StudySpec(base, sweep, tuple(seeds), outputs)


def _toml_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    if isinstance(v, float):
        return repr(v) if v == v and abs(v) != float("inf") else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    return str(v)


def dump_toml(raw):
    """Minimal TOML writer for nested dicts of scalars and lists."""
    lines = []

    def emit(prefix, table):
        scalars = {k: v for k, v in table.items() if not isinstance(v, dict)}
        tables = {k: v for k, v in table.items() if isinstance(v, dict)}
        if prefix and scalars:
            lines.append(f"[{prefix}]")
        for k, v in scalars.items():
            lines.append(f"{k} = {_toml_value(v)}")
        if scalars:
            lines.append("")
        for k, v in tables.items():
            emit(f"{prefix}.{k}" if prefix else k, v)

    emit("", raw)
    return "\n".join(lines).rstrip() + "\n"


def study_to_raw(spec, kind):
    """Inverse of ``build_study_spec`` for writing example config files."""
    raw = spec.base.to_dict()
    st = {"seeds": list(spec.seeds)}
    sw = spec.sweep
    if kind == "strat-ito":
        st["count"] = sw.count
    elif kind == "meanfield":
        st["n_list"] = list(sw.n_list)
    elif kind == "sweep-R":
        st.update(r_values=list(sw.r_values), bandwidth=sw.bandwidth, eta=sw.eta,
                  weight={"kind": sw.weight.kind, "scale": sw.weight.scale})
    elif kind == "sweep-r":
        st.update(r_values=list(sw.r_values), n_proj=sw.n_proj, proj_seed=sw.proj_seed)
        if sw.k:
            st["k"] = sw.k
    raw["study"] = st
    return raw
