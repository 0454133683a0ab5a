"""Experiment profiles: INI files with units spelled out in every key name.

All dB/dBm/MHz/area conversions happen here, once, so the numerical modules
only ever see linear SI values.
"""
from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from .content import CacheParams
from .errors import ConfigError, D2DOffloadError
from .geometry import GeometryParams
from .modes import SelectionScheme
from .montecarlo import SimConfig
from .performance import NetworkParams

__all__ = [
    "PROFILE_DIR_ENV",
    "Sweep",
    "OutputSpec",
    "ExperimentConfig",
    "db_to_linear",
    "dbm_to_watts",
    "parse_range",
    "find_profile",
    "load_profile",
    "parse_profile",
    "profile_text",
]

PROFILE_DIR_ENV = "D2D_OFFLOAD_PROFILE_DIR"

_DENSITIES = ("lambda_m", "lambda_d", "lambda_u")
_NETWORK_KEYS = {
    "reference_disk_radius_m",
    "p_m_dbm", "p_d_dbm", "p_m_w", "p_d_w",
    "w_m_mhz", "w_d_mhz", "w_m_hz", "w_d_hz",
    "alpha",
    "tau_m_db", "tau_d_db", "tau_m_linear", "tau_d_linear",
    "sigma2_dbm", "sigma2_w",
    "beta",
} | {f"{d}_{u}" for d in _DENSITIES for u in ("per_km2", "per_m2", "n_per_reference_disk")}
_CACHE_KEYS = {"library_size", "zeta", "c_m", "c_d"}
_SIM_KEYS = {"trials", "seed", "window_factor", "edge_policy", "block_size", "workers", "us_variant"}
_SWEEP_KEYS = {"schemes", "k", "c"}
_OUTPUT_KEYS = {"format", "path"}
_SECTIONS = {
    "network": _NETWORK_KEYS,
    "cache": _CACHE_KEYS,
    "sim": _SIM_KEYS,
    "sweep": _SWEEP_KEYS,
    "output": _OUTPUT_KEYS,
}


def db_to_linear(x: float) -> float:
    return 10.0 ** (x / 10.0)


def dbm_to_watts(x: float) -> float:
    return 10.0 ** ((x - 30.0) / 10.0)


def parse_range(text: str) -> tuple:
    """'1..8' or '1, 2, 5' or '1..4, 8' -> tuple of ints (order kept, duplicates dropped)."""
    out = []
    for part in str(text).replace(";", ",").split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if ".." in part:
                lo, hi = (int(float(v)) for v in part.split(".."))
                if hi < lo:
                    raise ConfigError(f"empty range {part!r}")
                out.extend(range(lo, hi + 1))
            else:
                v = float(part)
                if v != int(v):
                    raise ConfigError(f"expected an integer, got {part!r}")
                out.append(int(v))
        except ValueError:
            raise ConfigError(f"cannot parse {part!r} as an integer or range") from None
    return tuple(dict.fromkeys(out))


@dataclass(frozen=True)
class Sweep:
    schemes: tuple = ("NS", "US")
    k: tuple = (1,)
    c: tuple = (1,)


@dataclass(frozen=True)
class OutputSpec:
    format: str = "csv"
    path: str = ""

    def __post_init__(self):
        if self.format not in ("csv", "json"):
            raise ConfigError("output format must be csv or json")


@dataclass(frozen=True)
class ExperimentConfig:
    network: NetworkParams
    cache: CacheParams
    sim: SimConfig = field(default_factory=SimConfig)
    sweep: Sweep = field(default_factory=Sweep)
    output: OutputSpec = field(default_factory=OutputSpec)
    omega2: str = "theorem"

    @property
    def geometry(self) -> GeometryParams:
        return GeometryParams(self.network.lambda_m, self.network.lambda_d, omega2=self.omega2)

    def replace(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)


def _float(sec, key):
    try:
        return float(sec[key])
    except ValueError:
        raise ConfigError(f"[{sec.name}] {key} must be a number, got {sec[key]!r}") from None


def _int(sec, key):
    v = _float(sec, key)
    if v != int(v):
        raise ConfigError(f"[{sec.name}] {key} must be an integer")
    return int(v)


def _one_of(sec, keys, what):
    present = [k for k in keys if k in sec]
    if len(present) != 1:
        raise ConfigError(f"[{sec.name}] give exactly one of {', '.join(keys)} for {what}")
    return present[0]


def _density(sec, name):
    key = _one_of(sec, [f"{name}_per_km2", f"{name}_per_m2", f"{name}_n_per_reference_disk"], name)
    v = _float(sec, key)
    if key.endswith("per_km2"):
        return v / 1e6
    if key.endswith("per_m2"):
        return v
    if "reference_disk_radius_m" not in sec:
        raise ConfigError(f"[{sec.name}] {key} needs reference_disk_radius_m")
    radius = _float(sec, "reference_disk_radius_m")
    return v / (math.pi * radius * radius)


def _choose(sec, options, what):
    # options: {key: converter}
    key = _one_of(sec, list(options), what)
    return options[key](_float(sec, key))


def _network(sec) -> NetworkParams:
    ident = lambda v: v  # noqa: E731
    return NetworkParams(
        lambda_m=_density(sec, "lambda_m"),
        lambda_d=_density(sec, "lambda_d"),
        lambda_u=_density(sec, "lambda_u"),
        P_m=_choose(sec, {"p_m_dbm": dbm_to_watts, "p_m_w": ident}, "P_m"),
        P_d=_choose(sec, {"p_d_dbm": dbm_to_watts, "p_d_w": ident}, "P_d"),
        W_m=_choose(sec, {"w_m_mhz": lambda v: v * 1e6, "w_m_hz": ident}, "W_m"),
        W_d=_choose(sec, {"w_d_mhz": lambda v: v * 1e6, "w_d_hz": ident}, "W_d"),
        alpha=_float(sec, "alpha"),
        tau_m=_choose(sec, {"tau_m_db": db_to_linear, "tau_m_linear": ident}, "tau_m"),
        tau_d=_choose(sec, {"tau_d_db": db_to_linear, "tau_d_linear": ident}, "tau_d"),
        sigma2=_choose(sec, {"sigma2_dbm": dbm_to_watts, "sigma2_w": ident}, "sigma2"),
        beta=_float(sec, "beta"),
    )


def _require(sec, keys):
    missing = sorted(k for k in keys if k not in sec)
    if missing:
        raise ConfigError(f"[{sec.name}] missing keys: {', '.join(missing)}")


def parse_profile(text: str, source: str = "<string>") -> ExperimentConfig:
    """Parse and validate a profile; every upstream invariant is checked here."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str.lower
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    for name in cp.sections():
        if name not in _SECTIONS:
            raise ConfigError(f"{source}: unknown section [{name}]")
        unknown = sorted(set(cp[name]) - _SECTIONS[name])
        if unknown:
            raise ConfigError(f"{source}: unknown keys in [{name}]: {', '.join(unknown)}")
    for name in ("network", "cache"):
        if name not in cp:
            raise ConfigError(f"{source}: missing section [{name}]")
    try:
        net = cp["network"]
        _require(net, ["alpha", "beta"])
        network = _network(net)
        cs = cp["cache"]
        _require(cs, _CACHE_KEYS)
        cache = CacheParams(L=_int(cs, "library_size"), zeta=_float(cs, "zeta"), C_m=_int(cs, "c_m"),
                            C_d=_int(cs, "c_d"))
        sim = SimConfig()
        if "sim" in cp:
            s = cp["sim"]
            kw = {}
            for key in ("trials", "seed", "block_size", "workers"):
                if key in s:
                    kw[key] = _int(s, key)
            if "window_factor" in s:
                kw["window_factor"] = _float(s, "window_factor")
            for key in ("edge_policy", "us_variant"):
                if key in s:
                    kw[key] = s[key].strip()
            sim = SimConfig(**kw)
        sweep = Sweep()
        if "sweep" in cp:
            s = cp["sweep"]
            schemes = tuple(
                SelectionScheme.parse(v.strip()).value for v in s.get("schemes", "NS, US").split(",") if v.strip()
            )
            sweep = Sweep(schemes=schemes, k=parse_range(s.get("k", "1")), c=parse_range(s.get("c", "1")))
        output = OutputSpec()
        if "output" in cp:
            o = cp["output"]
            output = OutputSpec(format=o.get("format", "csv").strip(), path=o.get("path", "").strip())
    except ConfigError:
        raise
    except (D2DOffloadError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from None
    for k in sweep.k:
        if k < 1:
            raise ConfigError("k values must be positive")
    for c in sweep.c:
        if not 1 <= c <= cache.L:
            raise ConfigError(f"content index {c} outside [1, {cache.L}]")
    return ExperimentConfig(network=network, cache=cache, sim=sim, sweep=sweep, output=output)


def _bundled(name):
    return resources.files("d2d_offload").joinpath("profiles", f"{name}.ini")


def find_profile(name: str):
    """Resolve a profile name or path: explicit path, then the env directory, then bundled."""
    p = Path(name)
    if p.suffix == ".ini" and p.is_file():
        return p
    env = os.environ.get(PROFILE_DIR_ENV)
    if env:
        cand = Path(env) / f"{name}.ini"
        if cand.is_file():
            return cand
    res = _bundled(name)
    if res.is_file():
        return res
    raise ConfigError(f"profile {name!r} not found (checked path, ${PROFILE_DIR_ENV}, bundled)")


def profile_text(name: str) -> str:
    return find_profile(name).read_text()


def load_profile(name: str) -> ExperimentConfig:
    return parse_profile(profile_text(name), source=str(name))
