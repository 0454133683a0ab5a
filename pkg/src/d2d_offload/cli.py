"""Command-line driver: ``d2d-offload {analytic,simulate,validate,optimal-k,profile}``.

Exit codes: 0 success, 1 validation failure, 2 configuration error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import replace

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .config import ExperimentConfig, Sweep, db_to_linear, load_profile, parse_range, profile_text
from .content import CacheParams
from .errors import ConfigError, D2DOffloadError, DomainError
from .geometry import distance_distribution
from .modes import SelectionScheme, p_d2d_mode
from .montecarlo import OBSERVABLES, conditional_distance_histogram, estimate
from .performance import (
    avg_rate_overall,
    baseline_rates,
    coverage_cellular,
    coverage_d2d_mode,
    coverage_overall,
    optimal_k,
)

__all__ = ["main", "COLUMNS", "HIST_COLUMNS", "read_table", "format_table"]

COLUMNS = ("scheme", "k", "c", "metric", "value", "method", "ci_halfwidth", "trials", "seed")
HIST_COLUMNS = ("bin_lo", "bin_hi", "true_density", "disk_density", "model_density")
EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3
ANALYTIC_METRICS = ("coverage", "coverage-d2d", "mode-prob", "rate", "coverage-cellular")
_INT_FIELDS = {"k", "c", "trials", "seed"}
_FLOAT_FIELDS = {"value", "ci_halfwidth", "bin_lo", "bin_hi", "true_density", "disk_density", "model_density"}


class NumericalFailure(Exception):
    def __init__(self, where, exc):
        super().__init__(f"{where}: {type(exc).__name__}: {exc}")


def _guard(where, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except ConfigError:
        raise
    except (D2DOffloadError, ArithmeticError, ValueError) as exc:
        raise NumericalFailure(where, exc) from exc


# ---------------------------------------------------------------- tables


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_table(rows, fmt, columns=COLUMNS) -> str:
    if fmt == "json":
        return json.dumps({"columns": list(columns), "rows": [dict(zip(columns, r)) for r in rows]}, indent=1) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def _parse_cell(name, text):
    if text == "":
        return None
    if name in _INT_FIELDS:
        return int(text)
    if name in _FLOAT_FIELDS:
        return float(text)
    return text


def read_table(text: str, fmt: str):
    """Parse CSV or JSON output back into typed row tuples."""
    if fmt == "json":
        data = json.loads(text)
        cols = data["columns"]
        return [tuple(row[c] for c in cols) for row in data["rows"]]
    rd = csv.reader(io.StringIO(text))
    cols = next(rd)
    return [tuple(_parse_cell(c, v) for c, v in zip(cols, row)) for row in rd]


def _emit(text, out):
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------- config


def _trials_arg(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid trial count {text!r}") from None
    if v != int(v) or v < 1:
        raise argparse.ArgumentTypeError("trials must be a positive integer")
    return int(v)


def _build_config(args) -> ExperimentConfig:
    cfg = load_profile(args.profile)
    sweep = cfg.sweep
    if getattr(args, "scheme", None):
        sweep = replace(sweep, schemes=tuple(SelectionScheme.parse(s.strip()).value
                                             for s in args.scheme.split(",") if s.strip()))
    if getattr(args, "k", None):
        sweep = replace(sweep, k=parse_range(args.k))
    if getattr(args, "c", None):
        sweep = replace(sweep, c=parse_range(args.c))
    cache = cfg.cache
    if getattr(args, "zeta", None) is not None or getattr(args, "c_d", None) is not None:
        cache = CacheParams(cache.L, cache.zeta if args.zeta is None else args.zeta, cache.C_m,
                            cache.C_d if args.c_d is None else args.c_d)
    net = cfg.network
    if getattr(args, "tau_db", None) is not None:
        t = db_to_linear(args.tau_db)
        net = net.with_tau(t, t)
    sim = cfg.sim
    kw = {}
    for name in ("trials", "seed", "workers", "block_size", "window_factor", "us_variant", "edge_policy"):
        v = getattr(args, name, None)
        if v is not None:
            kw[name] = v
    if kw:
        sim = replace(sim, **kw)
    for k in sweep.k:
        if k < 1:
            raise ConfigError("k values must be positive")
    for c in sweep.c:
        if not 1 <= c <= cache.L:
            raise ConfigError(f"content index {c} outside [1, {cache.L}]")
    return replace(cfg, network=net, cache=cache, sim=sim, sweep=sweep,
                   omega2=getattr(args, "omega2", None) or cfg.omega2)


def _grid(sweep: Sweep):
    for s in sorted(sweep.schemes):
        for k in sorted(sweep.k):
            for c in sorted(sweep.c):
                yield s, k, c


# ---------------------------------------------------------------- commands


def cmd_analytic(cfg: ExperimentConfig, metric: str, method: str = "exact"):
    n, g, cache = cfg.network, cfg.geometry, cfg.cache
    if metric == "coverage-cellular":
        return [("", None, None, metric, _guard("coverage_cellular", coverage_cellular, n), "exact", None, None, None)]
    rows = []
    for s, k, c in _grid(cfg.sweep):
        where = f"{metric}(scheme={s}, k={k}, c={c})"
        if metric == "coverage":
            v = _guard(where, coverage_overall, s, c, k, n, g, cache, method=method).value
        elif metric == "rate":
            v = _guard(where, avg_rate_overall, s, c, k, n, g, cache, method=method).value
        elif metric == "mode-prob":
            v = _guard(where, p_d2d_mode, s, c, k, n.eta, cache)
        elif metric == "coverage-d2d":
            v = _guard(where, coverage_d2d_mode, s, c, k, n, g, cache)
        else:
            raise ConfigError(f"unknown metric {metric!r}")
        rows.append((s, k, c, metric, float(v), method if metric in ("coverage", "rate") else "exact",
                     None, None, None))
    return rows


def _row_from_estimate(s, k, c, metric, e, cfg):
    ci = e.ci_halfwidth
    return (s, k, c, metric, float(e.mean), "mc", float(ci), int(e.trials), int(cfg.sim.seed))


def cmd_simulate(cfg: ExperimentConfig, observable: str, i: int = 1, tau=None):
    n = cfg.network
    if observable in ("mode", "coverage", "rate"):
        rows = []
        for s, k, c in _grid(cfg.sweep):
            e = _guard(f"simulate {observable}(scheme={s}, k={k}, c={c})", estimate, observable, n, cfg.sim,
                       cache=cfg.cache, scheme=s, c=c, k=k, strict=False)
            rows.append(_row_from_estimate(s, k, c, observable, e, cfg))
        return rows
    if observable not in OBSERVABLES:
        raise ConfigError(f"unknown observable {observable!r}")
    e = _guard(f"simulate {observable}", estimate, observable, n, cfg.sim, i=i, tau=tau, strict=False)
    name = f"{observable}_i{i}" if observable.endswith("d2d") else observable
    return [_row_from_estimate("", None, None, name, e, cfg)]


def cmd_distance_hist(cfg: ExperimentConfig, i: int, bins: int = 60):
    n, g = cfg.network, cfg.geometry
    h = _guard(f"distance histogram(i={i})", conditional_distance_histogram, i, n, cfg.sim)
    edges = h.edges if bins == 60 else np.linspace(0.0, h.edges[-1], bins + 1)
    if bins != 60:
        h = conditional_distance_histogram(i, n, cfg.sim, edges=edges)
    model = _guard(f"distance_pdf(i={i})", distance_distribution, i, g)
    cum = np.interp(edges, model.grid, np.r_[0.0, cumulative_trapezoid(model.density, model.grid)])
    mdens = np.diff(cum) / np.diff(edges)
    rows = [
        (float(a), float(b), float(t), float(d), float(m))
        for a, b, t, d, m in zip(edges[:-1], edges[1:], h.true_density, h.disk_density, mdens)
    ]
    sys.stderr.write(
        f"trials={h.total} retained_true={h.retained_true} fewer_than_i={h.fewer_than_i} "
        f"edge={h.edge_discarded} retained_disk={h.retained_disk} outside_bmax={h.outside_bmax} "
        f"fewer_in_bmax={h.fewer_in_bmax}\n"
    )
    return rows


def cmd_validate(cfg: ExperimentConfig, checks=None, scale: float = 1.0, profile: str = "table1"):
    from . import validation

    numbers = checks or sorted(validation.CHECKS)
    results = []
    for num in numbers:
        fn = validation.CHECKS[num]
        kw = {"profile": profile} if num == 11 else {}
        r = _guard(f"validation check {num}", fn, cfg, scale=scale, **kw)
        print(r.summary())
        for line in r.lines:
            print(f"    {line}")
        results.append(r)
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed"
          + (f"; failed: {', '.join(map(str, failed))}" if failed else ""))
    return not failed


def cmd_optimal_k(cfg: ExperimentConfig, metrics=("coverage", "rate")):
    ks = sorted(cfg.sweep.k)
    if len(ks) < 2:
        raise ConfigError("optimal-k needs a k range with at least two values")
    n, g, cache = cfg.network, cfg.geometry, cfg.cache
    rows = []
    gm = _guard("coverage_cellular", coverage_cellular, n) if "coverage" in metrics else None
    t_ca = t_bh = None
    if "rate" in metrics:
        t_ca, t_bh = _guard("baseline_rates", baseline_rates, n, g)
    for s in sorted(cfg.sweep.schemes):
        for c in sorted(cfg.sweep.c):
            for metric in metrics:
                fn = coverage_overall if metric == "coverage" else avg_rate_overall
                vals = [_guard(f"{metric}(scheme={s}, k={k}, c={c})", fn, s, c, k, n, g, cache).value for k in ks]
                j = int(np.argmax(vals))
                kstar, best = ks[j], float(vals[j])
                rows.append((s, kstar, c, f"{metric}_opt", best, "exact", None, None, None))
                if metric == "coverage":
                    rows.append((s, kstar, c, "coverage_gain_pct", (best - gm) / gm * 100, "exact", None, None, None))
                else:
                    rows.append((s, kstar, c, "rate_gain_vs_ca_pct", (best - t_ca) / t_ca * 100, "exact",
                                 None, None, None))
                    rows.append((s, kstar, c, "rate_gain_vs_bh_pct", (best - t_bh) / t_bh * 100, "exact",
                                 None, None, None))
    return rows


# ---------------------------------------------------------------- argparse


def _common(p, sweep=True, sim=False):
    p.add_argument("--profile", default="table1", help="profile name or path to an .ini file")
    p.add_argument("--out", default="", help="output file (default stdout)")
    p.add_argument("--format", choices=("csv", "json"), default=None)
    p.add_argument("--omega2", choices=("theorem", "appendix"), default=None, help=argparse.SUPPRESS)
    if sweep:
        p.add_argument("--scheme", help="comma-separated schemes, e.g. NS,US")
        p.add_argument("--k", help="k values, e.g. 1..8 or 1,2,4")
        p.add_argument("--c", help="content indices, e.g. 1,10,100")
        p.add_argument("--zeta", type=float)
        p.add_argument("--c-d", dest="c_d", type=int)
        p.add_argument("--tau-db", dest="tau_db", type=float, help="set both SINR thresholds (dB)")
    if sim:
        p.add_argument("--trials", type=_trials_arg)
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--block-size", dest="block_size", type=int)
        p.add_argument("--window-factor", dest="window_factor", type=float)
        p.add_argument("--us-variant", dest="us_variant", choices=("us_select_then_check", "us_check_then_select"))
        p.add_argument("--edge-policy", dest="edge_policy", choices=("oversized_window", "toroidal"))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="d2d-offload", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analytic", help="evaluate closed-form metrics over a sweep")
    _common(p)
    p.add_argument("--metric", choices=ANALYTIC_METRICS, default="coverage")
    p.add_argument("--method", choices=("exact", "bound"), default="exact")

    p = sub.add_parser("simulate", help="Monte Carlo estimates with 95% confidence intervals")
    _common(p, sim=True)
    p.add_argument("--observable", choices=OBSERVABLES + ("distance-hist",), default="p-in")
    p.add_argument("--i", type=int, default=1, help="helper order for D2D observables")
    p.add_argument("--bins", type=int, default=60)

    p = sub.add_parser("validate", help="run the analytic-vs-simulation reconciliation suite")
    _common(p, sweep=False, sim=True)
    p.add_argument("--checks", help="subset of check numbers, e.g. 1,6,10")
    p.add_argument("--scale", type=float, default=1.0, help="multiplier on every trial count")

    p = sub.add_parser("optimal-k", help="best k per scheme and content, with gains")
    _common(p)
    p.add_argument("--metric", choices=("coverage", "rate", "both"), default="both")

    p = sub.add_parser("profile", help="profile utilities")
    psub = p.add_subparsers(dest="action", required=True)
    d = psub.add_parser("dump", help="print a profile")
    d.add_argument("name", nargs="?", default="table1")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        if args.command == "profile":
            sys.stdout.write(profile_text(args.name))
            return EXIT_OK
        cfg = _build_config(args)
        fmt = args.format or cfg.output.format
        out = args.out or cfg.output.path
        if args.command == "analytic":
            _emit(format_table(cmd_analytic(cfg, args.metric, args.method), fmt), out)
        elif args.command == "simulate":
            if args.observable == "distance-hist":
                _emit(format_table(cmd_distance_hist(cfg, args.i, args.bins), fmt, HIST_COLUMNS), out)
            else:
                tau = None
                if args.tau_db is not None:
                    tau = db_to_linear(args.tau_db)
                _emit(format_table(cmd_simulate(cfg, args.observable, args.i, tau), fmt), out)
        elif args.command == "validate":
            checks = parse_range(args.checks) if args.checks else None
            ok = cmd_validate(cfg, checks, args.scale, args.profile)
            return EXIT_OK if ok else EXIT_VALIDATION
        elif args.command == "optimal-k":
            metrics = ("coverage", "rate") if args.metric == "both" else (args.metric,)
            _emit(format_table(cmd_optimal_k(cfg, metrics), fmt), out)
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except NumericalFailure as exc:
        sys.stderr.write(f"numerical failure in {exc}\n")
        return EXIT_NUMERICAL
    except DomainError as exc:
        sys.stderr.write(f"invalid parameters: {exc}\n")
        return EXIT_CONFIG
    except OSError as exc:
        sys.stderr.write(f"i/o error: {exc}\n")
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
