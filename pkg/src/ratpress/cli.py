"""Command-line front end: ``ratpress <task> --map f.json [options]``.

Every task writes its CSV files and a ``summary.json`` into ``--out``.
Exit codes: 0 success, 1 computation error, 2 bad configuration,
3 verification failure (rejected couple).
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import platform
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .deviations import ensemble_mean_log_derivative, ensemble_mgf_rate, omega_ensemble, rate_function
from .errors import ConfigError, EmptyInterval, RatPressError, VerificationFailed
from .inducing import (
    canonical_branches,
    count_bad_pullbacks,
    decomposition_check,
    enumerate_components,
    propose_nice_couple,
    read_branches,
    tail_profile,
    two_variable_pressure,
    vanishing_check,
    verify_nice,
    write_branches,
)
from .maps import load_map
from .pressure import (
    PressureConfig,
    _json_float,
    asymptote_check,
    assemble_pressure,
    check_shape,
    fmt,
    pressure_derivative,
    write_csv,
)
from .spectra import (
    chi_star_range,
    dimension_spectrum,
    integral_means_spectrum,
    legendre_pair_check,
    lyapunov_spectrum,
)
from .spectra import write_csv as write_spectrum_csv

TASKS = ("pressure", "exponents", "transitions", "spectra", "induced", "deviations")
METRICS = ("spherical", "euclidean")


@dataclass
class RunConfig:
    map: str = ""
    task: str = "pressure"
    grid: list = field(default_factory=lambda: [-3.0, 3.0, 0.1])
    depth: int | None = None
    period: int | None = None
    leaf_budget: int = 2**18
    metric: str = "spherical"
    seed: int = 0
    threads: int = 1
    out: str = "out"
    max_return: int = 20
    words: int | None = None
    radii: list = field(default_factory=lambda: [0.03, 0.08])
    verify_depth: int = 200
    boundary_samples: int = 256
    allow_unverified: bool = False
    bad_pullback_orders: int = 12
    branches_in: str | None = None
    branches_out: str | None = None
    t0: float = 0.0
    ensemble_depth: int = 14
    s_values: list = field(default_factory=lambda: [-0.5, 0.5])
    epsilons: list = field(default_factory=lambda: [0.001, 0.005, 0.01])
    alphas: list | None = None

    def t_grid(self) -> np.ndarray:
        a, b, h = self.grid
        k = int(math.floor((b - a) / h + 1e-9))
        return np.round(a + h * np.arange(k + 1), 12)


_INT_KEYS = {"depth", "period", "leaf_budget", "seed", "threads", "max_return", "words",
             "verify_depth", "boundary_samples", "bad_pullback_orders", "ensemble_depth"}
_POSITIVE = {"depth", "period", "leaf_budget", "threads", "words", "verify_depth",
             "boundary_samples", "ensemble_depth"}
_NONNEG = {"seed", "max_return", "bad_pullback_orders"}
_FLOAT_LISTS = {"grid": 3, "radii": 2, "s_values": None, "epsilons": None, "alphas": None}
_STR_KEYS = {"map", "task", "metric", "out", "branches_in", "branches_out"}


def _check(key, value):
    if key in _INT_KEYS:
        if value is None and key in ("depth", "period", "words"):
            return None
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(key, f"expected an integer, got {value!r}")
        if key in _POSITIVE and value <= 0:
            raise ConfigError(key, "must be positive")
        if key in _NONNEG and value < 0:
            raise ConfigError(key, "must be nonnegative")
        return value
    if key in _FLOAT_LISTS:
        if value is None and key == "alphas":
            return None
        if not isinstance(value, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise ConfigError(key, "expected a list of numbers")
        want = _FLOAT_LISTS[key]
        if want is not None and len(value) != want:
            raise ConfigError(key, f"expected {want} numbers")
        return [float(v) for v in value]
    if key in _STR_KEYS:
        if value is None and key in ("branches_in", "branches_out"):
            return None
        if not isinstance(value, str):
            raise ConfigError(key, "expected a string")
        return value
    if key == "allow_unverified":
        if not isinstance(value, bool):
            raise ConfigError(key, "expected true or false")
        return value
    if key == "t0":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, "expected a number")
        return float(value)
    raise ConfigError(key, "unknown key")


def parse_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Strictly parse a JSON config file, then apply non-None ``overrides``."""
    known = {f.name for f in fields(RunConfig)}
    values = {}
    base = None
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON: {exc.msg}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config", "top level must be an object")
        values.update(data)
        base = Path(path).resolve().parent
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = v
    for k in values:
        if k not in known:
            raise ConfigError(k, "unknown key")
    cfg = RunConfig()
    for k, v in values.items():
        setattr(cfg, k, _check(k, v))
    if not cfg.map:
        raise ConfigError("map", "a map specification path is required")
    if base is not None and not Path(cfg.map).is_absolute() and (base / cfg.map).exists():
        cfg.map = str(base / cfg.map)
    if cfg.task not in TASKS:
        raise ConfigError("task", f"must be one of {', '.join(TASKS)}")
    if cfg.metric not in METRICS:
        raise ConfigError("metric", f"must be one of {', '.join(METRICS)}")
    a, b, h = cfg.grid
    if h <= 0 or b < a:
        raise ConfigError("grid", "need a <= b and step > 0")
    r_v, r_vh = cfg.radii
    if not 0 < r_v < r_vh:
        raise ConfigError("radii", "need 0 < r_V < r_Vhat")
    return cfg


# -- tasks ---------------------------------------------------------------------------

def _write_rows(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(x) if isinstance(x, (float, np.floating)) else x for x in r])


def _clean(obj):
    """JSON-safe copy: non-finite floats become strings or null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _json_float(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def _curve(f, cfg, grid=None):
    pc = PressureConfig(leaf_budget=cfg.leaf_budget, depth=cfg.depth, period=cfg.period,
                        metric=cfg.metric, seed=cfg.seed, threads=cfg.threads)
    return assemble_pressure(f, cfg.t_grid() if grid is None else grid, pc)


def _curve_results(curve):
    return {
        "t_star": curve.t_star,
        "t_minus": curve.t_minus,
        "t_plus": curve.t_plus,
        "chi_inf": curve.chi_inf,
        "chi_sup": curve.chi_sup,
        "shape": check_shape(curve),
        "notes": curve.notes + curve.transition_notes,
        "exceptional": curve.exceptional,
    }


def _task_pressure(f, cfg, out):
    curve = _curve(f, cfg)
    write_csv(curve, out / "pressure.csv")
    return _curve_results(curve)


def _task_exponents(f, cfg, out):
    curve = _curve(f, cfg)
    rows = [("chi_inf", curve.chi_inf, "fused"), ("chi_sup", curve.chi_sup, "fused")]
    for name, val in sorted(curve.chi_sources.items()):
        if isinstance(val, tuple):
            rows.append((f"{name}_min", float(val[0]), name))
            rows.append((f"{name}_max", float(val[1]), name))
        else:
            rows.append((name, float(val), name))
    _write_rows(out / "exponents.csv", ["quantity", "value", "source"], rows)
    return {"chi_inf": curve.chi_inf, "chi_sup": curve.chi_sup, "sources": curve.chi_sources}


def _task_transitions(f, cfg, out):
    curve = _curve(f, cfg)
    rows = [("t_minus", curve.t_minus), ("t_plus", curve.t_plus),
            ("t_star", curve.t_star if curve.t_star is not None else math.nan)]
    _write_rows(out / "transitions.csv", ["quantity", "value"], rows)
    res = _curve_results(curve)
    res["asymptotes"] = asymptote_check(curve)
    return res


def _task_spectra(f, cfg, out):
    curve = _curve(f, cfg)
    res = {"legendre": legendre_pair_check(curve)}
    try:
        res["chi_star"] = chi_star_range(curve)
    except EmptyInterval as exc:
        res["chi_star"] = str(exc)
    alphas = cfg.alphas
    if alphas is None:
        lo, hi = curve.chi_inf, curve.chi_sup
        alphas = [lo] if hi - lo < 1e-9 else list(np.linspace(lo, hi, 21))
    lyap = []
    for a in alphas:
        try:
            lyap.append(lyapunov_spectrum(curve, float(a)))
        except RatPressError as exc:
            res.setdefault("skipped", []).append(f"L({a!r}): {exc}")
    write_spectrum_csv(lyap, out / "lyapunov.csv")
    if f.is_polynomial:
        dims = []
        for a in np.round(np.arange(1, 11) / 10, 12):
            try:
                dims.append(dimension_spectrum(curve, float(a), f.degree))
            except RatPressError as exc:
                res.setdefault("skipped", []).append(f"D({a!r}): {exc}")
        write_spectrum_csv(dims, out / "dimension.csv")
        rows = [(float(t), integral_means_spectrum(curve, float(t), f.degree)) for t in curve.t]
        _write_rows(out / "integral_means.csv", ["t", "beta"], rows)
        res["notes"] = ["dimension and integral-means spectra assume a connected Julia set"]
    return res


def _task_deviations(f, cfg, out):
    curve = _curve(f, cfg)
    ens = omega_ensemble(f, None, cfg.t0, cfg.ensemble_depth, metric=cfg.metric, seed=cfg.seed)
    p0 = curve.value(cfg.t0)
    rows = []
    for s in cfg.s_values:
        ref = curve.value(cfg.t0 - s) - p0 if curve.t[0] <= cfg.t0 - s <= curve.t[-1] else math.nan
        rows.append((float(s), ensemble_mgf_rate(ens, s), ref))
    _write_rows(out / "deviations.csv", ["s", "mgf_rate", "reference"], rows)
    rate_rows = []
    for side in ("upper", "lower"):
        for eps in cfg.epsilons:
            try:
                rate_rows.append((side, float(eps), rate_function(curve, cfg.t0, eps, side), ""))
            except RatPressError as exc:
                rate_rows.append((side, float(eps), math.nan, type(exc).__name__))
    _write_rows(out / "rate.csv", ["side", "epsilon", "rate", "error"], rate_rows)
    left, right = pressure_derivative(curve, cfg.t0)
    return {"mean_log_derivative": ensemble_mean_log_derivative(ens),
            "minus_slope": [-left, -right], "dropped_atoms": ens.dropped}


def _task_induced(f, cfg, out):
    res = {}
    status = 0
    if cfg.branches_in:
        couple_json, branches, unsure = read_branches(cfg.branches_in)
        res["couple"] = couple_json
        if not couple_json.get("verified"):
            status = 3
    else:
        couple = propose_nice_couple(f, tuple(cfg.radii))
        report = verify_nice(couple, f, cfg.verify_depth, cfg.boundary_samples, raise_on_failure=False)
        res["verification"] = report.to_json()
        res["couple"] = couple.to_json()
        if not report.accepted:
            status = 3
            if not cfg.allow_unverified:
                return res, status
        comps = enumerate_components(couple, f, cfg.max_return, require_verified=False)
        branches, unsure = canonical_branches(comps, couple)
        res["components"] = len(comps)
        res["incomplete"] = comps.incomplete
        if cfg.branches_out:
            write_branches(cfg.branches_out, couple, branches, unsure)
        bad = []
        for n in range(1, cfg.bad_pullback_orders + 1):
            b = count_bad_pullbacks(couple, f, n)
            bad.append((n, b.count, b.uncertain, b.bound, str(b.passed).lower()))
        _write_rows(out / "bad_pullbacks.csv", ["n", "count", "uncertain", "bound", "passed"], bad)
    res["branches"] = len(branches)
    res["uncertain_branches"] = len(unsure)
    res["decomposition"] = decomposition_check(branches)
    per = {}
    for b in branches:
        per.setdefault(b.m, []).append(b)
    _write_rows(out / "branches.csv", ["m", "count", "max_log_S"],
                [(m, len(v), max(x.log_S for x in v)) for m, v in sorted(per.items())])
    if branches:
        curve = _curve(f, cfg)
        if curve.t_star is not None:
            ts = curve.t_star
            van = vanishing_check(branches, curve, ts, M=cfg.max_return)
            van["residual_at_p_plus_0.2"] = two_variable_pressure(branches, ts, van["p"] + 0.2, cfg.words)
            res["vanishing"] = van
            tp = tail_profile(branches, ts, van["p"], cfg.max_return)
            res["tail"] = {"eps0": tp.eps0, "max_residual": tp.max_residual, "fit_range": tp.fit_range}
            _write_rows(out / "tail.csv", ["k", "a_k"], [(int(k), float(a)) for k, a in zip(tp.k, tp.a)])
    return res, status


_RUNNERS = {
    "pressure": _task_pressure,
    "exponents": _task_exponents,
    "transitions": _task_transitions,
    "spectra": _task_spectra,
    "deviations": _task_deviations,
}


def run_task(cfg: RunConfig) -> tuple:
    """Run one task, write its artifacts; returns (exit code, summary dict)."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {
        "inputs": asdict(cfg),
        "versions": {"ratpress": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "seed": cfg.seed,
        "timings": {},
        "warnings": [],
    }
    code = 0
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            f = load_map(cfg.map)
            summary["inputs"]["map_spec"] = f.to_json()
            if cfg.task == "induced":
                results, code = _task_induced(f, cfg, out)
            else:
                results = _RUNNERS[cfg.task](f, cfg, out)
            summary["results"] = results
        except VerificationFailed as exc:
            code = 3
            summary["error"] = {"type": type(exc).__name__, "message": str(exc), "n": exc.n,
                                "sample": exc.sample}
        except (RatPressError, ValueError, OSError) as exc:
            code = 1
            summary["error"] = {"type": type(exc).__name__, "message": str(exc)}
    summary["timings"]["total_s"] = time.perf_counter() - t0
    summary["warnings"] = sorted({f"{w.category.__name__}: {w.message}" for w in caught})
    summary["exit_code"] = code
    (out / "summary.json").write_text(json.dumps(_clean(summary), indent=2, sort_keys=True) + "\n",
                                      encoding="utf-8")
    return code, summary


# -- argument parsing ----------------------------------------------------------------

def _grid(text):
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("grid must look like a:b:step")
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _pair(text):
    try:
        a, b = (float(x) for x in text.split(":"))
    except ValueError as exc:
        raise argparse.ArgumentTypeError("expected r_V:r_Vhat") from exc
    return [a, b]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ratpress", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"ratpress {__version__}")
    sub = p.add_subparsers(dest="task", required=True)
    for task in TASKS:
        s = sub.add_parser(task, help=f"run the {task} task")
        s.add_argument("--config", help="JSON config file; flags override its values")
        s.add_argument("--map", help="map specification JSON")
        s.add_argument("--out", help="output directory (default: out)")
        s.add_argument("--threads", type=int, help="worker threads over the t grid (default 1)")
        s.add_argument("--seed", type=int, help="random seed (default 0)")
        s.add_argument("--metric", choices=METRICS, help="derivative metric (default spherical)")
        s.add_argument("--grid", type=_grid, help="t grid a:b:step (default -3:3:0.1)")
        s.add_argument("--depth", type=int, help="backward-tree depth (default from the leaf budget)")
        s.add_argument("--period", type=int, help="periodic-orbit period (default from the degree cap)")
        s.add_argument("--max-return", dest="max_return", type=int,
                       help="largest return time enumerated by the induced task (default 20)")
        s.add_argument("--words", type=int,
                       help="word length for induced partition sums (default: spectral radius)")
        s.add_argument("--radii", type=_pair, help="couple radii r_V:r_Vhat (default 0.03:0.08)")
        s.add_argument("--verify-depth", dest="verify_depth", type=int,
                       help="forward steps for couple verification (default 200)")
        s.add_argument("--allow-unverified", dest="allow_unverified", action="store_const", const=True,
                       help="continue the induced task after a rejected couple (exit code stays 3)")
        s.add_argument("--branches-in", dest="branches_in", help="reuse a saved branch table")
        s.add_argument("--branches-out", dest="branches_out", help="save the branch table here")
        s.add_argument("--t0", type=float, help="base parameter for deviations (default 0)")
        s.add_argument("--ensemble-depth", dest="ensemble_depth", type=int,
                       help="preimage depth of the weighted ensemble (default 14)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    over = {k: v for k, v in vars(args).items() if k != "config"}
    try:
        cfg = parse_config(args.config, over)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    code, summary = run_task(cfg)
    if "error" in summary:
        print(f"{summary['error']['type']}: {summary['error']['message']}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
