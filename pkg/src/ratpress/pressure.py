"""Pressure-curve assembly, convexification and the quantities read off it.

Several finite-size estimators of P(t) are evaluated on a grid and fused by
their median. The fused samples are projected onto a convex, non-increasing
curve from which slopes, transition points and the first zero are taken.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .backward import (
    backward_tree,
    extremal_derivative_rates,
    generic_roots,
    sup_derivative_rate,
    tree_pressure_levels,
)
from .errors import BudgetExceeded, EstimatorDisagreement, NoZeroInGrid, OutOfGrid
from .maps import MapSpec, detect_exceptional, find_periodic_points

UNC_FLOOR = 1e-9


@dataclass
class PressureConfig:
    """Budgets and tolerances for :func:`assemble_pressure`."""

    leaf_budget: int = 2**18
    depth: int | None = None
    roots: int = 2
    max_periodic_degree: int = 1024
    period: int | None = None
    metric: str = "spherical"
    sup_rate_n: int = 8
    use_sup_rate: bool = True
    disagreement: float = 0.05
    transition_margin: float = 0.01
    slope_tol: float = 0.01
    seed: int = 0
    threads: int = 1
    exceptional: bool = True

    def resolved_depth(self, d: int) -> int:
        if self.depth is not None:
            return self.depth
        return int(math.floor(math.log(self.leaf_budget) / math.log(d) + 1e-9))

    def resolved_period(self, d: int) -> int:
        if self.period is not None:
            return self.period
        return int(math.floor(math.log(self.max_periodic_degree) / math.log(d) + 1e-9))


@dataclass
class PressureCurve:
    t: np.ndarray
    P: np.ndarray
    raw: np.ndarray
    unc: np.ndarray
    chi_inf: float
    chi_sup: float
    chi_sources: dict
    source: list
    estimates: dict = field(default_factory=dict, repr=False)
    t_minus: float = float("nan")
    t_plus: float = float("nan")
    t_star: float | None = None
    transition_notes: list = field(default_factory=list)
    hull_shift: float = 0.0
    notes: list = field(default_factory=list)
    exceptional: dict | None = None
    metric: str = "spherical"

    @property
    def lo(self) -> np.ndarray:
        return self.P - self.unc

    @property
    def hi(self) -> np.ndarray:
        return self.P + self.unc

    def value(self, t: float) -> float:
        """Piecewise-linear interpolant of the convexified curve."""
        if t < self.t[0] - 1e-12 or t > self.t[-1] + 1e-12:
            raise OutOfGrid(f"t = {t} outside [{self.t[0]}, {self.t[-1]}]")
        return float(np.interp(t, self.t, self.P))

    def uncertainty(self, t: float) -> float:
        return float(np.interp(t, self.t, self.unc))

    def slopes(self) -> tuple:
        s = np.diff(self.P) / np.diff(self.t)
        left = np.concatenate([[np.nan], s])
        right = np.concatenate([s, [np.nan]])
        return left, right

    def summary(self) -> dict:
        return {
            "chi_inf": self.chi_inf,
            "chi_sup": self.chi_sup,
            "t_minus": self.t_minus,
            "t_plus": self.t_plus,
            "t_star": self.t_star,
            "exceptional": self.exceptional,
        }


# -- estimators ---------------------------------------------------------------

def _tree_increment(levels, a, b):
    # (ln Lambda_b - ln Lambda_a) / (b - a): the additive root bias cancels
    return (levels[b] - levels[a]) / (b - a)


def periodic_pressure(orbits, m: int, t: float) -> float:
    """(1/m) ln sum over repelling p with f^m(p) = p of |(f^m)'(p)|^(-t)."""
    terms = []
    for o in orbits:
        if not o.repelling or m % o.period:
            continue
        # each of the k cycle points has |(f^m)'| = |lambda|^(m/k)
        terms.append(math.log(o.period) - t * (m / o.period) * o.chi * o.period)
    if not terms:
        return -math.inf
    top = max(terms)
    return (top + math.log(math.fsum(math.exp(x - top) for x in terms))) / m


def periodic_orbits_upto(f: MapSpec, m_max: int, max_degree: int) -> dict:
    out = {}
    for m in range(1, m_max + 1):
        if f.degree**m > max_degree:
            break
        out[m] = find_periodic_points(f, m, max_degree=max_degree)
    return out


def _fuse(values):
    vals = np.array([v for v in values if np.isfinite(v)])
    if len(vals) == 0:
        return math.nan, math.inf
    med = float(np.median(vals))
    half = 0.5 * float(vals.max() - vals.min())
    return med, max(half, UNC_FLOOR)


def assemble_pressure(f: MapSpec, t_grid, config: PressureConfig | None = None) -> PressureCurve:
    """Estimate P on ``t_grid`` from tree and periodic-orbit sums, then convexify."""
    cfg = config or PressureConfig()
    t_grid = np.asarray(sorted(float(x) for x in t_grid))
    if len(t_grid) == 0:
        raise ValueError("empty t grid")
    d = f.degree
    notes = []
    n = cfg.resolved_depth(d)
    if d**n > cfg.leaf_budget:
        raise BudgetExceeded(f"{d}^{n} leaves exceed the leaf budget {cfg.leaf_budget}")
    roots = generic_roots(f, cfg.roots, seed=cfg.seed)
    trees = [backward_tree(f, r, n, metric=cfg.metric, seed=cfg.seed) for r in roots]

    m = cfg.resolved_period(d)
    orbits_by_m = periodic_orbits_upto(f, m, cfg.max_periodic_degree) if m >= 1 else {}
    top_orbits = orbits_by_m.get(m, [])

    depth_pairs = [(n // 2, n), ((n - 1) // 2, n - 1)] if n >= 4 else [(0, n)]

    needed = sorted({j for pair in depth_pairs for j in pair})

    def estimate(t):
        est = {}
        for k, tr in enumerate(trees):
            lev = tree_pressure_levels(tr, t, needed)
            for a, b in depth_pairs:
                est[f"tree{k}_n{b}"] = _tree_increment(lev, a, b)
        if top_orbits:
            est[f"periodic_m{m}"] = periodic_pressure(top_orbits, m, t)
        return est

    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as ex:
            per_t = list(ex.map(estimate, t_grid))
    else:
        per_t = [estimate(t) for t in t_grid]

    names = list(per_t[0])
    estimates = {k: np.array([e[k] for e in per_t]) for k in names}
    raw = np.empty(len(t_grid))
    unc = np.empty(len(t_grid))
    source = []
    for i, e in enumerate(per_t):
        raw[i], unc[i] = _fuse(e.values())
        best = min(e, key=lambda k: abs(e[k] - raw[i]))
        source.append(best.split("_")[0].rstrip("0123456789"))
        if 2 * unc[i] > cfg.disagreement:
            msg = f"estimators disagree by {2 * unc[i]:.3g} at t = {t_grid[i]}"
            warnings.warn(msg, EstimatorDisagreement)
            notes.append(msg)

    # exponent extremes
    per_chi = [o.chi for orbs in orbits_by_m.values() for o in orbs if o.repelling]
    chi_sources = {}
    sup_cands, inf_cands = [], []
    if per_chi:
        chi_sources["periodic"] = (min(per_chi), max(per_chi))
        sup_cands.append(max(per_chi))
        inf_cands.append(min(per_chi))
    rates = [extremal_derivative_rates(tr) for tr in trees]
    # min rate as an increment between depths, cancelling the root bias
    inc_min = []
    for tr in trees:
        if tr.depth >= 4:
            h = tr.depth // 2
            lo_n = np.min(tr.log_deriv[tr.depth][np.isfinite(tr.log_deriv[tr.depth])])
            lo_h = np.min(tr.log_deriv[h][np.isfinite(tr.log_deriv[h])])
            inc_min.append(float(lo_n - lo_h) / (tr.depth - h))
    chi_sources["tree"] = (min(r[0] for r in rates), max(r[1] for r in rates))
    if inc_min:
        chi_sources["tree_increment_min"] = min(inc_min)
        inf_cands.append(min(inc_min))
    if cfg.use_sup_rate and cfg.sup_rate_n >= 2:
        s_full = sup_derivative_rate(f, cfg.sup_rate_n)
        s_half = sup_derivative_rate(f, cfg.sup_rate_n // 2)
        h = cfg.sup_rate_n // 2
        s_inc = (cfg.sup_rate_n * s_full - h * s_half) / (cfg.sup_rate_n - h)
        chi_sources["sup_rate"] = s_full
        chi_sources["sup_rate_increment"] = s_inc
        sup_cands.append(s_inc)
    chi_sup = max(sup_cands) if sup_cands else chi_sources["tree"][1]
    chi_inf = min(inf_cands) if inf_cands else chi_sources["tree"][0]

    P, shift = convexify(t_grid, raw, unc)
    curve = PressureCurve(t_grid, P, raw, unc, chi_inf, chi_sup, chi_sources, source,
                          estimates=estimates, hull_shift=shift, notes=notes, metric=cfg.metric)
    curve.notes.append("tree-pressure depth increments are a heuristic convergence check")
    # a two-phase log-sum overshoots its max by up to ln 2 / m at the crossing;
    # the estimators share that bias, so their spread does not show it
    margin = max(cfg.transition_margin, math.log(2) / m if m >= 1 else 0.0)
    curve.notes.append(f"transition margin {margin!r}")
    tm, tp, tnotes = transition_points(curve, margin, cfg.slope_tol)
    curve.t_minus, curve.t_plus = tm, tp
    curve.transition_notes = tnotes
    try:
        curve.t_star = first_zero(curve)
    except NoZeroInGrid as exc:
        curve.notes.append(str(exc))
    if cfg.exceptional:
        curve.exceptional = detect_exceptional(f).to_json()
    return curve


# -- convexification -------------------------------------------------------------

def _lower_hull(t, y):
    hull = []
    for i in range(len(t)):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            # drop b if it lies on or above the chord a -> i
            if (y[b] - y[a]) * (t[i] - t[a]) >= (y[i] - y[a]) * (t[b] - t[a]):
                hull.pop()
            else:
                break
        hull.append(i)
    return hull


def convexify(t, values, unc=None) -> tuple:
    """Greatest convex non-increasing minorant-fit of the samples on the grid.

    Returns the projected values and the largest displacement applied.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(values, dtype=float)
    if len(t) <= 2:
        out = np.minimum.accumulate(y)
        return out, float(np.max(np.abs(out - y))) if len(y) else 0.0
    hull = _lower_hull(t, y)
    out = np.interp(t, t[hull], y[hull])
    out = np.minimum.accumulate(out)
    shift = float(np.max(np.abs(out - y)))
    return out, shift


# -- readouts ------------------------------------------------------------------

def pressure_derivative(curve: PressureCurve, t: float) -> tuple:
    """One-sided secant slopes of the convexified curve at ``t``."""
    tg = curve.t
    if not (tg[0] < t < tg[-1]):
        raise OutOfGrid(f"t = {t} is not interior to the grid")
    i = int(np.searchsorted(tg, t))
    if abs(tg[i] - t) <= 1e-12:
        left = (curve.P[i] - curve.P[i - 1]) / (tg[i] - tg[i - 1])
        right = (curve.P[i + 1] - curve.P[i]) / (tg[i + 1] - tg[i])
        return float(left), float(right)
    s = (curve.P[i] - curve.P[i - 1]) / (tg[i] - tg[i - 1])
    return float(s), float(s)


def _cross(t, g, level, a, b):
    # first crossing of g = level between grid indices a < b (linear interpolant)
    ga, gb = g[a] - level[a], g[b] - level[b]
    if ga == gb:
        return float(t[a])
    return float(t[a] + (t[b] - t[a]) * ga / (ga - gb))


def transition_points(curve: PressureCurve, margin: float = 0.01, slope_tol: float = 0.01) -> tuple:
    """(t_minus, t_plus) with notes; nan means undetermined beyond the grid."""
    t, P = curve.t, curve.P
    delta = curve.unc + margin
    notes = []
    left, right = curve.slopes()

    # t_minus: left end of the run where P + t chi_sup > delta up to the right edge
    g = P + t * curve.chi_sup
    ok = g > delta
    if not ok[-1]:
        t_minus = math.nan
        notes.append("P + t chi_sup does not exceed the margin at the right edge")
    else:
        j = len(t) - 1
        while j > 0 and ok[j - 1]:
            j -= 1
        if j > 0:
            t_minus = _cross(t, g, delta, j - 1, j)
        else:
            edge_slope = right[0] if len(t) > 1 else math.nan
            if abs(edge_slope + curve.chi_sup) <= slope_tol + 2 * curve.unc[0] / (t[1] - t[0]):
                t_minus = -math.inf
            else:
                t_minus = math.nan
                notes.append("t_minus undetermined beyond grid (edge slope differs from -chi_sup)")

    # t_plus: right end of the run where P + t chi_inf > delta from the left edge
    h = P + t * curve.chi_inf
    ok = h > delta
    if not ok[0]:
        t_plus = math.nan
        notes.append("P + t chi_inf does not exceed the margin at the left edge")
    else:
        j = 0
        while j < len(t) - 1 and ok[j + 1]:
            j += 1
        if j < len(t) - 1:
            t_plus = _cross(t, h, delta, j, j + 1)
        else:
            edge_slope = left[-1] if len(t) > 1 else math.nan
            if abs(edge_slope + curve.chi_inf) <= slope_tol + 2 * curve.unc[-1] / (t[-1] - t[-2]):
                t_plus = math.inf
            else:
                t_plus = math.nan
                notes.append("t_plus undetermined beyond grid (edge slope differs from -chi_inf)")
    return t_minus, t_plus, notes


def first_zero(curve: PressureCurve) -> float:
    """First zero of the convexified curve (linear interpolation on the bracket)."""
    t, P = curve.t, curve.P
    if P[0] < 0:
        raise NoZeroInGrid("P < 0 at the left edge of the grid")
    idx = np.flatnonzero(P <= 0)
    if len(idx) == 0:
        raise NoZeroInGrid("P > 0 on the whole grid")
    j = int(idx[0])
    if P[j] == 0 or j == 0:
        return float(t[j])
    a, b = j - 1, j
    # bisection on the affine piece between the bracketing grid points
    lo, hi = float(t[a]), float(t[b])
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.interp(mid, t, P) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-14:
            break
    return 0.5 * (lo + hi)


def asymptote_check(curve: PressureCurve, tol: float = 0.05) -> dict:
    """Residuals of P against max(-t chi_sup, -t chi_inf) outside (t_minus, t_plus)."""
    rows = []
    finite = [x for x in (curve.t_minus, curve.t_plus) if np.isfinite(x)]
    if not finite:
        return {"vacuous": True, "passed": True, "rows": rows}
    for t, p, u in zip(curve.t, curve.P, curve.unc):
        outside = (np.isfinite(curve.t_minus) and t < curve.t_minus) or (
            np.isfinite(curve.t_plus) and t > curve.t_plus)
        if not outside:
            continue
        ref = max(-t * curve.chi_sup, -t * curve.chi_inf)
        res = abs(p - ref)
        rows.append({"t": float(t), "P": float(p), "reference": ref, "residual": res,
                     "passed": bool(res <= tol + u)})
    return {"vacuous": False, "passed": all(r["passed"] for r in rows), "rows": rows}


def second_difference(curve: PressureCurve, t: float, h: float, raw: bool = False) -> float:
    """(P(t-h) - 2P(t) + P(t+h)) / h^2 on the convexified (or raw) curve."""
    if t - h < curve.t[0] - 1e-12 or t + h > curve.t[-1] + 1e-12:
        raise OutOfGrid(f"[{t - h}, {t + h}] leaves the grid")
    y = curve.raw if raw else curve.P
    vals = [float(np.interp(s, curve.t, y)) for s in (t - h, t, t + h)]
    return (vals[0] - 2 * vals[1] + vals[2]) / (h * h)


def second_difference_uncertainty(curve: PressureCurve, t: float, h: float) -> float:
    u = [curve.uncertainty(s) for s in (t - h, t, t + h)]
    return (u[0] + 2 * u[1] + u[2]) / (h * h)


def check_shape(curve: PressureCurve, tol: float = 1e-9, lip_tol: float = 0.05) -> dict:
    """Convexity, monotonicity and Lipschitz checks on an emitted curve."""
    s = np.diff(curve.P) / np.diff(curve.t)
    d2 = np.diff(s)
    return {
        "convex": bool(np.all(d2 >= -tol)),
        "monotone": bool(np.all(np.diff(curve.P) <= tol)),
        "lipschitz": bool(np.all(np.abs(s) <= curve.chi_sup + lip_tol)),
    }


# -- output -----------------------------------------------------------------------

def fmt(x) -> str:
    """Shortest round-trip decimal for floats; empty for missing values."""
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return ""
    return repr(x)


def write_csv(curve: PressureCurve, path) -> None:
    left, right = curve.slopes()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "P", "P_lo", "P_hi", "slope_left", "slope_right", "source"])
        for i in range(len(curve.t)):
            w.writerow([fmt(curve.t[i]), fmt(curve.P[i]), fmt(curve.lo[i]), fmt(curve.hi[i]),
                        fmt(left[i]), fmt(right[i]), curve.source[i]])


def _json_float(x):
    if x is None:
        return None
    x = float(x)
    if math.isnan(x):
        return None
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def summary_json(curve: PressureCurve) -> str:
    s = curve.summary()
    s = {k: (_json_float(v) if k != "exceptional" else v) for k, v in s.items()}
    return json.dumps(s, indent=2, sort_keys=True)
