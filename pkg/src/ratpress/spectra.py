"""Legendre-transform spectra read off a convexified pressure curve."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import EmptyInterval, OutOfGrid
from .pressure import PressureCurve, fmt

EDGE_SLOPE_TOL = 0.02


@dataclass
class SpectrumSample:
    abscissa: float
    value: float
    minimizer_t: float | None
    tag: str
    note: str = ""


def _hypothesis_note(curve: PressureCurve) -> str:
    ex = curve.exceptional or {}
    if ex.get("mode") == "equality" and ex.get("meets_julia"):
        return "formula hypotheses not met (exceptional set meets J)"
    return ""


def _is_affine(curve: PressureCurve, tol: float = 1e-6):
    s = np.diff(curve.P) / np.diff(curve.t)
    if np.max(s) - np.min(s) <= tol:
        return float(np.mean(s))
    return None


def _inf_on(t, y, slope_tol):
    """Discrete minimum of y on the grid t with a bounded refinement.

    Returns (value, argmin, tag); raises OutOfGrid when the minimiser sits
    on a grid edge without a flat edge slope certifying the one-sided limit.
    """
    i = int(np.argmin(y))
    val, arg = float(y[i]), float(t[i])
    if 0 < i < len(t) - 1:
        res = minimize_scalar(lambda s: float(np.interp(s, t, y)),
                              bounds=(t[i - 1], t[i + 1]), method="bounded")
        if res.fun < val:
            val, arg = float(res.fun), float(res.x)
        return val, arg, "interior"
    if len(t) < 2:
        return val, arg, "boundary"
    edge_slope = (y[1] - y[0]) / (t[1] - t[0]) if i == 0 else (y[-1] - y[-2]) / (t[-1] - t[-2])
    if abs(edge_slope) <= slope_tol:
        return val, arg, "boundary"
    raise OutOfGrid(f"minimiser escapes the grid at t = {arg} (edge slope {edge_slope:.3g})")


def lyapunov_spectrum(curve: PressureCurve, alpha: float,
                      slope_tol: float = EDGE_SLOPE_TOL) -> SpectrumSample:
    """L(alpha) = (1/alpha) inf_t (P(t) + alpha t)."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    note = _hypothesis_note(curve)
    aff = _is_affine(curve)
    if aff is not None and abs(alpha + aff) > 1e-6:
        return SpectrumSample(alpha, -math.inf, None, "degenerate",
                              "affine pressure: infimum is -inf away from the single slope")
    y = curve.P + alpha * curve.t
    val, arg, tag = _inf_on(curve.t, y, slope_tol)
    return SpectrumSample(alpha, val / alpha, arg, tag, note)


def dimension_spectrum(curve: PressureCurve, alpha: float, d: int,
                       slope_tol: float = EDGE_SLOPE_TOL) -> SpectrumSample:
    """D(alpha) = inf over t <= 0 of t + alpha P(t) / ln d (polynomial, connected J)."""
    if alpha > 1:
        raise ValueError("alpha must be <= 1")
    mask = curve.t <= 1e-12
    if mask.sum() < 1:
        raise OutOfGrid("grid has no t <= 0")
    t = curve.t[mask]
    y = t + alpha * curve.P[mask] / math.log(d)
    i = int(np.argmin(y))
    if i == len(t) - 1:
        # the constraint t <= 0 is active: a genuine endpoint, not a grid edge
        val, arg, tag = float(y[i]), float(t[i]), "interior"
    else:
        val, arg, tag = _inf_on(t, y, slope_tol)
    return SpectrumSample(alpha, val, arg, tag, _hypothesis_note(curve) or "connected J asserted by caller")


def integral_means_spectrum(curve: PressureCurve, t: float, d: int) -> float:
    """beta(t) = P(t) / ln d + t - 1."""
    return curve.value(t) / math.log(d) + t - 1


def chi_star_range(curve: PressureCurve, guard: float = 0.5, tol: float | None = None) -> dict:
    """Range of -P' over grid points inside (t_minus, t_plus).

    Points within ``guard`` of a finite transition are skipped: finite-depth
    estimators round the kink off over a band of that width.
    """
    lo = curve.t_minus if not math.isnan(curve.t_minus) else -math.inf
    hi = curve.t_plus if not math.isnan(curve.t_plus) else math.inf
    left, right = curve.slopes()
    vals, used = [], []
    for i in range(1, len(curve.t) - 1):
        t = curve.t[i]
        if not (lo < t < hi):
            continue
        if (np.isfinite(lo) and t - lo < guard) or (np.isfinite(hi) and hi - t < guard):
            continue
        vals.extend([-left[i], -right[i]])
        used.extend([i - 1, i, i + 1])
    if not vals:
        raise EmptyInterval("no interior grid points in (t_minus, t_plus)")
    h = float(np.min(np.diff(curve.t)))
    if tol is None:
        tol = 4 * float(np.max(curve.unc[used])) / h + 1e-9
    cmin, cmax = float(min(vals)), float(max(vals))
    notes = []
    if np.isfinite(lo) or np.isfinite(hi):
        notes.append(f"kink guard band {guard} around finite transitions")
    return {"chi_star_inf": cmin, "chi_star_sup": cmax, "tolerance": tol,
            "degenerate": bool(cmax - cmin <= tol), "notes": notes}


def _conjugate(x, y, slopes):
    # y*(a) = max_i (a x_i - y_i)
    return np.max(slopes[:, None] * x[None, :] - y[None, :], axis=1)


def legendre_pair_check(curve: PressureCurve, tol: float | None = None) -> dict:
    """Double conjugation of s -> P(-s) and the alpha L(alpha) identity."""
    s = -curve.t[::-1]
    q = curve.P[::-1]
    sl = np.diff(q) / np.diff(s)
    alphas = np.concatenate([[sl[0]], sl, [sl[-1]]])
    q_star = _conjugate(s, q, alphas)
    q_dd = np.max(alphas[None, :] * s[:, None] - q_star[None, :], axis=1)
    h = float(np.max(np.diff(curve.t)))
    if tol is None:
        tol = 2 * (float(np.max(curve.unc)) + 1e-10)
    dc_res = float(np.max(np.abs(q_dd - q)))

    # alpha L(alpha) = P(t) + alpha t at alpha = -right slope(t)
    id_res = 0.0
    _, right = curve.slopes()
    for i in range(len(curve.t) - 1):
        a = -right[i]
        if a <= 0:
            continue
        y = curve.P + a * curve.t
        id_res = max(id_res, abs(float(np.min(y)) - float(y[i])))
    return {
        "double_conjugate_residual": dc_res,
        "identity_residual": id_res,
        "tolerance": tol,
        "grid_step": h,
        "passed": bool(dc_res <= tol and id_res <= tol),
    }


def write_csv(samples, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["abscissa", "value", "minimizer_t", "tag"])
        for smp in samples:
            w.writerow([fmt(smp.abscissa), fmt(smp.value) if np.isfinite(smp.value) else repr(smp.value),
                        fmt(smp.minimizer_t), smp.tag])
