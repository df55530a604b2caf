"""Gibbs-weighted preimage ensembles and level-1 large deviations."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .backward import backward_tree, generic_roots
from .errors import SlopeUnattainable, StrictConvexityRequired
from .maps import CPoint, MapSpec, as_cpoint
from .pressure import PressureCurve, second_difference, second_difference_uncertainty
from .spectra import chi_star_range


@dataclass
class WeightedEnsemble:
    x0: CPoint
    t0: float
    n: int
    points: np.ndarray
    log_weights: np.ndarray
    birkhoff: np.ndarray
    degree: int
    dropped: int = 0

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def __len__(self):
        return len(self.points)


def _lse(x):
    m = float(np.max(x))
    return m + math.log(math.fsum(np.exp(x - m)))


def omega_ensemble(f: MapSpec, x0=None, t0: float = 0.0, n: int = 10, mode: str = "exact",
                   metric: str = "spherical", paths: int = 1000, seed: int = 0) -> WeightedEnsemble:
    """Preimages of ``x0`` at depth ``n`` weighted by |(f^n)'|^(-t0), normalised."""
    if x0 is None:
        x0 = generic_roots(f, 1, seed=seed)[0]
    x0 = as_cpoint(x0)
    tree = backward_tree(f, x0, n, mode=mode, metric=metric, paths=paths, seed=seed)
    ld = tree.leaf_log_deriv
    keep = np.isfinite(ld)
    dropped = int((~keep).sum())
    if dropped:
        warnings.warn(f"{dropped} preimages with zero derivative dropped from the ensemble")
    ld = ld[keep]
    logw = np.log(tree.weight[n][keep]) - t0 * ld
    logw = logw - _lse(logw)
    return WeightedEnsemble(x0, float(t0), n, tree.leaves[keep], logw, ld / n, f.degree, dropped)


def ensemble_mean_log_derivative(ens: WeightedEnsemble) -> float:
    """Sum of weights times Birkhoff averages of ln |f'|."""
    return math.fsum(ens.weights * ens.birkhoff)


def ensemble_mgf_rate(ens: WeightedEnsemble, s: float) -> float:
    """(1/n) ln sum w_x |(f^n)'(x)|^s."""
    if s == 0:
        return 0.0
    return _lse(ens.log_weights + s * ens.n * ens.birkhoff) / ens.n


def mgf_rate(f: MapSpec, x0, t0: float, s: float, n: int, **kw) -> float:
    return ensemble_mgf_rate(omega_ensemble(f, x0, t0, n, **kw), s)


def tail_probability(ens: WeightedEnsemble, threshold: float, side: str = "upper") -> float:
    """omega_n mass of {Birkhoff average > threshold} (upper) or {< threshold} (lower)."""
    if side == "upper":
        sel = ens.birkhoff > threshold
    elif side == "lower":
        sel = ens.birkhoff < threshold
    else:
        raise ValueError(f"side must be 'upper' or 'lower', not {side!r}")
    if not sel.any():
        return 0.0
    return min(1.0, math.exp(_lse(ens.log_weights[sel])))


# -- rate function --------------------------------------------------------------

def _slope_function(curve):
    # secant slopes placed at interval midpoints, linear in between: monotone
    mids = 0.5 * (curve.t[1:] + curve.t[:-1])
    sl = np.diff(curve.P) / np.diff(curve.t)
    return mids, np.maximum.accumulate(sl)


def _integral(mids, sl, a, b):
    """Integral of the interpolated slope from a to b."""
    xs = np.linspace(a, b, 2049)
    return float(np.trapezoid(np.interp(xs, mids, sl), xs))


def strictly_convex_at(curve: PressureCurve, t0: float, h: float | None = None) -> bool:
    if h is None:
        h = max(0.25, 2 * float(np.max(np.diff(curve.t))))
    h = min(h, t0 - curve.t[0], curve.t[-1] - t0)
    if h <= 0:
        return False
    return second_difference(curve, t0, h) > 2 * second_difference_uncertainty(curve, t0, h)


def attainable_range(curve: PressureCurve, t0: float, side: str) -> float:
    """Upper end of the epsilon range for which t(epsilon) exists."""
    cs = chi_star_range(curve)
    mids, sl = _slope_function(curve)
    s0 = float(np.interp(t0, mids, sl))
    if side == "upper":
        return cs["chi_star_sup"] + s0
    return -s0 - cs["chi_star_inf"]


def rate_function(curve: PressureCurve, t0: float, epsilon: float, side: str = "upper") -> float:
    """P(t_e) - P(t0) - (t_e - t0) P'(t_e) with P'(t_e) = P'(t0) -/+ epsilon.

    ``side="upper"`` solves on t < t0 (slope decreased by epsilon),
    ``side="lower"`` on t > t0.
    """
    if side not in ("upper", "lower"):
        raise ValueError(f"side must be 'upper' or 'lower', not {side!r}")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    lo_t = curve.t_minus if not math.isnan(curve.t_minus) else curve.t[0]
    hi_t = curve.t_plus if not math.isnan(curve.t_plus) else curve.t[-1]
    if not (lo_t < t0 < hi_t):
        raise StrictConvexityRequired(f"t0 = {t0} is outside the analytic phase ({lo_t}, {hi_t})")
    if not strictly_convex_at(curve, t0):
        raise SlopeUnattainable(f"pressure is affine near t0 = {t0}; no t(epsilon) exists")
    top = attainable_range(curve, t0, side)
    if not (0 < epsilon < top):
        raise SlopeUnattainable(f"epsilon = {epsilon} outside the attainable range (0, {top:.6g})")
    mids, sl = _slope_function(curve)
    s0 = float(np.interp(t0, mids, sl))
    target = s0 - epsilon if side == "upper" else s0 + epsilon
    lo, hi = (float(mids[0]), t0) if side == "upper" else (t0, float(mids[-1]))
    if not (np.interp(lo, mids, sl) <= target <= np.interp(hi, mids, sl)):
        raise SlopeUnattainable(f"slope {target:.6g} not reached on the grid")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.interp(mid, mids, sl) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13:
            break
    te = 0.5 * (lo + hi)
    # P(te) - P(t0) as the integral of the same slope function keeps the
    # expression monotone in epsilon
    dP = _integral(mids, sl, t0, te)
    return dP - (te - t0) * float(np.interp(te, mids, sl))
