"""Backward-orbit trees and the tree-pressure estimator.

A tree rooted at ``z0`` stores, level by level, the iterated preimages of
``z0`` together with ``ln |(f^j)'(w)|`` accumulated along the forward path
from ``w`` back to the root. Levels are kept as flat numpy arrays; node ``i``
of level ``j`` has parent ``parent[j][i]`` in level ``j - 1``.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import roots as _roots
from .errors import BudgetExceeded, SampledTreeUnsupported
from .maps import (
    CPoint,
    MapSpec,
    as_cpoint,
    derivative_array,
    escape_radius,
    evaluate_array,
    find_periodic_points,
    preimage_leaves,
    preimages,
)

NODE_BUDGET = 10**7
# per-step derivative below this is treated as a critical collision
CRIT_EPS = 1e-12

__all__ = [
    "BackTree",
    "backward_tree",
    "preimages",
    "tree_pressure_estimate",
    "tree_pressure_levels",
    "extremal_derivative_rates",
    "sup_derivative_rate",
    "generic_roots",
]


@dataclass
class BackTree:
    """Enumerated (``exact``) or sampled backward-orbit tree."""

    root: CPoint
    depth: int
    mode: str
    metric: str
    paths: int | None
    points: list = field(repr=False)
    parent: list = field(repr=False)
    choice: list = field(repr=False)
    step_log: list = field(repr=False)
    log_deriv: list = field(repr=False)
    weight: list = field(repr=False)
    degree: int = 2
    degenerate: int = 0

    def level_size(self, j: int) -> int:
        return len(self.points[j])

    @property
    def leaves(self) -> np.ndarray:
        return self.points[self.depth]

    @property
    def leaf_log_deriv(self) -> np.ndarray:
        return self.log_deriv[self.depth]

    def weighted_count(self, j: int | None = None) -> float:
        j = self.depth if j is None else j
        return math.fsum(self.weight[j])

    def branch_word(self, j: int, i: int) -> list:
        word = []
        while j > 0:
            word.append(int(self.choice[j][i]))
            i = int(self.parent[j][i])
            j -= 1
        return word[::-1]

    def write_jsonl(self, path) -> None:
        """One node per line: level, branch word, point, log-derivative."""
        with open(Path(path), "w", encoding="utf-8") as fh:
            for j in range(self.depth + 1):
                for i, z in enumerate(self.points[j]):
                    pt = "inf" if not np.isfinite(z) else [z.real, z.imag]
                    rec = {
                        "level": j,
                        "word": self.branch_word(j, i),
                        "point": pt,
                        "log_deriv": float(self.log_deriv[j][i]),
                    }
                    fh.write(json.dumps(rec) + "\n")


def _level_preimages(f: MapSpec, level: np.ndarray) -> np.ndarray:
    """(len(level), d) array of preimages, with multiplicity."""
    d = f.degree
    if f.is_polynomial and np.all(np.isfinite(level)):
        P, _ = f.homogeneous()
        coeffs = np.tile(P, (len(level), 1))
        coeffs[:, 0] -= level
        return _roots.polyroots_batch(coeffs)
    out = np.empty((len(level), d), dtype=complex)
    for i, z in enumerate(level):
        row = []
        for w, m in preimages(f, CPoint.from_complex(z)):
            row.extend([w.value] * m)
        out[i] = row[:d]
    return out


def backward_tree(f: MapSpec, z0, depth: int, mode: str = "exact", metric: str = "spherical",
                  paths: int = 1000, seed: int = 0, budget: int = NODE_BUDGET) -> BackTree:
    """Build the depth-``depth`` backward tree of ``z0``.

    ``mode="sampled"`` follows ``paths`` independent uniform backward walks,
    each leaf weighted ``d**depth / paths`` so weighted sums are unbiased.
    """
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    z0 = as_cpoint(z0)
    d = f.degree
    if mode == "exact":
        if d ** depth > budget:
            raise BudgetExceeded(f"{d}^{depth} leaves exceed the node budget {budget}")
    elif mode == "sampled":
        if paths < 1:
            raise ValueError("sampled mode needs at least one path")
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if metric == "euclidean" and not f.is_polynomial:
        warnings.warn("euclidean metric on a rational map; points near poles are unreliable")

    root = np.array([z0.value], dtype=complex)
    points, parent, choice = [root], [np.zeros(1, dtype=np.int64)], [np.zeros(1, dtype=np.int64)]
    step_log, log_deriv = [np.zeros(1)], [np.zeros(1)]
    weight = [np.ones(1)]
    rng = np.random.Generator(np.random.Philox(seed))
    degenerate = 0

    if mode == "sampled":
        cur = np.repeat(root, paths)
        acc = np.zeros(paths)
    for j in range(1, depth + 1):
        if mode == "exact":
            pre = _level_preimages(f, points[-1])
            n_par = len(points[-1])
            pts = pre.ravel()
            par = np.repeat(np.arange(n_par), d)
            ch = np.tile(np.arange(d), n_par)
            prev_acc = log_deriv[-1][par]
            w = np.ones(len(pts))
        else:
            pre = _level_preimages(f, cur)
            ch = rng.integers(0, d, size=paths)
            pts = pre[np.arange(paths), ch]
            par = np.arange(paths)
            prev_acc = acc
            w = np.full(paths, float(d) ** j / paths)
        with np.errstate(divide="ignore"):
            dv = derivative_array(f, pts, metric)
            sl = np.log(dv)
        bad = dv <= CRIT_EPS
        degenerate += int(bad.sum())
        acc = prev_acc + sl
        points.append(pts)
        parent.append(par)
        choice.append(ch)
        step_log.append(sl)
        log_deriv.append(acc)
        weight.append(w)
        if mode == "sampled":
            cur = pts
    if degenerate:
        warnings.warn(f"{degenerate} tree nodes sit on critical points (zero derivative)")
    return BackTree(z0, depth, mode, metric, paths if mode == "sampled" else None,
                    points, parent, choice, step_log, log_deriv, weight, d, degenerate)


def _log_partition(log_w, log_deriv, t):
    """ln sum w * exp(-t * log_deriv) with degenerate (-inf) entries handled.

    Zero-derivative leaves would contribute +inf for t > 0; they are dropped
    there, count once at t = 0 and vanish for t < 0.
    """
    fin = np.isfinite(log_deriv)
    if t == 0:
        expo = log_w.copy()
    else:
        expo = np.where(fin, log_w - t * np.where(fin, log_deriv, 0.0), -np.inf)
    if not np.any(np.isfinite(expo)):
        return -math.inf
    m = float(np.max(expo))
    return m + math.log(math.fsum(np.exp(expo - m)))


def tree_pressure_levels(tree: BackTree, t: float, levels=None) -> np.ndarray:
    """ln Lambda_j(z0, t) for j = 0..depth (others nan when ``levels`` is given)."""
    out = np.full(tree.depth + 1, np.nan)
    for j in range(tree.depth + 1) if levels is None else levels:
        out[j] = _log_partition(np.log(tree.weight[j]), tree.log_deriv[j], t)
    return out


def tree_pressure_estimate(tree: BackTree, t: float, level: int | None = None) -> float:
    """(1/n) ln sum over leaves of weight * |(f^n)'(w)|^(-t)."""
    n = tree.depth if level is None else level
    if n < 1:
        raise ValueError("tree pressure needs depth >= 1")
    return _log_partition(np.log(tree.weight[n]), tree.log_deriv[n], t) / n


def extremal_derivative_rates(tree: BackTree) -> tuple:
    """(min, max) over leaves of (1/n) ln |(f^n)'(w)|."""
    if tree.mode != "exact":
        raise SampledTreeUnsupported("extremal rates need a fully enumerated tree")
    ld = tree.leaf_log_deriv
    ld = ld[np.isfinite(ld)]
    n = tree.depth
    return float(ld.min()) / n, float(ld.max()) / n


def _orbit_log_deriv(f, z, n):
    acc = np.zeros(np.shape(z))
    with np.errstate(all="ignore"):
        for _ in range(n):
            acc = acc + np.log(derivative_array(f, z, "spherical"))
            z = evaluate_array(f, z)
    return np.where(np.isfinite(acc), acc, -np.inf)


def _sphere_point(theta, phi):
    # theta in [0, pi] measured from the south pole (z = 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.tan(np.asarray(theta) / 2.0)
    return r * np.exp(1j * np.asarray(phi))


def _cycle_seeds(f, max_period):
    out = []
    for m in range(1, max_period + 1):
        if f.degree ** m > 64:
            break
        for orb in find_periodic_points(f, m):
            out.extend(p.value for p in orb.points if not p.is_infinity)
    return out


def sup_derivative_rate(f: MapSpec, n: int, grid_size: int = 128, starts: int = 8,
                        sweeps: int = 60, periodic_period: int = 3) -> float:
    """(1/n) ln sup_z |(f^n)'(z)| in the spherical metric.

    Coarse search over a (theta, phi) grid, then coordinate ascent with
    shrinking steps from the best few grid cells. Low-period periodic
    points are added as extra starts: near a strongly repelling cycle the
    peak is narrower than any affordable grid.
    """
    th = (np.arange(grid_size) + 0.5) * np.pi / grid_size
    ph = np.arange(2 * grid_size) * np.pi / grid_size
    T, PH = np.meshgrid(th, ph, indexing="ij")
    vals = _orbit_log_deriv(f, _sphere_point(T, PH), n)
    flat = np.argsort(vals.ravel())[::-1][:starts]
    best = float(vals.ravel()[flat[0]])
    seeds = [(T.ravel()[i], PH.ravel()[i]) for i in flat]
    for z in _cycle_seeds(f, periodic_period):
        seeds.append((2 * np.arctan(abs(z)), float(np.angle(z))))

    seeds = np.array(seeds)
    a, b = seeds[:, 0].copy(), seeds[:, 1].copy()
    cur = _orbit_log_deriv(f, _sphere_point(a, b), n)
    step = np.full(len(a), np.pi / grid_size)
    moves = np.array([(1, 0), (-1, 0), (0, 1), (0, -1)], dtype=float)
    for _ in range(sweeps * 8):
        if np.all(step < 1e-13):
            break
        na = np.clip(a[:, None] + moves[None, :, 0] * step[:, None], 0.0, np.pi)
        nb = b[:, None] + moves[None, :, 1] * step[:, None]
        vals = _orbit_log_deriv(f, _sphere_point(na, nb), n)
        k = np.argmax(vals, axis=1)
        top = vals[np.arange(len(a)), k]
        better = top > cur
        a = np.where(better, na[np.arange(len(a)), k], a)
        b = np.where(better, nb[np.arange(len(a)), k], b)
        cur = np.where(better, top, cur)
        step = np.where(better, step, step / 2)
    best = max(best, float(np.max(cur)))
    return best / n


def generic_roots(f: MapSpec, count: int = 2, depth: int = 8, seed: int = 0) -> list:
    """Root points for tree estimators, taken near J(f) as deep preimages.

    Preimages of a non-exceptional point accumulate on J(f), so these roots
    avoid the boundary bias a root far from J would add at finite depth.
    """
    R = escape_radius(f) if f.is_polynomial else 1.0
    base = complex(0.31 * R, 0.17 * R)
    d = f.degree
    k = max(1, min(depth, int(math.log(4096, d))))
    if f.is_polynomial:
        leaves = preimage_leaves(f, base, k)
    else:
        leaves = np.array([base])
        for _ in range(min(k, 6)):
            leaves = _level_preimages(f, leaves).ravel()
        leaves = leaves[np.isfinite(leaves)]
    rng = np.random.default_rng(seed)
    # avoid the real axis and other symmetric spots by random choice
    pick = rng.choice(len(leaves), size=min(count, len(leaves)), replace=False)
    return [CPoint.from_complex(leaves[i]) for i in sorted(pick)]
