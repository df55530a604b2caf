"""Aberth-Ehrlich simultaneous root finding.

Three entry points share one iteration:

* :func:`polyroots` for a single polynomial given by coefficients,
* :func:`polyroots_batch` for many polynomials of the same degree at once
  (used for preimages of whole tree levels),
* :func:`implicit_roots` for a polynomial known only through its Newton
  ratio ``g/g'`` (used for ``f^m(z) - z`` without expanding ``f^m``).

Coefficients are always ascending in degree.
"""
from __future__ import annotations

import numpy as np

from .errors import RootSolverFailure

TOL = 1e-12
MAX_ITER = 200
CLUSTER_RADIUS = 1e-8


def horner(coeffs, z):
    """Value and derivative of an ascending-coefficient polynomial.

    ``coeffs`` may be 1-d (shared) or have a leading batch axis matching
    ``z``'s leading axis.
    """
    coeffs = np.asarray(coeffs)
    z = np.asarray(z)
    if coeffs.ndim == 1:
        p = np.full(z.shape, coeffs[-1], dtype=complex)
        dp = np.zeros(z.shape, dtype=complex)
        for a in coeffs[-2::-1]:
            dp = dp * z + p
            p = p * z + a
        return p, dp
    extra = (slice(None),) + (None,) * (z.ndim - 1)
    p = np.broadcast_to(coeffs[:, -1][extra], z.shape).astype(complex)
    dp = np.zeros(z.shape, dtype=complex)
    for k in range(coeffs.shape[1] - 2, -1, -1):
        dp = dp * z + p
        p = p * z + coeffs[:, k][extra]
    return p, dp


def _root_radius(coeffs):
    # Fujiwara bound on root moduli
    coeffs = np.asarray(coeffs)
    lead = coeffs[..., -1]
    n = coeffs.shape[-1] - 1
    ks = np.arange(n)
    ratios = np.abs(coeffs[..., :n] / lead[..., None]) ** (1.0 / (n - ks))
    ratios[..., 0] /= 2.0 ** (1.0 / n)
    return 2.0 * ratios.max(axis=-1)


def _initial(radius, n, rng, batch_shape=()):
    phase = rng.uniform(0, 2 * np.pi, size=batch_shape + (1,))
    ang = 2 * np.pi * np.arange(n) / n + 0.4 + phase
    r = np.asarray(radius)[..., None] if np.ndim(radius) else radius
    # slight radial jitter breaks symmetric stalls
    jitter = 1.0 + 0.01 * rng.uniform(-1, 1, size=batch_shape + (n,))
    return r * 0.8 * jitter * np.exp(1j * ang)


def _aberth_sums(z, active=None, chunk=512):
    """sum_{j != i} 1/(z_i - z_j) along the last axis."""
    n = z.shape[-1]
    if z.ndim == 1 and n > chunk:
        out = np.empty(n, dtype=complex)
        idx = np.arange(n) if active is None else np.flatnonzero(active)
        for s in range(0, len(idx), chunk):
            rows = idx[s:s + chunk]
            diff = z[rows, None] - z[None, :]
            diff[np.arange(len(rows)), rows] = np.inf
            out[rows] = (1.0 / diff).sum(axis=1)
        return out
    diff = z[..., :, None] - z[..., None, :]
    eye = np.eye(n, dtype=bool)
    diff[..., eye] = np.inf
    return (1.0 / diff).sum(axis=-1)


def _iterate(z, ratio_fn, tol, max_iter):
    active = np.ones(z.shape, dtype=bool)
    for _ in range(max_iter):
        r = ratio_fn(z)
        s = _aberth_sums(z, active if z.ndim == 1 else None)
        w = r / (1.0 - r * s)
        w = np.where(np.isfinite(w), w, 0.0)
        w = np.where(active, w, 0.0)
        z = z - w
        done = np.abs(w) <= tol * np.maximum(1.0, np.abs(z))
        exact = r == 0
        active &= ~(done | exact)
        if not active.any():
            return z, True
    return z, False


def cluster(roots, radius=CLUSTER_RADIUS):
    """Group numerically coincident roots; returns list of (mean, multiplicity)."""
    roots = np.asarray(list(roots), dtype=complex)
    fin = np.isfinite(roots)
    if not fin.all():
        # all non-finite entries stand for the one point at infinity
        rest = cluster(roots[fin], radius)
        return rest + [(complex(np.inf, 0), int((~fin).sum()))]
    n = len(roots)
    if n == 0:
        return []
    order = np.argsort(roots.real, kind="stable")
    srt = roots[order]
    tol = radius * np.maximum(1.0, np.abs(srt))
    reach = radius * max(1.0, float(np.abs(srt).max()))
    used = np.zeros(n, dtype=bool)
    groups = []
    for i in range(n):
        if used[i]:
            continue
        hi = np.searchsorted(srt.real, srt[i].real + reach, side="right")
        cand = np.arange(i, hi)
        cand = cand[~used[cand]]
        hit = cand[np.abs(srt[cand] - srt[i]) <= tol[i]]
        used[hit] = True
        groups.append((int(order[i]), srt[hit]))
    # report groups in the order of their first member in the input
    groups.sort(key=lambda g: g[0])
    return [(complex(np.mean(g)), len(g)) for _, g in groups]


def polyroots(coeffs, tol=TOL, max_iter=MAX_ITER, seed=0, restarts=4):
    """All roots of one polynomial (ascending coefficients), with multiplicity."""
    c = np.trim_zeros(np.asarray(coeffs, dtype=complex), "b")
    n = len(c) - 1
    if n < 1:
        return np.empty(0, dtype=complex)
    # factor out roots at zero exactly
    nz = 0
    while nz < n and c[nz] == 0:
        nz += 1
    c = c[nz:]
    m = len(c) - 1
    zeros = np.zeros(nz, dtype=complex)
    if m == 0:
        return zeros
    if m == 1:
        return np.concatenate([zeros, [-c[0] / c[1]]])
    rng = np.random.default_rng(seed)
    radius = _root_radius(c)

    def ratio(z):
        p, dp = horner(c, z)
        return p / dp

    for _ in range(restarts + 1):
        z0 = _initial(radius, m, rng)
        z, ok = _iterate(z0, ratio, tol, max_iter)
        if ok or _residual_ok(c, z):
            z = _polish(c, z)
            return np.concatenate([zeros, z])
    raise RootSolverFailure(f"Aberth iteration did not converge for degree {m}")


def _residual_ok(c, z):
    p, dp = horner(c, z)
    scale = horner(np.abs(c), np.abs(z))[0].real
    backward = np.abs(p) <= 1e-8 * np.maximum(scale, 1e-300)
    # roots far below the coefficient scale: fall back to the Newton step size
    with np.errstate(divide="ignore", invalid="ignore"):
        step = np.abs(p / dp) <= 1e-12 * np.maximum(1.0, np.abs(z))
    return bool(np.all(backward | step))


def _polish(c, z, steps=2):
    for _ in range(steps):
        p, dp = horner(c, z)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = p / dp
        ok = np.isfinite(step) & (np.abs(step) < 1e-6 * np.maximum(1, np.abs(z)))
        z = np.where(ok, z - step, z)
    return z


def polyroots_batch(coeffs, tol=TOL, max_iter=MAX_ITER, seed=0):
    """Roots of a batch of same-degree polynomials; ``coeffs`` has shape (N, n+1).

    Returns an (N, n) complex array. Leading coefficients must be nonzero.
    """
    c = np.asarray(coeffs, dtype=complex)
    N, n1 = c.shape
    n = n1 - 1
    if n == 1:
        return (-c[:, 0] / c[:, 1])[:, None]
    if n == 2:
        a, b, cc = c[:, 2], c[:, 1], c[:, 0]
        disc = np.sqrt(b * b - 4 * a * cc)
        # pick the sign that avoids cancellation
        sgn = np.where((np.conj(b) * disc).real >= 0, 1.0, -1.0)
        q = -0.5 * (b + sgn * disc)
        r1 = np.where(q != 0, q / a, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            r2 = np.where(q != 0, cc / q, 0.0)
        return np.stack([r1, r2], axis=1)
    rng = np.random.default_rng(seed)
    radius = _root_radius(c)
    z0 = _initial(radius, n, rng, (N,))

    def ratio(z):
        p, dp = horner(c, z)
        with np.errstate(divide="ignore", invalid="ignore"):
            return p / dp

    z, ok = _iterate(z0, ratio, tol, max_iter)
    if not ok:
        p, _ = horner(c, z)
        scale = horner(np.abs(c), np.abs(z))[0].real
        bad = np.abs(p) > 1e-8 * np.maximum(scale, 1e-300)
        if bad.any():
            rows = np.flatnonzero(bad.any(axis=1))
            for i in rows:
                z[i] = polyroots(c[i], tol, max_iter, seed=seed + 1 + int(i))
    return z


def implicit_roots(ratio_fn, degree, radius, tol=TOL, max_iter=MAX_ITER, seed=0,
                   restarts=3, residual_fn=None, start=None):
    """Roots of a degree-``degree`` polynomial known through ``ratio_fn(z) = g/g'``.

    ``radius`` bounds the root moduli. ``residual_fn``, when given, decides
    acceptance of roots after a non-converged run.
    """
    rng = np.random.default_rng(seed)
    for attempt in range(restarts + 1):
        if start is not None and attempt == 0:
            z0 = np.asarray(start, dtype=complex)
        else:
            z0 = _initial(radius * 1.25, degree, rng)
        with np.errstate(all="ignore"):
            z, ok = _iterate(z0, ratio_fn, tol, max_iter)
        if ok:
            return z
        if residual_fn is not None and residual_fn(z):
            return z
    raise RootSolverFailure(f"implicit Aberth did not converge for degree {degree}")
