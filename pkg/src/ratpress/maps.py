"""Rational maps of the Riemann sphere: evaluation, derivatives, critical
points, periodic orbits and exceptional sets.

Points are stored projectively (:class:`CPoint`) at the API surface.
Vectorised helpers work on complex arrays where ``inf`` stands for the
point at infinity.
"""
from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly

from . import roots as _roots
from .errors import BudgetExceeded, EuclideanAtInfinity, InvalidMap, RootSolverFailure

POINT_TOL = 1e-9
NORM_EPS = 1e-12
INDIFFERENT_BAND = 1e-9
MAX_PERIODIC_DEGREE = 1024
RESULTANT_TOL = 1e-10


@dataclass(frozen=True)
class CPoint:
    """Point of the Riemann sphere as a normalised projective pair (u, v)."""

    u: complex
    v: complex

    def __post_init__(self):
        u, v = complex(self.u), complex(self.v)
        s = max(abs(u), abs(v))
        if s == 0 or not math.isfinite(s):
            raise ValueError("degenerate projective point")
        object.__setattr__(self, "u", u / s)
        object.__setattr__(self, "v", v / s)

    @classmethod
    def from_complex(cls, z) -> "CPoint":
        z = complex(z)
        if not (math.isfinite(z.real) and math.isfinite(z.imag)):
            return cls(1.0, 0.0)
        return cls(z, 1.0)

    @classmethod
    def infinity(cls) -> "CPoint":
        return cls(1.0, 0.0)

    @property
    def is_infinity(self) -> bool:
        return abs(self.v) <= NORM_EPS * abs(self.u)

    @property
    def value(self) -> complex:
        """Finite chart value, ``complex(inf)`` at infinity."""
        if self.v == 0:
            return complex(math.inf, 0.0)
        return self.u / self.v

    def same_as(self, other: "CPoint", tol: float = POINT_TOL) -> bool:
        return abs(self.u * other.v - other.u * self.v) <= tol

    def __repr__(self):
        return "CPoint(inf)" if self.v == 0 else f"CPoint({self.value})"


def as_cpoint(z) -> CPoint:
    return z if isinstance(z, CPoint) else CPoint.from_complex(z)


def chordal(z, w):
    """Chordal distance on the sphere (array-friendly, inf allowed)."""
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    zi, wi = ~np.isfinite(z), ~np.isfinite(w)
    with np.errstate(invalid="ignore", over="ignore"):
        d = np.abs(z - w) / np.sqrt((1 + np.abs(z) ** 2) * (1 + np.abs(w) ** 2))
        dz = 1.0 / np.sqrt(1 + np.abs(w) ** 2)
        dw = 1.0 / np.sqrt(1 + np.abs(z) ** 2)
    d = np.where(zi & ~wi, dz, d)
    d = np.where(wi & ~zi, dw, d)
    d = np.where(zi & wi, 0.0, d)
    return d


def _trim(c):
    c = np.asarray(c, dtype=complex)
    nz = np.flatnonzero(c != 0)
    return c[: nz[-1] + 1] if len(nz) else c[:1]


@dataclass(frozen=True)
class MapSpec:
    """Rational map ``f = N/D`` with ascending complex coefficients."""

    numerator: tuple
    denominator: tuple = (1.0,)
    degree: int = field(init=False)
    is_polynomial: bool = field(init=False)

    def __post_init__(self):
        num = _trim(self.numerator)
        den = _trim(self.denominator)
        if not np.any(den != 0):
            raise InvalidMap("denominator is identically zero")
        if not np.any(num != 0):
            raise InvalidMap("numerator is identically zero")
        object.__setattr__(self, "numerator", tuple(complex(a) for a in num))
        object.__setattr__(self, "denominator", tuple(complex(a) for a in den))
        d = max(len(num), len(den)) - 1
        if d < 2:
            raise InvalidMap(f"degree {d} < 2")
        object.__setattr__(self, "degree", d)
        object.__setattr__(self, "is_polynomial", len(den) == 1 and den[0] == 1)
        if len(den) > 1:
            scale = max(np.abs(num).max(), np.abs(den).max())
            for r in _roots.polyroots(den):
                val = abs(_roots.horner(num, np.array([r]))[0][0])
                mag = _roots.horner(np.abs(num), np.array([abs(r)]))[0][0].real
                if val <= RESULTANT_TOL * max(mag, scale):
                    raise InvalidMap("numerator and denominator share a root")

    @classmethod
    def polynomial(cls, coeffs) -> "MapSpec":
        return cls(tuple(coeffs), (1.0,))

    @classmethod
    def quadratic(cls, c) -> "MapSpec":
        return cls.polynomial((c, 0.0, 1.0))

    @property
    def num(self) -> np.ndarray:
        return np.array(self.numerator, dtype=complex)

    @property
    def den(self) -> np.ndarray:
        return np.array(self.denominator, dtype=complex)

    def homogeneous(self):
        """Coefficients of the degree-d homogeneous lift, padded to length d+1."""
        d = self.degree
        P = np.zeros(d + 1, dtype=complex)
        Q = np.zeros(d + 1, dtype=complex)
        P[: len(self.numerator)] = self.numerator
        Q[: len(self.denominator)] = self.denominator
        return P, Q

    def to_json(self) -> dict:
        return {
            "numerator": [[a.real, a.imag] for a in self.numerator],
            "denominator": [[a.real, a.imag] for a in self.denominator],
        }

    def __repr__(self):
        return f"MapSpec(num={list(self.numerator)}, den={list(self.denominator)})"


def load_map(path) -> MapSpec:
    """Read a map specification file (``numerator``/``denominator`` as [re, im] pairs)."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return map_from_json(data)


def map_from_json(data: dict) -> MapSpec:
    if not isinstance(data, dict) or "numerator" not in data:
        raise InvalidMap("map file needs a 'numerator' array")
    unknown = set(data) - {"numerator", "denominator"}
    if unknown:
        raise InvalidMap(f"unknown keys in map file: {sorted(unknown)}")

    def conv(pairs):
        out = []
        for p in pairs:
            if isinstance(p, (int, float)):
                out.append(complex(p))
            else:
                re, im = p
                out.append(complex(re, im))
        return tuple(out)

    return MapSpec(conv(data["numerator"]), conv(data.get("denominator", [[1, 0]])))


# -- homogeneous evaluation -------------------------------------------------

def _hom_eval(coeffs, u, v):
    """sum a_k u^k v^(d-k) together with its u- and v-partials."""
    d = len(coeffs) - 1
    val = np.zeros(np.shape(u), dtype=complex)
    du = np.zeros(np.shape(u), dtype=complex)
    dv = np.zeros(np.shape(u), dtype=complex)
    for k, a in enumerate(coeffs):
        if a == 0:
            continue
        uk = u ** k
        vk = v ** (d - k)
        val = val + a * uk * vk
        if k:
            du = du + a * k * u ** (k - 1) * vk
        if d - k:
            dv = dv + a * (d - k) * uk * v ** (d - k - 1)
    return val, du, dv


def _to_projective(z):
    z = np.asarray(z, dtype=complex)
    fin = np.isfinite(z)
    big = fin & (np.abs(z) > 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(big, 1.0, np.where(fin, z, 1.0))
        v = np.where(big, 1.0 / z, np.where(fin, 1.0, 0.0))
    return u.astype(complex), v.astype(complex)


def _from_projective(u, v):
    with np.errstate(divide="ignore", invalid="ignore"):
        out = u / v
    return np.where(np.abs(v) <= NORM_EPS * np.abs(u), complex(np.inf, 0), out)


def evaluate_array(f: MapSpec, z) -> np.ndarray:
    """f(z) for a complex array; ``inf`` encodes the point at infinity."""
    z = np.asarray(z, dtype=complex)
    if f.is_polynomial:
        fin = np.isfinite(z)
        with np.errstate(over="ignore", invalid="ignore"):
            val, _ = _roots.horner(f.num, np.where(fin, z, 0))
        val = np.where(np.isfinite(val), val, complex(np.inf, 0))
        return np.where(fin, val, complex(np.inf, 0))
    P, Q = f.homogeneous()
    u, v = _to_projective(z)
    pu, _, _ = _hom_eval(P, u, v)
    qu, _, _ = _hom_eval(Q, u, v)
    return _from_projective(pu, qu)


def evaluate(f: MapSpec, z) -> CPoint:
    """Image of a point under f, in normalised projective form."""
    z = as_cpoint(z)
    P, Q = f.homogeneous()
    p, _, _ = _hom_eval(P, np.array(z.u), np.array(z.v))
    q, _, _ = _hom_eval(Q, np.array(z.u), np.array(z.v))
    return CPoint(complex(p), complex(q))


def iterate(f: MapSpec, z, n: int) -> CPoint:
    z = as_cpoint(z)
    for _ in range(n):
        z = evaluate(f, z)
    return z


def spherical_derivative_array(f: MapSpec, z) -> np.ndarray:
    """|f'(z)| in the spherical metric, computed from the homogeneous Jacobian.

    |P_u Q_v - P_v Q_u| (|u|^2 + |v|^2) / (d (|P|^2 + |Q|^2)) is invariant
    under rescaling (u, v), so no chart choice is needed.
    """
    P, Q = f.homogeneous()
    u, v = _to_projective(z)
    p, pu, pv = _hom_eval(P, u, v)
    q, qu, qv = _hom_eval(Q, u, v)
    jac = np.abs(pu * qv - pv * qu)
    return jac * (np.abs(u) ** 2 + np.abs(v) ** 2) / (f.degree * (np.abs(p) ** 2 + np.abs(q) ** 2))


def euclidean_derivative_array(f: MapSpec, z) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    if f.is_polynomial:
        _, dp = _roots.horner(f.num, z)
        return np.abs(dp)
    n, dn = _roots.horner(f.num, z)
    d, dd = _roots.horner(f.den, z)
    return np.abs((dn * d - n * dd) / d ** 2)


def derivative_array(f: MapSpec, z, metric: str = "spherical") -> np.ndarray:
    if metric == "spherical":
        return spherical_derivative_array(f, z)
    if metric == "euclidean":
        return euclidean_derivative_array(f, z)
    raise ValueError(f"unknown metric {metric!r}")


def complex_derivative_array(f: MapSpec, z) -> np.ndarray:
    """Complex f'(z) in the finite chart (finite z, finite f(z))."""
    z = np.asarray(z, dtype=complex)
    n, dn = _roots.horner(f.num, z)
    if f.is_polynomial:
        return dn
    d, dd = _roots.horner(f.den, z)
    return (dn * d - n * dd) / d ** 2


def derivative_modulus(f: MapSpec, z, metric: str = "spherical", inf_radius: float = 1e12) -> float:
    """|f'(z)| in the spherical or Euclidean metric."""
    z = as_cpoint(z)
    if metric == "spherical":
        return float(spherical_derivative_array(f, np.array([z.value]))[0])
    if metric != "euclidean":
        raise ValueError(f"unknown metric {metric!r}")
    w = evaluate(f, z)
    if z.is_infinity or w.is_infinity or abs(z.value) > inf_radius or abs(w.value) > inf_radius:
        raise EuclideanAtInfinity("euclidean derivative requested at or near infinity")
    return float(euclidean_derivative_array(f, np.array([z.value]))[0])


def escape_radius(f: MapSpec) -> float:
    """Radius beyond which a polynomial orbit grows monotonically to infinity."""
    a = np.abs(f.num)
    return max(1.0, (a[:-1].sum() + 2.0) / a[-1])


# -- preimages ---------------------------------------------------------------

def preimage_coeffs(f: MapSpec, z: complex) -> np.ndarray:
    """Coefficients of N(w) - z D(w) (or D(w) when z is infinite), padded to d+1."""
    P, Q = f.homogeneous()
    if not np.isfinite(z):
        return Q
    return P - z * Q


def preimage_leaves(f: MapSpec, z0: complex, depth: int) -> np.ndarray:
    """All depth-``depth`` preimages of a finite point of a polynomial (flat array)."""
    level = np.array([complex(z0)])
    P, _ = f.homogeneous()
    for _ in range(depth):
        coeffs = np.tile(P, (len(level), 1))
        coeffs[:, 0] -= level
        level = _roots.polyroots_batch(coeffs).ravel()
    return level


def preimages(f: MapSpec, z) -> list:
    """All solutions of f(w) = z on the sphere, as (CPoint, multiplicity)."""
    z = as_cpoint(z)
    c = preimage_coeffs(f, z.value if not z.is_infinity else complex(np.inf))
    ct = _trim(c)
    roots = list(_roots.polyroots(ct)) if len(ct) > 1 else []
    n_inf = f.degree - (len(ct) - 1)
    out = [(CPoint.from_complex(r), m) for r, m in _roots.cluster(roots, 1e-7)]
    if n_inf > 0:
        out.append((CPoint.infinity(), n_inf))
    return out


# -- critical points -------------------------------------------------------------

@dataclass
class CriticalData:
    """Critical points with local degrees, Julia-set flags and orbit caches."""

    points: list
    local_degrees: list
    in_julia: list
    orbits: list
    notes: list = field(default_factory=list)

    @property
    def julia_points(self) -> list:
        return [p for p, j in zip(self.points, self.in_julia) if j]

    @property
    def julia_degrees(self) -> list:
        return [k for k, j in zip(self.local_degrees, self.in_julia) if j]

    def multiplicity_total(self) -> int:
        return sum(k - 1 for k in self.local_degrees)


def wronskian(f: MapSpec) -> np.ndarray:
    """Coefficients of N'D - ND'; its roots are the finite critical points."""
    n, d = f.num, f.den
    return npoly.polysub(npoly.polymul(npoly.polyder(n), d), npoly.polymul(n, npoly.polyder(d)))


def critical_points(f: MapSpec, horizon: int = 1000, cycle_period: int = 6) -> CriticalData:
    """Critical points of f, their local degrees and a heuristic J(f) flag.

    A critical point is flagged as lying in J(f) when its forward orbit
    neither escapes (polynomials) nor settles on an attracting or
    indifferent cycle within ``horizon`` iterates.
    """
    d = f.degree
    w = _trim(wronskian(f))
    try:
        rts = _roots.polyroots(w) if len(w) > 1 else np.empty(0)
    except RootSolverFailure:
        raise
    groups = _roots.cluster(rts, 1e-6)
    points = [CPoint.from_complex(r) for r, _ in groups]
    degrees = [m + 1 for _, m in groups]
    deficit = 2 * d - 2 - sum(m for _, m in groups)
    if deficit > 0:
        points.append(CPoint.infinity())
        degrees.append(deficit + 1)
    cycles = _reference_cycles(f, cycle_period)
    in_j, orbits, notes = [], [], []
    for c in points:
        orbit = _forward_orbit(f, c.value, min(horizon, 64))
        orbits.append(orbit)
        in_j.append(_critical_in_julia(f, c.value, horizon, cycles))
    notes.append("J(f) membership of critical points is a forward-orbit heuristic")
    flagged = [p for p, j in zip(points, in_j) if j]
    for i, c in enumerate(points):
        if not in_j[i]:
            continue
        for z in orbits[i][1:]:
            zc = CPoint.from_complex(z)
            if any(zc.same_as(o, 1e-9) for o in flagged):
                msg = f"critical point {c} maps onto a critical point; block convention not supported"
                warnings.warn(msg)
                notes.append(msg)
                break
    return CriticalData(points, degrees, in_j, orbits, notes)


def _forward_orbit(f, z, n):
    out = [complex(z)]
    for _ in range(n):
        z = evaluate(f, z).value
        out.append(z)
    return out


def _reference_cycles(f, max_period):
    """Attracting and indifferent cycle points for small periods."""
    pts = []
    for m in range(1, max_period + 1):
        if f.degree ** m > 256:
            break
        try:
            orbits = find_periodic_points(f, m)
        except (RootSolverFailure, BudgetExceeded):
            continue
        for o in orbits:
            if o.period == m and o.classification != "repelling":
                pts.extend(o.points)
    return pts


def _preperiodic_cycle(f, c, n=64, tol=1e-9):
    """Cycle reached exactly by the orbit of c within n steps, else None."""
    orbit = [CPoint.from_complex(c)]
    for _ in range(n):
        nxt = evaluate(f, orbit[-1])
        for j, q in enumerate(orbit):
            if nxt.same_as(q, tol):
                return orbit[j:]
        orbit.append(nxt)
    return None


def _critical_in_julia(f, c, horizon, cycles):
    # strictly preperiodic onto a repelling cycle: in J, and round-off
    # would otherwise push the orbit off the cycle
    cyc = _preperiodic_cycle(f, c)
    if cyc is not None:
        return abs(cycle_multiplier(f, cyc)) > 1 + INDIFFERENT_BAND
    z = c
    R = escape_radius(f) if f.is_polynomial else None
    for _ in range(horizon):
        if not np.isfinite(z):
            return False
        if R is not None and abs(z) > R:
            return False
        z = evaluate(f, z).value
    for p in cycles:
        if float(chordal(z, p.value)) < 1e-4:
            return False
    return True


# -- periodic points ---------------------------------------------------------------

@dataclass(frozen=True)
class PeriodicOrbit:
    """One periodic cycle with its multiplier and classification."""

    representative: CPoint
    period: int
    multiplier: complex
    chi: float
    classification: str
    points: tuple = ()

    @property
    def repelling(self) -> bool:
        return self.classification == "repelling"


def classify(multiplier) -> str:
    a = abs(multiplier)
    if a > 1 + INDIFFERENT_BAND:
        return "repelling"
    if a < 1 - INDIFFERENT_BAND:
        return "attracting"
    return "indifferent"


def _newton_ratio_poly_iterate(f: MapSpec, m: int):
    """z -> g(z)/g'(z) for g = f^m(z) - z, robust to escaping orbits."""
    coeffs = f.num
    d = f.degree
    big = 1e150

    def ratio(z):
        w = z.copy()
        dw = np.ones_like(z)
        q = np.zeros_like(z)  # (f^k)'/f^k once escaped
        escaped = np.zeros(z.shape, dtype=bool)
        for _ in range(m):
            with np.errstate(over="ignore", invalid="ignore"):
                p, dp = _roots.horner(coeffs, np.where(escaped, 0, w))
                newly = ~escaped & ~(np.abs(p) < big)
                # once large, f^k'/f^k multiplies by about d per step
                q = np.where(newly, dw / w * (dp * w / p), np.where(escaped, q * d, q))
                dw = np.where(escaped | newly, dw, dp * dw)
                w = np.where(escaped | newly, w, p)
            escaped |= newly
        with np.errstate(divide="ignore", invalid="ignore"):
            direct = (w - z) / (dw - 1)
            far = 1.0 / q
        return np.where(escaped, far, direct)

    return ratio


def _compose_rational(f: MapSpec, m: int):
    P, Q = f.homogeneous()
    N, D = _trim(P), _trim(Q)
    Nk, Dk = N, D
    for _ in range(m - 1):
        # f(Nk/Dk) homogenised
        newN = np.zeros(1, dtype=complex)
        newD = np.zeros(1, dtype=complex)
        dd = f.degree
        for j in range(dd + 1):
            term = npoly.polymul(npoly.polypow(Nk, j) if j else np.array([1.0 + 0j]),
                                 npoly.polypow(Dk, dd - j) if dd - j else np.array([1.0 + 0j]))
            newN = npoly.polyadd(newN, P[j] * term)
            newD = npoly.polyadd(newD, Q[j] * term)
        Nk, Dk = newN, newD
    return Nk, Dk


def find_periodic_points(f: MapSpec, m: int, max_degree: int = MAX_PERIODIC_DEGREE,
                         seed: int = 0) -> list:
    """All solutions of f^m(z) = z grouped into cycles (periods dividing m)."""
    if m < 1:
        raise ValueError("period must be >= 1")
    D = f.degree ** m
    if D > max_degree:
        raise BudgetExceeded(f"degree {D} of f^{m}(z) = z exceeds cap {max_degree}")
    if f.is_polynomial:
        R = escape_radius(f)
        ratio = _newton_ratio_poly_iterate(f, m)

        def residual_ok(z):
            r = ratio(z)
            return bool(np.all(np.abs(r) < 1e-7 * np.maximum(1, np.abs(z))))

        start = preimage_leaves(f, complex(0.31 * R, 0.17 * R), m)
        rng = np.random.default_rng(seed)
        start = start * (1 + 1e-3 * rng.uniform(-1, 1, start.shape))
        fixed = _roots.implicit_roots(ratio, D, R, seed=seed, residual_fn=residual_ok, start=start)
        if len(_roots.cluster(fixed, 1e-9)) < D:
            # two starts collapsed onto one root; retry from a circle start
            fixed = _roots.implicit_roots(ratio, D, R, seed=seed + 1, residual_fn=residual_ok)
            if len(_roots.cluster(fixed, 1e-9)) < D:
                raise RootSolverFailure(f"lost roots of f^{m}(z) = z (degree {D})")
        fixed = list(fixed) + [complex(np.inf)]
    else:
        Nm, Dm = _compose_rational(f, m)
        g = npoly.polysub(Nm, npoly.polymul([0, 1], Dm))
        g = _trim(g)
        fixed = list(_roots.polyroots(g)) if len(g) > 1 else []
        if len(fixed) < D + 1:
            fixed.append(complex(np.inf))
    return _group_orbits(f, fixed, m)


def _group_orbits(f, fixed, m):
    pts = [CPoint.from_complex(z) for z, _ in _roots.cluster(fixed, 1e-9)]
    U = np.array([p.u for p in pts])
    V = np.array([p.v for p in pts])
    used = np.zeros(len(pts), dtype=bool)
    orbits = []
    for i, p in enumerate(pts):
        if used[i]:
            continue
        cyc = [p]
        z = p
        for _ in range(m):
            z = evaluate(f, z)
            if z.same_as(p, 1e-6):
                break
            cyc.append(z)
        k = len(cyc)
        # snap cycle members to the solver's roots where available
        snapped = []
        for q in cyc:
            dist = np.abs(U * q.v - V * q.u)
            j = int(np.argmin(dist))
            if dist[j] <= 1e-6:
                used[j] = True
                snapped.append(pts[j])
            else:
                snapped.append(q)
        used[i] = True
        mult = cycle_multiplier(f, snapped)
        chi = math.log(abs(mult)) / k if mult != 0 else -math.inf
        orbits.append(PeriodicOrbit(snapped[0], k, mult, chi, classify(mult), tuple(snapped)))
    return orbits


def cycle_multiplier(f: MapSpec, cycle: Sequence[CPoint]) -> complex:
    """Multiplier of a cycle; exact complex value in the finite chart, else its modulus."""
    vals = np.array([c.value for c in cycle])
    imgs = evaluate_array(f, vals)
    if np.all(np.isfinite(vals)) and np.all(np.isfinite(imgs)):
        return complex(np.prod(complex_derivative_array(f, vals)))
    return complex(np.prod(spherical_derivative_array(f, vals)))


# -- exceptional sets ---------------------------------------------------------------

@dataclass
class ExceptionalResult:
    sigma: list
    mode: Optional[str]
    meets_julia: bool
    candidates_checked: int

    def to_json(self) -> dict:
        return {
            "sigma": [_point_json(p) for p in self.sigma],
            "mode": self.mode,
            "meets_julia": self.meets_julia,
        }


def _point_json(p: CPoint):
    if p.is_infinity:
        return "inf"
    z = p.value
    return [z.real, z.imag]


def detect_exceptional(f: MapSpec, max_period: int = 3, max_size: int = 4) -> ExceptionalResult:
    """Search finite sets with f^{-1}(S) minus Crit(f) equal to (or contained in) S.

    Candidates start from unions of periodic cycles and are closed under
    non-critical preimages; sets growing past ``max_size`` are dropped.
    """
    crit = critical_points(f)
    orbits = []
    for m in range(1, max_period + 1):
        try:
            for o in find_periodic_points(f, m):
                if o.period == m and o.period <= max_size:
                    orbits.append(o)
        except BudgetExceeded:
            break
    repelling_pts = [p for o in orbits if o.repelling for p in o.points]
    equal, contained, checked = [], [], 0
    for r in range(1, max_size + 1):
        for combo in itertools.combinations(orbits, r):
            if sum(o.period for o in combo) > max_size:
                continue
            checked += 1
            start = [p for o in combo for p in o.points]
            closure = _noncritical_closure(f, start, crit.points, max_size)
            if closure is None:
                continue
            back = _noncritical_preimage_set(f, closure, crit.points)
            if _set_eq(back, closure):
                equal.append(closure)
            elif _subset(back, closure):
                contained.append(closure)
    if equal:
        sigma, mode = _union(equal), "equality"
    elif contained:
        sigma, mode = _union(contained), "containment"
    else:
        return ExceptionalResult([], None, False, checked)
    meets = any(_eventually_repelling(f, p, repelling_pts) for p in sigma)
    return ExceptionalResult(sigma, mode, meets, checked)


def _noncritical_preimage_set(f, pts, crit):
    out = []
    for p in pts:
        for w, _ in preimages(f, p):
            if not any(w.same_as(c, 1e-7) for c in crit):
                if not any(w.same_as(q, 1e-7) for q in out):
                    out.append(w)
    return out


def _noncritical_closure(f, start, crit, max_size):
    cur = []
    for p in start:
        if not any(p.same_as(q, 1e-7) for q in cur):
            cur.append(p)
    while True:
        back = _noncritical_preimage_set(f, cur, crit)
        new = [w for w in back if not any(w.same_as(q, 1e-7) for q in cur)]
        if not new:
            return cur
        cur = cur + new
        if len(cur) > max_size:
            return None


def _subset(a, b):
    return all(any(x.same_as(y, 1e-7) for y in b) for x in a)


def _set_eq(a, b):
    return _subset(a, b) and _subset(b, a)


def _union(sets):
    out = []
    for s in sets:
        for p in s:
            if not any(p.same_as(q, 1e-7) for q in out):
                out.append(p)
    return out


def _eventually_repelling(f, p, repelling_pts, steps=8):
    z = p
    for _ in range(steps + 1):
        if any(z.same_as(q, 1e-7) for q in repelling_pts):
            return True
        z = evaluate(f, z)
    return False
