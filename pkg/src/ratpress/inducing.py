"""Nice couples of round disks, pull-back bookkeeping and the induced map.

Everything here is a numerical surrogate. Couples are round spherical disks
around the critical points in J(f), niceness is checked on sampled boundary
orbits, and univalence of pull-backs is decided by comparing the distance
from each chain point to the critical values with a linearised enclosure
radius. Pull-backs are followed along the exact backward tree of each disk
centre, so a component is represented by the preimage of its centre.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .backward import NODE_BUDGET, backward_tree
from .errors import (
    BudgetExceeded,
    EmptyBranchSet,
    NoCriticalPointsInJulia,
    OverlappingComponents,
    VerificationFailed,
)
from .maps import (
    CPoint,
    MapSpec,
    _preperiodic_cycle,
    as_cpoint,
    chordal,
    critical_points,
    evaluate,
    evaluate_array,
)
from .pressure import PressureCurve

RATIO_CAP = 0.5
L_MAX = 64
# enclosures within this factor of a critical value are only "uncertain"
ANNULUS = 1.5
MAX_BOUNDARY_SAMPLES = 2**15

# chain status codes
CLEAR, UNCERTAIN, HIT = 0, 1, 2


# -- couples ---------------------------------------------------------------------

@dataclass
class NiceCouple:
    """Round spherical disks V^c inside V̂^c, one pair per critical point in J."""

    centers: tuple
    r_V: tuple
    r_Vhat: tuple
    local_degrees: tuple
    L: int
    depth: int = 0
    margin: float = math.nan
    verified: bool = False
    cap: float = RATIO_CAP
    notes: list = field(default_factory=list)

    def __len__(self):
        return len(self.centers)

    @property
    def center_values(self) -> np.ndarray:
        return np.array([c.value for c in self.centers], dtype=complex)

    def koebe(self, i: int = 0) -> float:
        lam = self.r_V[i] / self.r_Vhat[i]
        return ((1 + lam) / (1 - lam)) ** 4

    def label(self, z, outer: bool = False) -> np.ndarray:
        """Index of the disk containing each point, -1 outside all of them."""
        z = np.asarray(z, dtype=complex)
        out = np.full(z.shape, -1, dtype=np.int64)
        radii = self.r_Vhat if outer else self.r_V
        for i, c in enumerate(self.center_values):
            inside = (chordal(z, c) < radii[i]) & (out < 0)
            out[inside] = i
        return out

    def to_json(self) -> dict:
        return {
            "centers": [[c.value.real, c.value.imag] if not c.is_infinity else "inf" for c in self.centers],
            "r_V": list(self.r_V),
            "r_Vhat": list(self.r_Vhat),
            "local_degrees": list(self.local_degrees),
            "L": self.L,
            "depth": self.depth,
            "margin": None if math.isnan(self.margin) else self.margin,
            "verified": self.verified,
        }


def _critical_orbit(f, c, n):
    """Forward orbit of length n+1, snapped onto an exact preperiodic cycle."""
    c = as_cpoint(c)
    cyc = _preperiodic_cycle(f, c.value) if not c.is_infinity else None
    orbit = [c]
    if cyc is None:
        for _ in range(n):
            orbit.append(evaluate(f, orbit[-1]))
        return np.array([p.value for p in orbit])
    while not orbit[-1].same_as(cyc[0]):
        orbit.append(evaluate(f, orbit[-1]))
    k = len(orbit) - 1
    vals = [p.value for p in orbit[:-1]]
    cyc_vals = [p.value for p in cyc]
    while len(vals) <= n:
        vals.append(cyc_vals[(len(vals) - k) % len(cyc_vals)])
    return np.array(vals[: n + 1])


def _julia_critical(f):
    cd = critical_points(f)
    return list(cd.julia_points), list(cd.julia_degrees)


def propose_nice_couple(f: MapSpec, radii, cap: float = RATIO_CAP, L_max: int = L_MAX) -> NiceCouple:
    """Candidate couple of round disks centred at the critical points in J.

    ``radii`` is one (r_V, r_Vhat) pair used for every critical point, or a
    list with one pair per flagged critical point.
    """
    crit, degs = _julia_critical(f)
    if not crit:
        raise NoCriticalPointsInJulia("no critical point of f is flagged as lying in J(f)")
    if len(radii) == 2 and np.isscalar(radii[0]):
        radii = [tuple(radii)] * len(crit)
    if len(radii) != len(crit):
        raise ValueError(f"{len(crit)} critical points in J but {len(radii)} radius pairs")
    r_V = tuple(float(a) for a, _ in radii)
    r_Vh = tuple(float(b) for _, b in radii)
    for a, b in zip(r_V, r_Vh):
        if not (0 < a < b):
            raise ValueError("radii must satisfy 0 < r_V < r_Vhat")
        if a / b > cap + 1e-12:
            raise ValueError(f"r_V / r_Vhat = {a / b:.3g} exceeds the cap {cap}")
    vals = np.array([c.value for c in crit])
    for i in range(len(crit)):
        for j in range(i + 1, len(crit)):
            if float(chordal(vals[i], vals[j])) <= r_Vh[i] + r_Vh[j]:
                raise OverlappingComponents(f"disks around {crit[i]} and {crit[j]} overlap")

    couple = NiceCouple(tuple(crit), r_V, r_Vh, tuple(degs), 0, cap=cap)
    # L: the critical orbits stay out of every V̂ for steps 1..L
    L = L_max
    for c in crit:
        orb = _critical_orbit(f, c, L_max)
        hits = np.nonzero(couple.label(orb[1:], outer=True) >= 0)[0]
        if len(hits):
            L = min(L, int(hits[0]))
    couple.L = L
    if L == L_max:
        couple.notes.append(f"critical orbits avoid V̂ for all {L_max} checked steps; L capped")
    return couple


# -- sampled verification --------------------------------------------------------

def _circle(center: CPoint, r: float, theta) -> np.ndarray:
    """Points at chordal distance r from ``center`` (rotation of a circle about 0)."""
    rho = r / math.sqrt(1 - r * r)
    zeta = rho * np.exp(1j * np.asarray(theta))
    if center.is_infinity:
        return 1.0 / zeta
    c = center.value
    return (zeta + c) / (1 - np.conj(c) * zeta)


@dataclass
class VerificationReport:
    accepted: bool
    depth: int
    margin: float
    samples: int
    max_separation: float
    pleasant_violations: int
    failure: dict | None = None

    def to_json(self) -> dict:
        return asdict(self)


def _orbit_to(f, z, n):
    for _ in range(n):
        z = evaluate_array(f, z)
    return z


def _distance_to_outer(couple, z):
    d = np.full(z.shape, np.inf)
    for i, c in enumerate(couple.center_values):
        d = np.minimum(d, chordal(z, c) - couple.r_Vhat[i])
    return d


def verify_nice(couple: NiceCouple, f: MapSpec, N: int = 200, samples: int = 256,
                max_samples: int = MAX_BOUNDARY_SAMPLES, pleasant_depth: int = 10,
                raise_on_failure: bool = True) -> VerificationReport:
    """Forward-iterate sampled boundaries of every V^c and measure the gap to V̂.

    Adjacent samples are kept within a quarter of the running margin of each
    other by inserting midpoints; if that needs more than ``max_samples``
    points per boundary the certificate is void. A boundary sample that lands
    in V̂ rejects the couple outright.
    """
    margin = math.inf
    max_sep = 0.0
    total = 0
    failure = None
    for ci, c in enumerate(couple.centers):
        theta = 2 * np.pi * np.arange(samples) / samples
        z = _circle(c, couple.r_V[ci], theta)
        for n in range(1, N + 1):
            z = evaluate_array(f, z)
            while True:
                d = _distance_to_outer(couple, z)
                k = int(np.argmin(d))
                if d[k] <= 0:
                    failure = {"n": n, "sample": float(theta[k]), "component": ci,
                               "reason": "boundary sample enters V̂"}
                    break
                margin = min(margin, float(d[k]))
                sep = chordal(z, np.roll(z, -1))
                bad = np.nonzero(sep > margin / 4)[0]
                if len(bad) == 0:
                    max_sep = max(max_sep, float(sep.max()))
                    break
                if len(theta) + len(bad) > max_samples:
                    failure = {"n": n, "sample": float(theta[bad[0]]), "component": ci,
                               "reason": "sample density condition cannot be met within the budget"}
                    break
                nxt = np.where(bad + 1 < len(theta), theta[(bad + 1) % len(theta)], 2 * np.pi)
                mids = 0.5 * (theta[bad] + nxt)
                znew = _orbit_to(f, _circle(c, couple.r_V[ci], mids), n)
                order = np.argsort(np.concatenate([theta, mids]), kind="stable")
                theta = np.concatenate([theta, mids])[order]
                z = np.concatenate([z, znew])[order]
            if failure:
                break
        total += len(theta)
        if failure:
            break

    violations = 0
    if failure is None:
        violations = _pleasant_violations(couple, f, pleasant_depth)
        if violations:
            failure = {"n": None, "sample": None, "component": None,
                       "reason": f"{violations} univalent pull-backs of V̂ leave V̂"}
    if failure is None and max_sep > margin / 4:
        failure = {"n": None, "sample": None, "component": None,
                   "reason": "sample density condition fails for the final margin"}
    report = VerificationReport(failure is None, N, margin, total, max_sep, violations, failure)
    if failure is None:
        couple.verified, couple.depth, couple.margin = True, N, margin
    elif raise_on_failure:
        raise VerificationFailed(f"couple rejected: {failure['reason']} (n = {failure['n']})",
                                 failure["n"], failure["sample"])
    return report


# -- chains along backward trees ---------------------------------------------------

def _critical_values(f):
    vals = []
    for c in critical_points(f).points:
        v = evaluate(f, c)
        vals.append(v.value)
    return np.array(vals, dtype=complex)


@dataclass
class _Chains:
    """Backward tree of one disk centre with per-node labels."""

    label: int
    tree: object
    inside: list
    dcv: list


def _build_chains(couple, f, depth, budget):
    cvs = _critical_values(f)
    out = []
    for a, c in enumerate(couple.centers):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            tree = backward_tree(f, c, depth, metric="spherical", budget=budget)
        inside, dcv = [], []
        for pts in tree.points:
            inside.append(couple.label(pts))
            d = np.full(len(pts), np.inf)
            for v in cvs:
                d = np.minimum(d, chordal(pts, v))
            dcv.append(d)
        out.append(_Chains(a, tree, inside, dcv))
    return out


def _ancestors(ch, m, idx):
    """(len(idx), m+1) arrays of chain points, log-derivatives, labels, dcv."""
    k = len(idx)
    A = np.empty((k, m + 1), dtype=np.int64)
    A[:, m] = idx
    for lv in range(m, 0, -1):
        A[:, lv - 1] = ch.tree.parent[lv][A[:, lv]]
    cols = range(m + 1)
    P = np.stack([ch.tree.points[lv][A[:, lv]] for lv in cols], axis=1)
    Lg = np.stack([ch.tree.log_deriv[lv][A[:, lv]] for lv in cols], axis=1)
    lab = np.stack([ch.inside[lv][A[:, lv]] for lv in cols], axis=1)
    dcv = np.stack([ch.dcv[lv][A[:, lv]] for lv in cols], axis=1)
    return P, Lg, lab, dcv


def _chain_status(Lg, lab, dcv, i, m, couple, inflation):
    """Univalence status of the V̂ pull-back from level i down to level m.

    The enclosure at level l is the V̂ disk of the component at level i
    shrunk by the derivative from l to i; stepping to level l+1 is
    non-univalent when that enclosure contains a critical value.
    """
    k = Lg.shape[0]
    status = np.zeros(k, dtype=np.int8)
    rhat = np.array(couple.r_Vhat)[np.maximum(lab[:, i], 0)]
    for lv in range(i, m):
        with np.errstate(over="ignore", invalid="ignore"):
            R = inflation * rhat * np.exp(-(Lg[:, lv] - Lg[:, i]))
        R = np.where(np.isfinite(R), R, np.inf)
        hit = dcv[:, lv] < 0.5 * R
        unsure = dcv[:, lv] < ANNULUS * R
        status = np.maximum(status, np.where(hit, HIT, np.where(unsure, UNCERTAIN, CLEAR)).astype(np.int8))
    return status


def _pleasant_violations(couple, f, depth, budget=NODE_BUDGET, inflation=1.0):
    """Univalent V̂ pull-backs of chains that re-enter V but stick out of V̂."""
    depth = min(depth, int(math.log(max(budget // max(len(couple), 1), 2), f.degree)) - 1)
    bad = 0
    vals = couple.center_values
    for ch in _build_chains(couple, f, depth, budget):
        for m in range(1, depth + 1):
            idx = np.nonzero(ch.inside[m] >= 0)[0]
            if len(idx) == 0:
                continue
            P, Lg, lab, dcv = _ancestors(ch, m, idx)
            ok = _chain_status(Lg, lab, dcv, 0, m, couple, inflation) == CLEAR
            reach = chordal(P[:, m], vals[lab[:, m]]) + couple.r_Vhat[ch.label] * np.exp(-Lg[:, m])
            bad += int((ok & (reach > np.array(couple.r_Vhat)[lab[:, m]])).sum())
    return bad


@dataclass
class PullbackComponent:
    """Pull-back W of V^base by f^m lying inside V^inside."""

    word: tuple
    m: int
    base: int
    inside: int
    center: complex
    radius: float
    log_deriv: float
    univalent: bool
    uncertain: bool
    bad_chain: bool
    first_good: bool
    visits: tuple = ()
    visit_status: tuple = ()

    @property
    def inside_V(self) -> bool:
        return self.inside >= 0

    def to_json(self) -> dict:
        d = asdict(self)
        d["center"] = [self.center.real, self.center.imag]
        return d

    @classmethod
    def from_json(cls, d: dict) -> "PullbackComponent":
        d = dict(d)
        d["center"] = complex(*d["center"])
        d["word"] = tuple(d["word"])
        d["visits"] = tuple(d["visits"])
        d["visit_status"] = tuple(d["visit_status"])
        return cls(**d)


class ComponentList(list):
    """List of components with an ``incomplete`` flag for truncated runs."""

    incomplete: bool = False
    max_time: int = 0


def enumerate_components(couple: NiceCouple, f: MapSpec, M: int, budget: int = NODE_BUDGET,
                         inflation: float = 1.0, require_verified: bool = True) -> ComponentList:
    """Pull-backs of each V^c by f^m, m <= M, that land back inside V.

    ``visits`` holds the levels (counted from the base disk) at which the
    chain passes through V before reaching W, with the univalence status of
    the V̂ pull-back started there.
    """
    if require_verified and not couple.verified:
        raise ValueError("couple is not verified; pass require_verified=False to proceed anyway")
    out = ComponentList()
    out.max_time = M
    if M <= 0:
        return out
    depth = M
    d = f.degree
    total = sum(d ** j for j in range(M + 1)) * len(couple)
    if total > budget:
        depth = 0
        while sum(d ** j for j in range(depth + 2)) * len(couple) <= budget:
            depth += 1
        out.incomplete = True
        warnings.warn(f"budget allows orders up to {depth} only; enumeration incomplete")
    K = [couple.koebe(i) for i in range(len(couple))]
    for ch in _build_chains(couple, f, depth, budget):
        for m in range(1, depth + 1):
            idx = np.nonzero(ch.inside[m] >= 0)[0]
            if len(idx) == 0:
                continue
            P, Lg, lab, dcv = _ancestors(ch, m, idx)
            base_status = _chain_status(Lg, lab, dcv, 0, m, couple, inflation)
            visit_st = {}
            for i in range(1, m):
                sel = lab[:, i] >= 0
                if sel.any():
                    st = np.full(len(idx), -1, dtype=np.int8)
                    st[sel] = _chain_status(Lg[sel], lab[sel], dcv[sel], i, m, couple, inflation)
                    visit_st[i] = st
            for r, node in enumerate(idx):
                visits = tuple(i for i in visit_st if visit_st[i][r] >= 0)
                vstat = tuple(int(visit_st[i][r]) for i in visits)
                bs = int(base_status[r])
                lg = float(Lg[r, m])
                inner = int(lab[r, m])
                earlier_all_hit = all(s == HIT for s in vstat)
                uncertain = bs == UNCERTAIN or (bs == CLEAR and any(s == UNCERTAIN for s in vstat))
                out.append(PullbackComponent(
                    word=tuple(ch.tree.branch_word(m, int(node))),
                    m=m,
                    base=ch.label,
                    inside=inner,
                    center=complex(P[r, m]),
                    radius=float(couple.r_V[ch.label] * math.exp(-lg) * K[ch.label]) if np.isfinite(lg) else math.inf,
                    log_deriv=-lg,
                    univalent=bs == CLEAR,
                    uncertain=bool(uncertain),
                    bad_chain=bs == HIT and earlier_all_hit,
                    first_good=bs == CLEAR and earlier_all_hit,
                    visits=visits,
                    visit_status=vstat,
                ))
    out.sort(key=lambda w: (w.m, w.base, w.word))
    return out


# -- canonical induced map -----------------------------------------------------------

@dataclass
class InducedBranch:
    """One branch phi_W = (f^m|W)^-1 : V^target -> W of the canonical induced map."""

    component: PullbackComponent
    m: int
    target: int
    inside: int
    log_S: float
    log_center: float
    koebe: float
    source: str

    @property
    def S(self) -> float:
        return math.exp(self.log_S)

    def to_json(self) -> dict:
        d = asdict(self)
        d["component"] = self.component.to_json()
        return d

    @classmethod
    def from_json(cls, d: dict) -> "InducedBranch":
        d = dict(d)
        d["component"] = PullbackComponent.from_json(d["component"])
        return cls(**d)


def _family(w: PullbackComponent) -> str:
    if not w.visits:
        return f"Vhat^{w.inside}"
    i = min(w.visits)
    return f"Y[{w.base}:{','.join(map(str, w.word[i:]))}]"


def canonical_branches(components, couple: NiceCouple):
    """First-good-time components as induced branches; uncertain ones apart.

    Returns ``(branches, uncertain)``.
    """
    branches, unsure = [], []
    for w in components:
        if not w.inside_V or not np.isfinite(w.log_deriv):
            continue
        K = couple.koebe(w.base)
        br = InducedBranch(w, w.m, w.base, w.inside, w.log_deriv + math.log(K), w.log_deriv, K, _family(w))
        if w.first_good and not w.uncertain:
            branches.append(br)
        elif w.uncertain and w.univalent is not False and not w.bad_chain:
            unsure.append(br)
    return branches, unsure


# -- two-variable pressure -------------------------------------------------------------

def _log_matrix(branches, t, p, mode, k):
    logA = np.full((k, k), -np.inf)
    for b in branches:
        w = -p * b.m + t * (b.log_S if mode == "sup" else b.log_center)
        logA[b.inside, b.target] = np.logaddexp(logA[b.inside, b.target], w)
    return logA


def _n_labels(branches):
    return 1 + max(max(b.inside, b.target) for b in branches)


def two_variable_pressure(branches, t: float, p: float, n: int | None = None,
                          mode: str = "sup", labels: int | None = None) -> float:
    """Truncated induced pressure (1/n) ln Z_n(t, p), or ln rho for ``n=None``.

    ``mode="sup"`` uses the Koebe-inflated sup bounds S_W; ``mode="center"``
    uses |phi_W'| at the disk centre, the natural point estimate.
    """
    if not branches:
        raise EmptyBranchSet("no branches to sum over")
    if mode not in ("sup", "center"):
        raise ValueError(f"unknown mode {mode!r}")
    k = labels or _n_labels(branches)
    logA = _log_matrix(branches, t, p, mode, k)
    s = float(np.max(logA))
    A = np.exp(logA - s)
    if n is None:
        rho = float(np.max(np.abs(np.linalg.eigvals(A))))
        return math.log(rho) + s if rho > 0 else -math.inf
    if n < 1:
        raise ValueError("n must be >= 1")
    v = np.ones(k)
    acc = 0.0
    for _ in range(n):
        v = A @ v
        nv = float(v.sum())
        if nv == 0:
            return -math.inf
        acc += math.log(nv)
        v = v / nv
    return acc / n + s


def gelfand_check(branches, t: float, p: float, ns=(1, 2, 4, 8, 16, 32, 64), mode: str = "sup") -> dict:
    """Fit C in |(1/n) ln Z_n - ln rho| <= C/n over the given n."""
    rho = two_variable_pressure(branches, t, p, None, mode)
    gaps = [abs(two_variable_pressure(branches, t, p, n, mode) - rho) for n in ns]
    C = max(g * n for g, n in zip(gaps, ns))
    return {"log_rho": rho, "gaps": gaps, "C": C,
            "passed": all(g <= C / n + 1e-12 for g, n in zip(gaps, ns))}


@dataclass
class TailProfile:
    k: np.ndarray
    a: np.ndarray
    eps0: float
    intercept: float
    max_residual: float
    fit_range: tuple


def tail_profile(branches, t: float, p: float, M: int | None = None, mode: str = "sup") -> TailProfile:
    """a_k = sum over m_W >= k of exp(-p m_W) S_W^t, with a log-linear fit.

    The fit uses orders from the first populated one up to 3/4 of the way to
    M; the last quarter is bent down by truncation.
    """
    if not branches:
        raise EmptyBranchSet("no branches")
    M = M or max(b.m for b in branches)
    per = np.full(M + 2, -np.inf)
    for b in branches:
        w = -p * b.m + t * (b.log_S if mode == "sup" else b.log_center)
        per[b.m] = np.logaddexp(per[b.m], w)
    ks = np.arange(1, M + 2)
    loga = np.array([np.logaddexp.reduce(per[k:]) if np.any(np.isfinite(per[k:])) else -np.inf for k in ks])
    a = np.exp(loga)
    k0 = int(min(b.m for b in branches))
    k1 = max(k0 + 1, k0 + int(0.75 * (M - k0)))
    sel = (ks >= k0) & (ks <= k1) & np.isfinite(loga)
    if sel.sum() < 2:
        return TailProfile(ks, a, math.nan, math.nan, math.nan, (k0, k1))
    slope, icpt = np.polyfit(ks[sel], loga[sel], 1)
    res = float(np.max(np.abs(loga[sel] - (slope * ks[sel] + icpt))))
    return TailProfile(ks, a, float(-slope), float(icpt), res, (k0, k1))


def vanishing_check(branches, curve: PressureCurve, t: float, mode: str = "sup",
                    M: int | None = None) -> dict:
    """Induced pressure at (t, P(t)) with its bias band.

    The Koebe slack |t| ln K bounds how far the sup bounds can sit above the
    true branch derivatives; the truncation deficit is the extrapolated tail
    beyond order M relative to the retained mass.
    """
    p = curve.value(t)
    res = two_variable_pressure(branches, t, p, None, mode)
    K = max(b.koebe for b in branches)
    tp = tail_profile(branches, t, p, M, mode)
    M = M or max(b.m for b in branches)
    deficit = 0.0
    if np.isfinite(tp.eps0) and tp.eps0 > 0:
        missing = math.exp(tp.intercept - tp.eps0 * (M + 1)) / (1 - math.exp(-tp.eps0))
        deficit = math.log1p(missing / tp.a[0]) if tp.a[0] > 0 else math.inf
    return {
        "t": t,
        "p": p,
        "residual": res,
        "residual_center": two_variable_pressure(branches, t, p, None, "center"),
        "mode": mode,
        "koebe_slack": abs(t) * math.log(K),
        "truncation_deficit": deficit,
        "band": (-abs(t) * math.log(K) if mode == "sup" else -deficit, deficit),
    }


# -- bad pull-backs and the decomposition -----------------------------------------------

@dataclass
class BadPullbackCount:
    n: int
    count: int
    uncertain: int
    bound: float
    passed: bool


def count_bad_pullbacks(couple: NiceCouple, f: MapSpec, n: int, budget: int = NODE_BUDGET,
                        inflation: float = 1.0) -> BadPullbackCount:
    """Bad iterated pre-images of order n of the disk centres, against the bound.

    A preimage y is bad when every V̂ pull-back started at a visit of its
    forward orbit to V meets a critical value. Uncertain chains are counted
    apart and added to the count before comparing with the bound.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if couple.L < 1:
        raise ValueError("the bound needs L >= 1")
    ncj = len(couple)
    bound = ncj * (2 * couple.L * f.degree * ncj) ** (n / couple.L)
    if f.degree ** n * ncj > budget:
        raise BudgetExceeded(f"order {n} needs {f.degree ** n * ncj} chains")
    count = unsure = 0
    for ch in _build_chains(couple, f, n, budget):
        idx = np.arange(ch.tree.level_size(n))
        _, Lg, lab, dcv = _ancestors(ch, n, idx)
        bad = np.ones(len(idx), dtype=bool)
        maybe = np.zeros(len(idx), dtype=bool)
        for i in range(n):
            sel = lab[:, i] >= 0
            if not sel.any():
                continue
            st = np.full(len(idx), HIT, dtype=np.int8)
            st[sel] = _chain_status(Lg[sel], lab[sel], dcv[sel], i, n, couple, inflation)
            bad &= st != CLEAR
            maybe |= st == UNCERTAIN
        count += int((bad & ~maybe).sum())
        unsure += int((bad & maybe).sum())
    return BadPullbackCount(n, count, unsure, float(bound), bool(count + unsure <= bound))


def decomposition_check(branches) -> dict:
    """Assign each canonical branch to a first-entry or bad-pull-back family.

    A branch with no earlier visit to V goes to the family of the V̂ disk it
    sits in. Otherwise Y is the V̂ pull-back along the chain from the last
    earlier visit, and every V̂ pull-back started at a visit from there on
    must be non-univalent for Y to be a bad pull-back; failures are orphans.
    """
    families: dict = {}
    orphans = []
    for b in branches:
        w = b.component
        fam = _family(w)
        ok = True
        if w.visits:
            i0 = min(w.visits)
            ok = all(s == HIT for i, s in zip(w.visits, w.visit_status) if i >= i0)
        if ok:
            families[fam] = families.get(fam, 0) + 1
        else:
            orphans.append({"word": list(w.word), "m": w.m, "base": w.base})
    return {"branches": len(branches), "families": families, "orphans": orphans,
            "passed": not orphans}


# -- branch tables ------------------------------------------------------------------------

def write_branches(path, couple: NiceCouple, branches, uncertain=()) -> None:
    data = {
        "couple": couple.to_json(),
        "branches": [b.to_json() for b in branches],
        "uncertain": [b.to_json() for b in uncertain],
    }
    Path(path).write_text(json.dumps(data, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def read_branches(path):
    """Inverse of ``write_branches``: (couple json, branches, uncertain)."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return (data["couple"], [InducedBranch.from_json(b) for b in data["branches"]],
            [InducedBranch.from_json(b) for b in data["uncertain"]])
