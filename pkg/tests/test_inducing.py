import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ratpress.errors import EmptyBranchSet, NoCriticalPointsInJulia, VerificationFailed
from ratpress.inducing import (
    InducedBranch,
    PullbackComponent,
    _circle,
    canonical_branches,
    count_bad_pullbacks,
    decomposition_check,
    enumerate_components,
    gelfand_check,
    propose_nice_couple,
    read_branches,
    tail_profile,
    two_variable_pressure,
    vanishing_check,
    verify_nice,
    write_branches,
)
from ratpress.maps import MapSpec, chordal, evaluate_array


@pytest.fixture(scope="module")
def zi_branches():
    f = MapSpec.quadratic(1j)
    couple = propose_nice_couple(f, (0.03, 0.08))
    comps = enumerate_components(couple, f, 20, require_verified=False)
    branches, unsure = canonical_branches(comps, couple)
    return f, couple, comps, branches, unsure


def _fake(inside, target, m, log_s):
    w = PullbackComponent((0,) * m, m, target, inside, 0j, 0.01, log_s, True, False, False, True)
    return InducedBranch(w, m, target, inside, log_s, log_s, 1.0, f"Vhat^{inside}")


def test_propose_examples(cheb, zi):
    for f, radii in ((cheb, (0.05, 0.12)), (zi, (0.03, 0.08))):
        couple = propose_nice_couple(f, radii)
        assert len(couple) == 1
        assert abs(couple.center_values[0]) < 1e-12
        assert couple.r_V[0] / couple.r_Vhat[0] <= 0.5


def test_propose_errors(z2, cheb):
    with pytest.raises(NoCriticalPointsInJulia):
        propose_nice_couple(z2, (0.05, 0.12))
    with pytest.raises(ValueError):
        propose_nice_couple(cheb, (1.9, 2.2))
    with pytest.raises(ValueError):
        propose_nice_couple(cheb, (0.1, 0.12))
    with pytest.raises(ValueError):
        propose_nice_couple(cheb, (0.2, 0.1))


def test_L_for_chebyshev(cheb):
    # the critical orbit 0 -> -2 -> 2 -> 2 ... never re-enters V̂
    assert propose_nice_couple(cheb, (0.05, 0.12), L_max=30).L == 30


def test_boundary_circle_radius(zi):
    c = propose_nice_couple(zi, (0.03, 0.08)).centers[0]
    z = _circle(c, 0.03, np.linspace(0, 2 * np.pi, 50))
    assert np.allclose(chordal(z, c.value), 0.03)


@pytest.mark.parametrize("c, radii, n_fail", [(1j, (0.03, 0.08), 13), (-2, (0.05, 0.12), 6)])
def test_rejection_has_a_real_witness(c, radii, n_fail):
    f = MapSpec.quadratic(c)
    couple = propose_nice_couple(f, radii)
    with pytest.raises(VerificationFailed) as exc:
        verify_nice(couple, f, N=200)
    assert exc.value.n == n_fail
    # independent replay: the reported sample really lands in V̂ at step n
    z = _circle(couple.centers[0], radii[0], np.array([exc.value.sample]))
    for _ in range(n_fail):
        z = evaluate_array(f, z)
    assert chordal(z[0], 0) < radii[1]
    assert not couple.verified


def test_short_verification_accepts(cheb):
    couple = propose_nice_couple(cheb, (0.05, 0.12))
    rep = verify_nice(couple, cheb, N=5)
    assert rep.accepted and rep.margin > 0
    assert couple.verified and couple.depth == 5
    assert rep.max_separation <= rep.margin / 4


def test_report_without_raising(zi):
    couple = propose_nice_couple(zi, (0.03, 0.08))
    rep = verify_nice(couple, zi, N=20, raise_on_failure=False)
    assert not rep.accepted and rep.failure["n"] == 13


def test_enumeration_edge_cases(cheb):
    couple = propose_nice_couple(cheb, (0.05, 0.12))
    with pytest.raises(ValueError):
        enumerate_components(couple, cheb, 3)
    verify_nice(couple, cheb, N=5)
    assert enumerate_components(couple, cheb, 0) == []
    comps = enumerate_components(couple, cheb, 3)
    assert [w for w in comps if w.inside_V] == []


def test_budget_truncates(zi):
    couple = propose_nice_couple(zi, (0.03, 0.08))
    with pytest.warns(UserWarning):
        comps = enumerate_components(couple, zi, 20, budget=2**12, require_verified=False)
    assert comps.incomplete


def test_zi_enumeration(zi_branches):
    f, couple, comps, branches, unsure = zi_branches
    assert len(comps) > 0 and len(branches) > 0
    assert min(w.m for w in comps) >= 4
    for b in branches:
        assert b.m >= 1 and b.S > 0
        z = np.array([b.component.center])
        for _ in range(b.m):
            z = evaluate_array(f, z)
        # f^m maps the centre of W back to the centre of the base disk
        assert chordal(z[0], couple.center_values[b.target]) < 1e-6
        assert chordal(b.component.center, couple.center_values[b.inside]) < couple.r_V[b.inside]


def test_branch_invariants(zi_branches):
    *_, branches, unsure = zi_branches
    assert all(b.component.first_good and b.component.univalent for b in branches)
    assert all(not b.component.bad_chain for b in branches)
    assert all(b.log_S == pytest.approx(b.log_center + math.log(b.koebe)) for b in branches)


def test_complete_graph_pressure():
    k = 3
    branches = [_fake(i, j, 1, 0.0) for i in range(k) for j in range(k)]
    for t, p in ((0, 0), (1.5, 0.4), (-2, 1)):
        assert two_variable_pressure(branches, t, p) == pytest.approx(math.log(k) - p)
        # k^(n+1) admissible words of n letters
        assert two_variable_pressure(branches, t, p, n=8) == pytest.approx(math.log(k) * 9 / 8 - p)


def test_single_loop_pressure():
    # one branch of return time 2 and derivative bound e^-3: ln rho = -3t - 2p
    b = [_fake(0, 0, 2, -3.0)]
    assert two_variable_pressure(b, 0.7, 0.1) == pytest.approx(-2.1 - 0.2)


def test_pressure_errors():
    with pytest.raises(EmptyBranchSet):
        two_variable_pressure([], 1, 0)
    with pytest.raises(ValueError):
        two_variable_pressure([_fake(0, 0, 1, 0.0)], 1, 0, mode="mean")


@settings(max_examples=25, deadline=None)
@given(st.floats(0.5, 2), st.floats(-1, 1), st.floats(0.01, 1))
def test_pressure_decreasing_in_p(zi_branches, t, p, dp):
    branches = zi_branches[3]
    assert two_variable_pressure(branches, t, p + dp) < two_variable_pressure(branches, t, p)


def test_gelfand(zi_branches):
    assert gelfand_check(zi_branches[3], 1.28, 0.0)["passed"]


def test_tail_profile(zi_branches):
    tp = tail_profile(zi_branches[3], 1.28, 0.0, M=20)
    assert np.all(np.diff(tp.a) <= 1e-15)
    assert tp.a[0] > 0 and np.isfinite(tp.eps0)


def test_vanishing_report(zi_branches, curve):
    c = curve("zi")
    rep = vanishing_check(zi_branches[3], c, c.t_star)
    assert set(rep) >= {"residual", "residual_center", "koebe_slack", "truncation_deficit", "band"}
    # sup bounds dominate centre values
    assert rep["residual"] >= rep["residual_center"]


def test_bad_pullbacks(zi_branches, zi):
    couple = zi_branches[1]
    for n in (1, 4, 8):
        r = count_bad_pullbacks(couple, zi, n)
        assert r.passed and r.count + r.uncertain <= r.bound
    with pytest.raises(ValueError):
        count_bad_pullbacks(couple, zi, 0)


def test_decomposition(zi_branches):
    rep = decomposition_check(zi_branches[3])
    assert rep["passed"] and rep["orphans"] == []
    assert sum(rep["families"].values()) == rep["branches"]
    assert decomposition_check([]) == {"branches": 0, "families": {}, "orphans": [], "passed": True}


def test_branch_file_roundtrip(tmp_path, zi_branches):
    _, couple, _, branches, unsure = zi_branches
    path = tmp_path / "b.json"
    write_branches(path, couple, branches[:50], unsure)
    cj, b2, u2 = read_branches(path)
    assert cj == couple.to_json()
    assert b2 == branches[:50] and u2 == list(unsure)
