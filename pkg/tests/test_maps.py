import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ratpress.errors import BudgetExceeded, EuclideanAtInfinity, InvalidMap
from ratpress.maps import (
    CPoint,
    MapSpec,
    critical_points,
    cycle_multiplier,
    derivative_modulus,
    detect_exceptional,
    evaluate,
    find_periodic_points,
    iterate,
    load_map,
    map_from_json,
)


def test_evaluate_examples(cheb, z2):
    assert evaluate(cheb, 0).same_as(CPoint.from_complex(-2))
    assert evaluate(z2, 1j).same_as(CPoint.from_complex(-1))
    assert evaluate(z2, CPoint.infinity()).is_infinity


def test_rational_pole_maps_to_infinity():
    f = MapSpec((1, 0, 1), (0, 1))  # (1 + z^2) / z
    assert evaluate(f, 0).is_infinity
    assert evaluate(f, CPoint.infinity()).is_infinity


def test_derivative_examples(z2, cheb):
    assert derivative_modulus(z2, 1, "euclidean") == pytest.approx(2)
    assert derivative_modulus(z2, 1, "spherical") == pytest.approx(2)
    assert derivative_modulus(cheb, 2, "euclidean") == pytest.approx(4)


def test_euclidean_at_infinity_raises(z2):
    with pytest.raises(EuclideanAtInfinity):
        derivative_modulus(z2, CPoint.infinity(), "euclidean")


@settings(max_examples=50, deadline=None)
@given(st.complex_numbers(min_magnitude=0.05, max_magnitude=20, allow_nan=False, allow_infinity=False),
       st.complex_numbers(max_magnitude=2, allow_nan=False, allow_infinity=False))
def test_spherical_derivative_is_chart_independent(z, c):
    f = MapSpec.quadratic(c)
    # conjugate by 1/z: g(w) = 1 / f(1/w) is the same map in the other chart
    u = 1 / z
    g = MapSpec((0, 0, 1), (1, 0, c))  # 1 / (1/w^2 + c) = w^2 / (1 + c w^2)
    a = derivative_modulus(f, z, "spherical")
    b = derivative_modulus(g, u, "spherical")
    assert a == pytest.approx(b, rel=1e-9, abs=1e-12)


def test_critical_points_quadratic(zi):
    cd = critical_points(zi)
    vals = [p for p in cd.points]
    assert any(p.same_as(CPoint.from_complex(0)) for p in vals)
    assert any(p.is_infinity for p in vals)
    flags = {p.is_infinity: j for p, j in zip(cd.points, cd.in_julia)}
    assert flags[False] is True and flags[True] is False


def test_critical_points_cube():
    cd = critical_points(MapSpec.polynomial((0, 0, 0, 1)))
    assert sorted(cd.local_degrees) == [3, 3]


@settings(max_examples=25, deadline=None)
@given(st.lists(st.complex_numbers(max_magnitude=2, allow_nan=False, allow_infinity=False),
                min_size=2, max_size=4))
def test_riemann_hurwitz_count(coeffs):
    coeffs = list(coeffs) + [1.0]
    f = MapSpec.polynomial(coeffs)
    cd = critical_points(f)
    assert cd.multiplicity_total() == 2 * f.degree - 2


def test_fixed_points_z2(z2):
    orbits = find_periodic_points(z2, 1)
    by_point = {(round(o.representative.value.real, 9) if not o.representative.is_infinity else "inf"): o
                for o in orbits}
    assert by_point[1.0].classification == "repelling"
    assert abs(by_point[1.0].multiplier) == pytest.approx(2)
    assert by_point[0.0].classification == "attracting"
    assert "inf" in by_point


def test_fixed_points_cheb(cheb):
    orbits = [o for o in find_periodic_points(cheb, 1) if not o.representative.is_infinity]
    mult = sorted(round(o.multiplier.real, 9) for o in orbits)
    assert mult == [-2.0, 4.0]
    assert all(o.repelling for o in orbits)


def test_period_two_z2(z2):
    two = [o for o in find_periodic_points(z2, 2) if o.period == 2]
    assert len(two) == 1
    pts = sorted(np.angle(p.value) for p in two[0].points)
    assert np.allclose(pts, [-2 * np.pi / 3, 2 * np.pi / 3])
    assert abs(two[0].multiplier) == pytest.approx(4)


def test_periodic_budget(z2):
    with pytest.raises(BudgetExceeded):
        find_periodic_points(z2, 12, max_degree=1024)


@pytest.mark.parametrize("c", [0.1, -2, 0.25j, -0.5 + 0.3j])
def test_periodic_invariants(c):
    f = MapSpec.quadratic(c)
    for o in find_periodic_points(f, 4):
        for p in o.points:
            assert iterate(f, p, o.period).same_as(p, 1e-7)
        if o.representative.is_infinity:
            continue
        assert abs(cycle_multiplier(f, o.points)) == pytest.approx(abs(o.multiplier), rel=1e-9, abs=1e-12)


def test_exceptional_chebyshev(cheb):
    ex = detect_exceptional(cheb)
    vals = sorted(p.value.real for p in ex.sigma)
    assert ex.mode == "equality"
    assert vals == pytest.approx([-2, 2])
    assert ex.meets_julia


def test_exceptional_power_map_containment(z2):
    ex = detect_exceptional(z2)
    assert ex.mode == "containment"
    assert sorted("inf" if p.is_infinity else p.value.real for p in ex.sigma if p.is_infinity) == ["inf"]
    assert any(not p.is_infinity and abs(p.value) < 1e-12 for p in ex.sigma)
    assert not ex.meets_julia


def test_exceptional_hyperbolic_has_no_julia_sigma(c01):
    # only the superattracting point at infinity survives, off J
    ex = detect_exceptional(c01)
    assert ex.mode != "equality"
    assert not ex.meets_julia


def test_map_json_roundtrip(tmp_path, zi):
    path = tmp_path / "m.json"
    path.write_text(json.dumps(zi.to_json()))
    g = load_map(path)
    assert g.numerator == zi.numerator and g.denominator == zi.denominator


@pytest.mark.parametrize("data", [
    {"numerator": [[1, 0], [1, 0]]},
    {"numerator": [[0, 0], [1, 0], [1, 0]], "denominator": [[0, 0], [1, 0]]},
    {"numerator": [[1, 0]], "denominator": [[0, 0]]},
    {"numer": [[1, 0]]},
])
def test_invalid_maps(data):
    with pytest.raises(InvalidMap):
        map_from_json(data)


def test_infinity_point():
    p = CPoint.from_complex(complex(math.inf, 0))
    assert p.is_infinity and p.same_as(CPoint.infinity())
