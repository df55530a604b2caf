import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import LN2
from ratpress.errors import NoZeroInGrid, OutOfGrid
from ratpress.pressure import (
    asymptote_check,
    check_shape,
    convexify,
    first_zero,
    pressure_derivative,
    second_difference,
    second_difference_uncertainty,
    summary_json,
    write_csv,
)


def test_convexify_identity():
    t = np.linspace(-1, 1, 11)
    y = t**2 - 3 * t
    out, shift = convexify(t, y)
    assert np.allclose(out, y) and shift == pytest.approx(0, abs=1e-12)


def test_convexify_removes_bump():
    t = np.linspace(0, 2, 21)
    y = 1 - 0.5 * t
    bumped = y.copy()
    bumped[10] += 0.1
    out, shift = convexify(t, bumped)
    assert np.allclose(out, y)
    assert out[0] == bumped[0] and out[-1] == bumped[-1]
    assert shift == pytest.approx(0.1)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=3, max_size=40))
def test_convexify_properties(vals):
    t = np.arange(len(vals), dtype=float) * 0.1
    out, shift = convexify(t, vals)
    s = np.diff(out) / np.diff(t)
    assert np.all(np.diff(s) >= -1e-9)
    assert np.all(np.diff(out) <= 1e-12)
    assert np.all(out <= np.asarray(vals) + 1e-12)
    assert shift == pytest.approx(np.max(np.abs(out - np.asarray(vals))))


def test_power_map_curve(curve):
    c = curve("z2")
    assert np.max(np.abs(c.P - (1 - c.t) * LN2)) <= 0.02


def test_chebyshev_curve(curve):
    c = curve("cheb")
    ref = np.maximum((1 - c.t) * LN2, -2 * c.t * LN2)
    keep = np.abs(c.t + 1) >= 0.1
    assert np.max(np.abs(c.P - ref)[keep]) <= 0.05


def test_chebyshev_single_kink(curve):
    c = curve("cheb")
    s = np.diff(c.P) / np.diff(c.t)
    jumps = np.flatnonzero(np.diff(s) > 0.1)
    assert len(jumps) >= 1
    assert np.all(np.abs(c.t[jumps + 1] + 1) <= 0.1 + 1e-9)


def test_cross_estimators_hyperbolic(curve):
    c = curve("c01")
    sel = (c.t >= -1e-9) & (c.t <= 2 + 1e-9)
    tree = np.median([v for k, v in c.estimates.items() if k.startswith("tree")], axis=0)
    per = [v for k, v in c.estimates.items() if k.startswith("periodic")][0]
    assert np.max(np.abs(tree - per)[sel]) <= 0.01


def test_slopes_power_map(curve):
    c = curve("z2")
    for t in c.t[1:-1]:
        left, right = pressure_derivative(c, t)
        assert left == pytest.approx(-LN2, abs=0.02)
        assert right == pytest.approx(-LN2, abs=0.02)


@pytest.mark.parametrize("t, slope", [(-2, -2 * LN2), (0, -LN2)])
def test_slopes_chebyshev(curve, t, slope):
    left, right = pressure_derivative(curve("cheb"), t)
    assert left == pytest.approx(slope, abs=0.05)
    assert right == pytest.approx(slope, abs=0.05)


def test_derivative_out_of_grid(curve):
    with pytest.raises(OutOfGrid):
        pressure_derivative(curve("z2"), 3)


def test_transitions(curve):
    z2, ch = curve("z2"), curve("cheb")
    assert z2.t_minus == -math.inf and z2.t_plus == math.inf
    assert abs(ch.t_minus + 1) <= 0.1
    assert ch.t_plus == math.inf
    assert ch.chi_sup == pytest.approx(2 * LN2, abs=0.01)


@pytest.mark.parametrize("name, expected, tol", [
    ("z2", 1.0, 1e-3),
    ("c01", 1 + 0.01 / (4 * LN2), 5e-3),
    ("cheb", 1.0, 1e-2),
])
def test_first_zero(curve, name, expected, tol):
    assert abs(first_zero(curve(name)) - expected) <= tol


def test_first_zero_absent(curve):
    c = curve("z2")
    sub = type(c)(c.t[:4], c.P[:4], c.raw[:4], c.unc[:4], c.chi_inf, c.chi_sup, {}, c.source[:4])
    with pytest.raises(NoZeroInGrid):
        first_zero(sub)


def test_asymptotes(curve):
    assert asymptote_check(curve("z2"))["vacuous"]
    rep = asymptote_check(curve("cheb"))
    rows = {round(r["t"], 6): r for r in rep["rows"]}
    assert abs(rows[-2.0]["P"] - 4 * LN2) <= 0.05
    assert abs(rows[-1.5]["P"] - 3 * LN2) <= 0.05
    # the finite-period sum rounds the kink off; away from it every row passes
    assert all(r["passed"] for r in rep["rows"] if abs(r["t"] + 1) >= 0.1)


def test_second_difference_dichotomy(curve):
    h = 0.25
    c = curve("c01")
    assert second_difference(c, 1, h) > 2 * second_difference_uncertainty(c, 1, h)
    z = curve("z2")
    assert second_difference(z, 1, h) <= 2 * second_difference_uncertainty(z, 1, h)
    ch = curve("cheb")
    assert second_difference(ch, 0, h) <= 2 * second_difference_uncertainty(ch, 0, h)


def test_second_difference_out_of_grid(curve):
    with pytest.raises(OutOfGrid):
        second_difference(curve("z2"), 2.9, 0.25)


@pytest.mark.parametrize("name", ["z2", "cheb", "c01", "zi"])
def test_curve_invariants(curve, name):
    c = curve(name)
    assert all(check_shape(c).values())
    p0 = c.value(0)
    assert abs(p0 - LN2) <= 0.05
    floor = np.maximum(-c.t * c.chi_inf, -c.t * c.chi_sup)
    assert np.all(c.P >= floor - c.unc - 0.05)
    if np.isfinite(c.t_minus):
        assert c.t_minus < 0
    if c.t_star is not None and not math.isnan(c.t_plus):
        assert c.t_plus >= c.t_star - 1e-2
    left, right = c.slopes()
    inner = slice(1, -1)
    assert np.all(-right[inner] >= c.chi_inf - 0.05)
    assert np.all(-left[inner] <= c.chi_sup + 0.05)


def test_csv_and_summary(tmp_path, curve):
    c = curve("z2")
    path = tmp_path / "p.csv"
    write_csv(c, path)
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "P", "P_lo", "P_hi", "slope_left", "slope_right", "source"]
    assert len(rows) == len(c.t) + 1
    s = json.loads(summary_json(c))
    assert set(s) == {"chi_inf", "chi_sup", "t_minus", "t_plus", "t_star", "exceptional"}
    assert s["t_minus"] == "-inf" and s["t_plus"] == "inf"
