import math

import numpy as np
import pytest

from conftest import LN2
from ratpress.errors import EmptyInterval, OutOfGrid
from ratpress.spectra import (
    chi_star_range,
    dimension_spectrum,
    integral_means_spectrum,
    legendre_pair_check,
    lyapunov_spectrum,
    write_csv,
)


def test_lyapunov_power_map(curve):
    s = lyapunov_spectrum(curve("z2"), LN2)
    assert s.value == pytest.approx(1, abs=0.02)


def test_lyapunov_power_map_off_slope_is_degenerate(curve):
    s = lyapunov_spectrum(curve("z2"), 2 * LN2)
    assert s.tag == "degenerate" and s.value == -math.inf


def test_lyapunov_chebyshev(curve):
    c = curve("cheb")
    lo = lyapunov_spectrum(c, LN2)
    assert lo.value == pytest.approx(1, abs=0.02)
    hi = lyapunov_spectrum(c, 2 * LN2)
    assert hi.value == pytest.approx(0, abs=0.02)
    assert hi.tag == "boundary"
    assert "hypotheses not met" in hi.note


def test_lyapunov_escape_raises(curve):
    with pytest.raises(OutOfGrid):
        lyapunov_spectrum(curve("cheb"), 3 * LN2)
    with pytest.raises(ValueError):
        lyapunov_spectrum(curve("cheb"), -1)


@pytest.mark.parametrize("name, alpha, expected", [("z2", 1, 1), ("cheb", 1, 1), ("cheb", 0.5, 0)])
def test_dimension_spectrum(curve, name, alpha, expected):
    assert dimension_spectrum(curve(name), alpha, 2).value == pytest.approx(expected, abs=0.02)


def test_dimension_alpha_bound(curve):
    with pytest.raises(ValueError):
        dimension_spectrum(curve("z2"), 1.5, 2)


def test_integral_means(curve):
    z = curve("z2")
    assert max(abs(integral_means_spectrum(z, t, 2)) for t in z.t) <= 0.02
    c = curve("cheb")
    assert integral_means_spectrum(c, 1, 2) == pytest.approx(0, abs=0.02)
    assert integral_means_spectrum(c, -2, 2) == pytest.approx(1, abs=0.05)


def test_integral_means_convex(curve):
    c = curve("c01")
    beta = np.array([integral_means_spectrum(c, t, 2) for t in c.t])
    assert np.all(np.diff(beta, 2) >= -1e-9)


def test_chi_star(curve):
    z = chi_star_range(curve("z2"))
    assert z["degenerate"]
    assert z["chi_star_inf"] == pytest.approx(LN2, abs=0.02)
    assert z["chi_star_sup"] == pytest.approx(LN2, abs=0.02)
    c = chi_star_range(curve("c01"))
    assert c["chi_star_sup"] - c["chi_star_inf"] > c["tolerance"]
    ch = chi_star_range(curve("cheb"))
    assert ch["degenerate"] and ch["notes"]
    assert ch["chi_star_inf"] == pytest.approx(LN2, abs=0.02)


def test_chi_star_empty(curve):
    c = curve("z2")
    sub = type(c)(c.t[:2], c.P[:2], c.raw[:2], c.unc[:2], c.chi_inf, c.chi_sup, {}, c.source[:2])
    with pytest.raises(EmptyInterval):
        chi_star_range(sub)


@pytest.mark.parametrize("name", ["z2", "cheb", "c01", "zi"])
def test_legendre_pair(curve, name):
    rep = legendre_pair_check(curve(name))
    assert rep["passed"]
    if name == "z2":
        assert rep["double_conjugate_residual"] <= 1e-10


@pytest.mark.parametrize("name", ["c01", "zi"])
def test_interior_samples_consistent(curve, name):
    c = curve(name)
    cs = chi_star_range(c)
    for alpha in np.linspace(cs["chi_star_inf"], cs["chi_star_sup"], 6)[1:-1]:
        s = lyapunov_spectrum(c, alpha)
        assert s.tag == "interior"
        assert c.t[0] <= s.minimizer_t <= c.t[-1]
        assert alpha * s.value == pytest.approx(c.value(s.minimizer_t) + alpha * s.minimizer_t, abs=1e-9)
        assert 0 <= s.value <= 2


def test_csv(tmp_path, curve):
    path = tmp_path / "l.csv"
    write_csv([lyapunov_spectrum(curve("z2"), LN2)], path)
    lines = path.read_text().splitlines()
    assert len(lines) == 2 and lines[0].split(",")[0]
