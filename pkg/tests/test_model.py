import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kmfg.grid import ConfigError, build_grid
from kmfg.model import (
    M0Spec,
    ModelSpec,
    build_initial_density,
    check_growth_bounds,
    fenchel_conjugate_numeric,
)


def test_F_quadratic_values():
    ms = ModelSpec()
    assert ms.F_val(3.0) == pytest.approx(4.5)
    assert ms.f_val(3.0) == pytest.approx(3.0)
    assert ms.F_val(0.0) == 0.0
    assert ms.f_val(0.0) == 0.0


def test_F_negative_is_infinite():
    ms = ModelSpec()
    assert ms.F_val(-1.0) == np.inf


def test_F_star_quadratic():
    ms = ModelSpec()
    assert ms.F_star(2.0) == pytest.approx(2.0)
    assert ms.F_star(-5.0) == 0.0


def test_F_star_matches_numeric_conjugate():
    ms = ModelSpec(q=3.0, c_F=2.0)
    got = ms.F_star(1.0)
    want = fenchel_conjugate_numeric(lambda m: ms.F_val(m), 1.0, 0.0, 10.0)
    assert got == pytest.approx(want, abs=1e-6)


def test_G_family():
    ms = ModelSpec()
    assert ms.G_val(1.0) == pytest.approx(0.5)
    assert ms.g_val(1.0) == pytest.approx(1.0)
    assert ms.G_star(-0.3) == 0.0
    ms2 = ModelSpec(c_G=0.5)
    want = fenchel_conjugate_numeric(lambda m: ms2.G_val(m), 1.0, 0.0, 20.0)
    assert ms2.G_star(1.0) == pytest.approx(want, abs=1e-6)


def test_H_L_quadratic_pair():
    ms = ModelSpec()
    p = np.array([1.5])
    assert ms.H_val(p) == pytest.approx(1.125)
    assert ms.L_val(p) == pytest.approx(1.125)
    assert np.allclose(ms.D_pH(p), p)
    assert ms.H_val(np.array([0.0])) == pytest.approx(-ms.C_H)


def test_L_matches_numeric_conjugate_r3():
    ms = ModelSpec(r=3.0)
    want = fenchel_conjugate_numeric(lambda p: ms.H_val(np.array([p])), 1.0, -10.0, 10.0)
    assert ms.L_val(np.array([1.0])) == pytest.approx(want, abs=1e-6)


def test_fenchel_numeric_trivial():
    assert fenchel_conjugate_numeric(lambda m: m * m / 2, 3.0, 0.0, 10.0) == pytest.approx(4.5, abs=1e-8)
    assert fenchel_conjugate_numeric(lambda m: m, 0.5, 0.0, 10.0) == pytest.approx(0.0, abs=1e-12)


def test_fenchel_numeric_cross_check():
    ms = ModelSpec(q=2.5)
    want = ms.F_star(1.3)
    got = fenchel_conjugate_numeric(lambda m: ms.F_val(m), 1.3, 0.0, 10.0)
    assert got == pytest.approx(want, abs=1e-6)


def test_biconjugation_round_trip():
    ms = ModelSpec(q=2.0)
    for m in np.linspace(0.0, 10.0, 5):
        back = fenchel_conjugate_numeric(
            lambda y: fenchel_conjugate_numeric(lambda z: ms.F_val(z), y, 0.0, 20.0),
            m, -1.0, 15.0,
        )
        assert back == pytest.approx(ms.F_val(m), abs=1e-5)


@given(
    p=st.floats(-5, 5), alpha=st.floats(-5, 5),
    r=st.sampled_from([1.5, 2.0, 3.0]), c_H=st.floats(0.3, 3.0),
)
@settings(max_examples=200, deadline=None)
def test_fenchel_young_inequality(p, alpha, r, c_H):
    ms = ModelSpec(r=r, c_H=c_H)
    lhs = ms.H_val(np.array([p])) + ms.L_val(np.array([alpha]))
    assert lhs - p * alpha >= -1e-12


@given(p=st.floats(-5, 5), r=st.sampled_from([1.5, 2.0, 3.0]), c_H=st.floats(0.3, 3.0))
@settings(max_examples=200, deadline=None)
def test_fenchel_young_equality_at_gradient(p, r, c_H):
    ms = ModelSpec(r=r, c_H=c_H)
    alpha = ms.D_pH(np.array([p]))
    lhs = ms.H_val(np.array([p])) + ms.L_val(alpha) - p * alpha[0]
    assert abs(lhs) < 1e-10


@given(b1=st.floats(-10, 10), b2=st.floats(-10, 10))
@settings(max_examples=100, deadline=None)
def test_F_star_monotone_and_zero_below(b1, b2):
    ms = ModelSpec(q=2.5, c_F=1.3)
    lo, hi = min(b1, b2), max(b1, b2)
    assert ms.F_star(lo) <= ms.F_star(hi) + 1e-12
    assert ms.F_star(min(lo, 0.0)) == 0.0
    assert ms.G_star(min(lo, 0.0)) == 0.0


def test_f_is_derivative_of_F():
    ms = ModelSpec(q=2.7, c_F=0.8)
    for m in np.linspace(0.1, 10.0, 25):
        h = 1e-6 * max(1.0, m)
        fd = (ms.F_val(m + h) - ms.F_val(m - h)) / (2 * h)
        assert fd == pytest.approx(ms.f_val(m), rel=1e-6)


@pytest.mark.parametrize(
    "kwargs",
    [dict(q=1.0), dict(s=1.0), dict(s=3.0, q=2.0), dict(r=1.0), dict(c_H=0.0), dict(c_F=-1.0)],
)
def test_bad_exponents_rejected(kwargs):
    with pytest.raises(ConfigError):
        ModelSpec(**kwargs)


def test_initial_density_normalized():
    g = build_grid(1, 16, 16, 4, 1.0, 2.0)
    m0 = build_initial_density(g, M0Spec())
    assert m0.values.sum() * g.cell_volume == pytest.approx(1.0, abs=1e-12)
    assert np.all(m0.values >= 0)


def test_initial_density_two_bumps():
    g = build_grid(1, 32, 16, 4, 1.0, 2.0)
    spec = M0Spec(x_centers=((0.25,), (0.75,)), x_width=0.08)
    m0 = build_initial_density(g, spec)
    assert m0.values.sum() * g.cell_volume == pytest.approx(1.0, abs=1e-12)


def test_initial_density_first_moment():
    g = build_grid(1, 8, 256, 4, 1.0, 2.0)
    sigma = 0.3
    m0 = build_initial_density(g, M0Spec(v_sigma=sigma))
    moment = (np.abs(g.v_nodes)[None, :] * m0.values).sum() * g.cell_volume
    assert moment == pytest.approx(sigma * np.sqrt(2 / np.pi), abs=1e-4)


def test_initial_density_truncation_rejected():
    g = build_grid(1, 8, 8, 4, 1.0, 1.0)
    with pytest.raises(ConfigError):
        build_initial_density(g, M0Spec(v_sigma=0.5))


def test_growth_bounds_report():
    report = check_growth_bounds(ModelSpec())
    assert report["H_bounds_hold"]
    assert report["F_bounds_hold"]
    assert report["G_bounds_hold"]
    assert report["H_tightest_c"] == 1.0
    rng_report = check_growth_bounds(ModelSpec(c_F=0.7, c_G=1.9, c_H=2.2), seed=3)
    assert rng_report["H_bounds_hold"]
    assert rng_report["F_bounds_hold"]
    assert rng_report["G_bounds_hold"]
