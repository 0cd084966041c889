import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kinetic_chain import kinetic
from kinetic_chain.model import DispersionModel, e_minus, e_plus
from kinetic_chain.quadrature import graded_grid

GRID = graded_grid(128, 8)


def field(func, p=0.0):
    return kinetic.KineticField.from_function(func, p, GRID)


def test_constant_is_stationary_at_p0():
    out = kinetic.evolve_kinetic(field(lambda k: 3.0 + 0 * k), 50.0, 0.1)
    assert np.max(np.abs(out.values - 3.0)) < 1e-10
    assert out.t == 50.0


@pytest.mark.parametrize("method", ["trapezoidal", "exponential"])
def test_mass_and_positivity(method):
    f0 = field(lambda k: np.exp(-((k - 0.2) / 0.05) ** 2))
    out = kinetic.evolve_kinetic(f0, 20.0, 0.05, method=method)
    # the exponential integrator is second order, not conservative
    tol = 1e-10 if method == "trapezoidal" else 1e-3
    assert abs(out.integral() - f0.integral()) < tol * abs(f0.integral())
    assert np.min(out.values.real) > -1e-8
    assert np.max(np.abs(out.values.imag)) < 1e-12


def test_second_order_in_dt():
    f0 = field(lambda k: 1 + np.cos(2 * np.pi * k), p=1.0)
    ref = kinetic.evolve_kinetic(f0, 2.0, 0.0025).values
    errs = [np.max(np.abs(kinetic.evolve_kinetic(f0, 2.0, dt).values - ref)) for dt in (0.04, 0.02)]
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.15)


def test_snapshots_match_single_solves():
    f0 = field(lambda k: np.sin(np.pi * k) ** 2, p=0.5)
    snaps = kinetic.evolve_snapshots(f0, [0.0, 0.5, 1.0], 0.05)
    direct = kinetic.evolve_kinetic(f0, 1.0, 0.05)
    assert np.allclose(snaps[-1].values, direct.values, atol=1e-12)
    assert np.array_equal(snaps[0].values, f0.values)
    with pytest.raises(ValueError):
        kinetic.evolve_snapshots(f0, [0.0, 0.33], 0.05)
    with pytest.raises(ValueError):
        kinetic.evolve_kinetic(f0, 1.0, 0.0)


def test_cfl_warning():
    with pytest.warns(UserWarning):
        kinetic.evolve_kinetic(field(lambda k: 1 + 0 * k, p=10.0), 0.2, 0.1)


def test_scattering_is_self_adjoint():
    op = kinetic.KineticOperator(DispersionModel.unpinned(), GRID, 0.0)
    rng = np.random.default_rng(4)
    w = GRID.weights
    for _ in range(10):
        f, g = rng.normal(size=(2, GRID.size))
        assert np.dot(w, op.apply_L(f) * g) == pytest.approx(np.dot(w, f * op.apply_L(g)), abs=1e-10)


def test_mc_trivial_cases():
    one = lambda k: np.ones_like(k)  # noqa: E731
    mean, se = kinetic.mc_solution(one, 0.0, 0.2, 3.0, 1000, 1)
    assert mean == 1 and se == 0
    w0 = lambda k: np.cos(2 * np.pi * k)  # noqa: E731
    mean, _ = kinetic.mc_solution(w0, 1.0, 0.2, 0.0, 1000, 1)
    assert mean == pytest.approx(np.cos(0.4 * np.pi))
    with pytest.raises(ValueError):
        kinetic.mc_solution(one, 1.0, 0.2, 1.0, 10, 1)


def test_mc_agrees_with_solver():
    w0 = lambda k: 1 + 0.5 * np.cos(2 * np.pi * k)  # noqa: E731
    grid = kinetic.default_grid()
    for p, k0, t in [(1.0, 0.2, 1.0), (2.0, -0.35, 0.5)]:
        out = kinetic.evolve_kinetic(kinetic.KineticField.from_function(w0, p, grid), t, 0.005)
        det = np.interp(k0, grid.nodes, out.values.real) + 1j * np.interp(k0, grid.nodes, out.values.imag)
        mean, se = kinetic.mc_solution(w0, p, k0, t, 4000, 7)
        assert abs(mean.real - det.real) < 3.5 * se.real
        assert abs(mean.imag - det.imag) < 3.5 * se.imag
        # path representation bound by sup|W0|
        assert abs(mean) <= 1.5 + 1e-12


def test_semigroup_decay():
    f1 = lambda k: e_plus(k) - e_minus(k)  # noqa: E731
    res = kinetic.semigroup_decay(f1, 1.0, dt=0.5, grid=kinetic.default_grid())
    assert res["slope"] <= -1.0 + 0.1
    sel = res["times"] >= 10
    ref = res["weighted"][np.argmin(np.abs(res["times"] - 10))]
    assert np.all(res["weighted"][sel] <= 3 * ref)
    assert res["mass_drift"] < 1e-10
    assert np.all(np.diff(res["l1"]) <= 1e-12)


def test_l1_contraction_fourier_mode():
    # f(0) != 0, so only small a keep the weighted norm finite
    f = lambda k: 2 * np.cos(4 * np.pi * k)  # noqa: E731
    with pytest.raises(ArithmeticError):
        kinetic.semigroup_decay(f, 0.5, times=[1.0], dt=0.5, fit_range=(0.5, 1.0))
    res = kinetic.semigroup_decay(f, 0.05, times=[1.0, 2.0, 5.0, 10.0, 20.0], dt=0.5,
                                  grid=kinetic.default_grid(), fit_range=(1.0, 20.0))
    assert np.all(np.diff(res["l1"]) <= 1e-12)


def test_semigroup_input_checks():
    with pytest.raises(ValueError):
        kinetic.semigroup_decay(e_plus, 0.5, times=[1.0], dt=0.5, fit_range=(0.5, 1.0))
    with pytest.raises(ValueError):
        kinetic.semigroup_decay(lambda k: e_plus(k) - e_minus(k), 1.5)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 20), st.floats(-20, 20))
def test_resolvent_factorisation(re, im):
    rec = kinetic.resolvent_system(complex(re, im), GRID)
    assert abs(rec.delta - rec.delta_factored()) < 1e-10 * max(1.0, abs(rec.delta))
    assert rec.delta == pytest.approx(rec.a**2 - rec.a_minus * rec.a_plus)


def test_resolvent_near_zero():
    rec0 = kinetic.resolvent_system(0.0, GRID)
    assert rec0.a == pytest.approx(-rec0.a_minus, abs=1e-10)
    assert rec0.a == pytest.approx(-rec0.a_plus, abs=1e-10)
    ratios = [abs(kinetic.resolvent_system(lam, GRID).D) for lam in (1e-1, 1e-2, 1e-3)]
    assert max(ratios) < 2 * min(ratios)
    with pytest.raises(ValueError):
        kinetic.resolvent_system(-1.0)


def test_fractional_profile():
    w0 = lambda p: np.exp(-p**2)  # noqa: E731
    assert kinetic.fractional_profile(w0, 0.7, 0.0, 4.5) == pytest.approx(np.exp(-0.49))
    assert kinetic.fractional_profile(w0, 0.0, 9.0, 4.5) == pytest.approx(1.0)
    assert kinetic.fractional_profile(1.0, 2.0, 1.0, 0.5, "gaussian") == pytest.approx(math.exp(-2.0))


def test_charfn_from_kinetic_small_N():
    # Y is symmetric under the stationary start, so the transform is real
    phi = kinetic.charfn_from_kinetic(1.0, 100, 1.0, start="stationary", grid=GRID)
    assert abs(phi.imag) < 1e-10
    assert 0 < phi.real < 1
    assert kinetic.charfn_from_kinetic(0.0, 100, 1.0, grid=GRID) == pytest.approx(1.0)
