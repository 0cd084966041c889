import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kinetic_chain import limits
from kinetic_chain.model import DispersionModel, e_plus, r_sum
from kinetic_chain.quadrature import torus_grid

UNPINNED = DispersionModel.unpinned()
PINNED = DispersionModel.pinned(1.0)


@pytest.fixture(scope="module")
def tail():
    return limits.tail_constant(UNPINNED)


def test_psi_examples():
    assert limits.psi_observable(UNPINNED, 0.5) == pytest.approx(0.0, abs=1e-14)
    assert limits.psi_observable(UNPINNED, 0.25) == pytest.approx(math.pi * math.sqrt(2) / 2)
    k = np.random.default_rng(0).uniform(-0.5, 0.5, 1000)
    for m in (UNPINNED, PINNED):
        assert np.max(np.abs(limits.psi_observable(m, -k) + limits.psi_observable(m, k))) < 1e-12
    with pytest.raises(ValueError):
        limits.psi_observable(UNPINNED, 0.0)


def test_tail_function_against_bisection():
    from scipy.optimize import bisect

    lam = 300.0
    edge = bisect(lambda k: limits.psi_observable(UNPINNED, k) - lam, 1e-6, 0.1, xtol=1e-14)
    g = torus_grid()
    mass = g.integrate(np.where((g.nodes > 0) & (g.nodes < edge), 0.5 * r_sum(g.nodes), 0.0))
    exact = limits._pi_mass(0.0, edge)
    assert limits.tail_function(UNPINNED, lam) == pytest.approx(exact, rel=1e-10)
    assert mass == pytest.approx(exact, rel=1e-2)
    with pytest.raises(ValueError):
        limits.tail_function(UNPINNED, 0.5)


def test_tail_scaling(tail):
    scaled = [lam**1.5 * limits.tail_function(UNPINNED, lam) for lam in (1e2, 1e3, 1e4)]
    assert np.ptp(scaled) / np.mean(scaled) < 0.01
    assert tail.c_plus == pytest.approx(tail.c_minus, rel=1e-10)
    assert tail.c_plus == pytest.approx(4 * math.sqrt(math.pi) / 3**2.5, rel=1e-6)
    assert tail.leading_order == pytest.approx(tail.c_plus, rel=1e-6)
    # the closed formula is a reference only and does not agree
    assert tail.formula == pytest.approx(2 ** -0.25 * 3 ** -2.5 * math.sqrt(math.pi) * (8 * math.pi**2) ** 0.75)
    assert tail.formula / tail.c_plus == pytest.approx(math.pi**1.5, rel=1e-6)


def test_pinned_tail_bounded():
    scaled = [lam**3 * limits.tail_function(PINNED, lam) for lam in (1e2, 1e3, 1e4)]
    assert max(scaled) < 2 * min(scaled)
    with pytest.raises(ValueError):
        limits.tail_constant(PINNED)


def test_theta_tail_index():
    assert limits.theta_tail_index() == pytest.approx(1.5, abs=0.01)


def test_levy_exponent_examples():
    assert limits.levy_exponent(0.0, 1.5, 1.0, 1.0) == 0
    psi = limits.levy_exponent(0.7, 1.5, 0.3, 0.3)
    assert abs(psi.imag) < 1e-10
    assert psi.real == pytest.approx(2**1.5 * math.sqrt(math.pi) * 0.3 * 0.7**1.5, rel=1e-8)
    with pytest.raises(ValueError):
        limits.stable_integrals(2.5)


@settings(max_examples=30, deadline=None)
@given(st.floats(-20, 20), st.floats(1.05, 1.95), st.floats(0, 2), st.floats(0, 2))
def test_levy_exponent_nonnegative_real_part(p, alpha, cp, cm):
    psi = limits.levy_exponent(p, alpha, cp, cm)
    assert psi.real >= 0
    # homogeneity of degree alpha
    if p != 0:
        psi2 = limits.levy_exponent(2 * p, alpha, cp, cm)
        assert abs(psi2 - 2**alpha * psi) <= 1e-9 * (1 + abs(psi2))


def test_levy_exponent_against_direct_quadrature():
    from scipy import integrate

    alpha, cp, cm, p = 1.5, 0.4, 0.1, 1.3
    f_re = lambda u: (1 - math.cos(u * p)) / u ** (1 + alpha)  # noqa: E731
    f_im = lambda u: (u * p - math.sin(u * p)) / u ** (1 + alpha)  # noqa: E731
    head_re = integrate.quad(f_re, 0, 200, limit=2000)[0]
    head_im = integrate.quad(f_im, 0, 200, limit=2000)[0]
    # analytic tails beyond 200: 1/u^(1+a) part only, the oscillatory rest is below 1e-4
    re = alpha * (cp + cm) * (head_re + 200 ** -alpha / alpha)
    im = alpha * (cp - cm) * (head_im + p * 200 ** (1 - alpha) / (alpha - 1))
    psi = limits.levy_exponent(p, alpha, cp, cm)
    assert psi.real == pytest.approx(re, rel=1e-4)
    assert psi.imag == pytest.approx(im, rel=1e-4)


def test_pipeline_pieces(tail):
    assert limits.sine_power_integral() == pytest.approx(4 * math.sqrt(math.pi) / 3, abs=1e-8)
    pipe = limits.stable_c_hat_pipeline(UNPINNED, "renewal", tail)
    assert pipe["gamma"] == pytest.approx(3 * math.sqrt(math.pi) / 4)
    assert pipe["theta_bar"] == pytest.approx(2 / 3, rel=1e-10)
    alt = limits.stable_c_hat_pipeline(UNPINNED, "alpha", tail)
    assert alt["c_hat"] / pipe["c_hat"] == pytest.approx(1.5**0.5, rel=1e-10)
    assert pipe["c_hat"] == pytest.approx(4.5465, abs=1e-3)


def test_formula_constant():
    assert limits.stable_c_hat_formula(UNPINNED) == pytest.approx(2**1.5 * math.pi**3)
    doubled = DispersionModel.custom(0.0, [-2.0])
    assert limits.stable_c_hat_formula(doubled) / limits.stable_c_hat_formula(UNPINNED) == pytest.approx(2**0.75)
    with pytest.raises(ValueError):
        limits.stable_c_hat_formula(PINNED)


def test_poisson_odd_observable():
    psi = lambda k: limits.psi_observable(PINNED, k)  # noqa: E731
    sol = limits.poisson_solve(psi)
    assert abs(sol.c_minus) < 1e-12 and abs(sol.c_plus) < 1e-12
    g = torus_grid(1024)
    assert np.max(np.abs(sol.P_chi(g.nodes))) < 1e-12


@pytest.mark.parametrize(
    "f",
    [
        lambda k: e_plus(k) - 25 / 18,
        lambda k: np.cos(2 * np.pi * k),
    ],
    ids=["e_plus", "cosine"],
)
def test_poisson_even_observable(f):
    g = torus_grid()
    pi_w = 0.5 * r_sum(g.nodes) * g.weights
    mean = np.dot(pi_w, f(g.nodes))
    centred = lambda k: f(k) - mean  # noqa: E731
    sol = limits.poisson_solve(centred)
    assert abs(sol.c_minus) + abs(sol.c_plus) > 1e-3
    # residual with P applied by quadrature on a 4096-node grid
    h = torus_grid(1024)
    chi = sol(h.nodes)
    resid = chi - limits.apply_P(chi, h.nodes, h.weights) - centred(h.nodes)
    assert np.max(np.abs(resid)) < 1e-10
    assert np.max(np.abs(sol(g.nodes) - sol.P_chi(g.nodes) - centred(g.nodes))) < 1e-12
    assert abs(np.dot(pi_w, sol(g.nodes))) < 1e-10


def test_poisson_requires_zero_mean():
    with pytest.raises(ValueError):
        limits.poisson_solve(lambda k: e_plus(k))


def test_sigma_sq():
    s = limits.sigma_sq(PINNED)
    assert s["sigma_sq"] > 0
    assert s["sigma_sq"] == pytest.approx(s["shortcut"], rel=1e-10)
    c = limits.gaussian_c_hats(PINNED)
    assert c["nine_sigma_sq"] == pytest.approx(9 * s["sigma_sq"])
    assert c["two_theta_sq"] == pytest.approx(2 * s["sigma_sq"] / (4 / 9))
    assert c["renewal"] == pytest.approx(3 * s["sigma_sq"])
    with pytest.raises(ValueError):
        limits.sigma_sq(UNPINNED)


def test_limit_constants_record():
    lc = limits.limit_constants()
    d = lc.to_dict()
    for key in ("c_star_plus", "c_hat_formula", "c_hat_pipeline", "theta_bar", "sigma_sq"):
        assert np.isfinite(d[key]) and key in d["notes"]
    assert d["notes"]["alpha2_measured"] == pytest.approx(1.5, abs=0.01)
