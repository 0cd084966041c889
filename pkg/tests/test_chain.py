import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from kinetic_chain import chain
from kinetic_chain.model import R_total, e_minus, e_plus, r_sum, theta
from kinetic_chain.quadrature import torus_grid
from kinetic_chain.rng import stream

torus = st.floats(-0.5, 0.5, allow_nan=False, exclude_max=True).filter(lambda k: abs(k) > 1e-6)


def rng(i=0, domain="test-chain"):
    return stream(2024, i, domain)


@pytest.mark.parametrize("iota,rate", [(1, 3 / 8), (-1, 1 / 2)])
def test_acceptance_rate(iota, rate):
    n = 10**6
    _, proposals = chain.sample_basis_many(iota, rng(1), n)
    assert n / proposals == pytest.approx(rate, rel=0.01)


def test_basis_density_fourier_moment():
    out, _ = chain.sample_basis_many(1, rng(2), 10**6)
    g = torus_grid()
    target = g.integrate(e_plus(g.nodes) * np.cos(8 * np.pi * g.nodes))
    c = np.cos(8 * np.pi * out)
    assert abs(c.mean() - target) < 3 * c.std() / np.sqrt(c.size)


def test_stationary_sampler():
    n = 10**5
    k = chain.sample_stationary_many(rng(3), n)
    assert np.all((k >= -0.5) & (k < 0.5)) and np.all(k != 0)
    assert stats.kstest(k, chain.stationary_cdf).statistic < 1.63 / np.sqrt(n)
    assert abs(np.mean(k > 0) - 0.5) < 3 * 0.5 / np.sqrt(n)
    assert chain.sample_stationary(rng(4)) != 0


def test_mean_holding_time_under_pi():
    # theta has infinite variance under pi, so use a median-of-means check
    k = chain.sample_stationary_many(rng(5), 10**6)
    blocks = theta(k).reshape(100, -1).mean(axis=1)
    assert np.median(blocks) == pytest.approx(2 / 3, rel=0.03)


def test_stationary_cdf_matches_quadrature():
    g = torus_grid()
    x = np.linspace(-0.5, 0.5, 21)
    q = [g.integrate(np.where(g.nodes < a, 0.5 * r_sum(g.nodes), 0.0)) for a in x]
    assert np.allclose(chain.stationary_cdf(x), q, atol=1e-4)
    assert chain.stationary_cdf(-0.5) == pytest.approx(0.0, abs=1e-15)
    assert chain.stationary_cdf(0.5) == pytest.approx(1.0)


def test_skeleton_step_weights():
    # from k = 1/2 the next state always has density e_minus
    r = rng(6)
    nxt = np.array([chain.skeleton_step(0.5, r) for _ in range(20_000)])
    assert stats.kstest(nxt, lambda x: _cdf(e_minus, x)).pvalue > 0.001
    # from k = 1/4 the mixture has weights (3/4, 1/4)
    nxt = np.array([chain.skeleton_step(0.25, r) for _ in range(20_000)])
    mix = lambda x: 0.75 * _cdf(e_plus, x) + 0.25 * _cdf(e_minus, x)
    assert stats.kstest(nxt, mix).pvalue > 0.001
    with pytest.raises(ValueError):
        chain.skeleton_step(0.0, r)


def _cdf(f, x):
    g = torus_grid(256)
    x = np.atleast_1d(x)
    w = g.weights * f(g.nodes)
    return np.array([w[g.nodes < a].sum() for a in x])


def test_pi_is_invariant():
    edges = np.linspace(-0.5, 0.5, 65)
    expected = np.diff(chain.stationary_cdf(edges)) * 10**6
    start = chain.sample_stationary_many(rng(7), 10**6)
    r = rng(8)
    for lag in (1, 2, 10):
        # a single long path started at stationarity is equally valid, but
        # independent two-step marginals are what the invariance claim is about
        end = np.array([chain.skeleton_path(k, lag, r)[-1] for k in start[:2000]])
        obs, _ = np.histogram(end, edges)
        exp = np.diff(chain.stationary_cdf(edges)) * end.size
        assert stats.chisquare(obs, exp).pvalue > 0.001
    path = chain.skeleton_path(None, 10**6, rng(9))
    obs, _ = np.histogram(path[1:], edges)
    assert stats.chisquare(obs, expected).pvalue > 0.001


@given(torus, torus)
def test_transition_density_symmetric_and_bounded(k, kp):
    d = chain.transition_density_wrt_pi(k, kp)
    assert d == pytest.approx(chain.transition_density_wrt_pi(kp, k), abs=1e-12)
    assert 0 <= d <= 2 + 1e-12


def test_transition_density_normalised_and_grid_max():
    g = torus_grid()
    pi_w = 0.5 * r_sum(g.nodes) * g.weights
    for k in (0.01, 0.2, 0.33, -0.47):
        assert np.dot(chain.transition_density_wrt_pi(k, g.nodes), pi_w) == pytest.approx(1.0, abs=1e-10)
    x = np.linspace(-0.5, 0.5, 100, endpoint=False)
    x = x[x != 0]
    assert chain.transition_density_wrt_pi(x[:, None], x[None, :]).max() <= 2 + 1e-12


def test_jump_count_rate():
    r = rng(10)
    counts = np.array([chain.jump_trajectory("stationary", 1000.0, r).n_jumps for _ in range(2000)])
    assert counts.mean() / 1000.0 == pytest.approx(1.5, rel=0.02)


def test_holding_time_at_half():
    h = np.array([chain.jump_trajectory(0.5, 100.0, rng(11 + i)).holds[0] for i in range(4000)])
    assert h.mean() == pytest.approx(1 / R_total(0.5), rel=0.05)


def test_trajectory_truncation_and_rows():
    tr = chain.jump_trajectory(0.3, 50.0, rng(12))
    assert tr.holds.sum() == pytest.approx(50.0)
    assert tr.holds[:-1].sum() < 50.0
    assert np.all(tr.holds > 0)
    rows = tr.to_rows()
    assert rows[0][1] == pytest.approx(0.3) and len(rows) == tr.n_jumps + 1
    with pytest.raises(ValueError):
        chain.jump_trajectory(0.3, 0.0, rng(12))
    with pytest.raises(ValueError):
        chain.jump_trajectory(0.0, 1.0, rng(12))


def test_step_cap_signals_runaway():
    with pytest.raises(chain.StepCapError):
        chain.jump_trajectory(0.3, 1e4, rng(13), step_cap=10)


def test_time_occupation_is_uniform():
    # 10^6 time units split over independent paths; the per-bin spread is
    # estimated from the paths because holds near k = 0 are heavy tailed
    edges = np.linspace(-0.5, 0.5, 51)
    frac = []
    for i in range(1000):
        tr = chain.jump_trajectory("uniform", 1e3, rng(100 + i, "occupation"))
        idx = np.searchsorted(edges, tr.states, side="right") - 1
        frac.append(np.bincount(idx, weights=tr.holds, minlength=50) / 1e3)
    frac = np.array(frac)
    z = (frac.mean(axis=0) - 0.02) / (frac.std(axis=0, ddof=1) / np.sqrt(len(frac)))
    assert stats.chi2.sf(np.sum(z[:-1] ** 2), 49) > 0.01


def test_streams_are_reproducible_and_distinct():
    a = chain.skeleton_path(0.1, 100, rng(15))
    b = chain.skeleton_path(0.1, 100, rng(15))
    c = chain.skeleton_path(0.1, 100, rng(16))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_spectral_gap():
    m = chain.transfer_matrix()
    # constant function 1 = e_plus/r + e_minus/r has coordinates (1, 1)
    assert np.allclose(m @ np.ones(2), np.ones(2), atol=1e-10)
    a = chain.spectral_gap()
    assert 0 < a < 1
    assert a == pytest.approx(chain.spectral_gap_dense(), abs=1e-4)
