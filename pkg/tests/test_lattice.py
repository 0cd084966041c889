import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kinetic_chain import lattice as lat
from kinetic_chain.model import DispersionModel
from kinetic_chain.rng import stream

UNPINNED = DispersionModel.unpinned()
PINNED = DispersionModel.pinned(1.0)
vec = st.lists(st.floats(-10, 10), min_size=3, max_size=3)
angle = st.floats(-10, 10)


@given(vec, angle)
def test_rotation_preserves_sum_and_norm(v, a):
    r = lat.rotate_triple(v, a)
    assert r.sum() == pytest.approx(sum(v), abs=1e-9)
    assert np.dot(r, r) == pytest.approx(np.dot(v, v), rel=1e-12, abs=1e-9)


@given(vec, angle, angle)
def test_rotations_compose(v, a, b):
    two = lat.rotate_triple(lat.rotate_triple(v, a), b)
    assert np.allclose(two, lat.rotate_triple(v, a + b), atol=1e-9)
    assert np.allclose(lat.rotate_triple(v, 0.0), v)


def test_rotation_axis_is_fixed():
    assert np.allclose(lat.rotate_triple([2.0, 2.0, 2.0], 1.234), [2.0, 2.0, 2.0])


@pytest.mark.parametrize("L", [3, 8, 64, 100])
def test_noise_colours_are_disjoint_and_cover(L):
    cols = lat.noise_centres(L)
    assert sorted(np.concatenate(cols).tolist()) == list(range(L))
    for c in cols:
        touched = np.concatenate([(c - 1) % L, c, (c + 1) % L])
        assert np.unique(touched).size == touched.size


def state(model=UNPINNED, L=64, eps=0.1, seed=0):
    rng = np.random.default_rng(seed)
    return lat.LatticeState.from_model(model, rng.normal(size=L), rng.normal(size=L), eps)


def test_state_validation():
    with pytest.raises(ValueError):
        lat.LatticeState.from_model(UNPINNED, np.zeros(12), np.zeros(12), 0.1)
    with pytest.raises(ValueError):
        lat.LatticeState.from_model(UNPINNED, np.zeros(16), np.zeros(8), 0.1)
    with pytest.raises(ValueError):
        lat.LatticeState.from_model(UNPINNED, np.zeros(16), np.zeros(16), 1.5)


def test_eps_zero_is_pure_harmonic():
    a, b = state(eps=0.0), state(eps=0.0)
    lat.evolve(a, 5.0, 0.05, stream(0, 0, "t"))
    lat.step_harmonic(b, 5.0)
    assert np.allclose(a.p, b.p, atol=1e-12) and np.allclose(a.q, b.q, atol=1e-12)


def test_single_mode_evolves_as_oscillator():
    L, m = 64, 5
    x = np.arange(L)
    k = m / L
    s = lat.LatticeState.from_model(PINNED, np.zeros(L), np.cos(2 * np.pi * k * x), 0.0)
    w = PINNED.omega(k)
    lat.step_harmonic(s, 2 * np.pi / w)
    assert np.allclose(s.q, np.cos(2 * np.pi * k * x), atol=1e-12)
    assert np.allclose(s.p, 0, atol=1e-12)
    lat.step_harmonic(s, 0.7)
    spec = np.abs(np.fft.rfft(s.q)) + np.abs(np.fft.rfft(s.p))
    assert np.all(np.delete(spec, m) < 1e-10)
    assert np.allclose(s.q, np.cos(w * 0.7) * np.cos(2 * np.pi * k * x), atol=1e-12)


def test_zero_mode_moves_freely():
    s = lat.LatticeState.from_model(UNPINNED, np.ones(16), np.zeros(16), 0.0)
    lat.step_harmonic(s, 2.5)
    assert np.allclose(s.q, 2.5) and np.allclose(s.p, 1.0)


@pytest.mark.parametrize("model", [UNPINNED, PINNED])
def test_conservation_under_noise(model):
    s = state(model, L=128, eps=0.3)
    e0, m0 = s.energy(), s.total_momentum()
    lat.evolve(s, 100.0, 0.05, stream(1, 0, "t"))
    assert abs(s.energy() - e0) < 1e-10 * e0
    # noise conserves momentum; the pinned harmonic flow does not
    if model is UNPINNED:
        assert abs(s.total_momentum() - m0) < 1e-10 * np.abs(s.p).sum()
    assert s.clock == pytest.approx(100.0)


def test_noise_step_alone_conserves_kinetic_energy():
    s = state(L=32, eps=0.5)
    k0 = np.dot(s.p, s.p)
    q0 = s.q.copy()
    lat.step_noise(s, 0.1, stream(2, 0, "t"))
    assert np.dot(s.p, s.p) == pytest.approx(k0, rel=1e-13)
    assert np.array_equal(s.q, q0)


def test_energy_matches_direct_sum():
    s = state(UNPINNED, L=32)
    q = s.q
    direct = 0.5 * np.dot(s.p, s.p) + 0.5 * np.sum((np.roll(q, -1) - q) ** 2)
    assert s.energy() == pytest.approx(direct, rel=1e-12)
    sp = state(PINNED, L=32)
    direct = 0.5 * np.dot(sp.p, sp.p) + 0.5 * np.sum((np.roll(sp.q, -1) - sp.q) ** 2) + 0.5 * np.dot(sp.q, sp.q)
    assert sp.energy() == pytest.approx(direct, rel=1e-12)


def test_noise_drift_matches_ito_correction():
    p = np.random.default_rng(3).normal(size=16)
    eps, h = 0.2, 1e-3
    mean, se = lat.noise_drift_moment(p, eps, h, 200_000, 4)
    target = lat.ito_drift(p, eps)
    tol = 10 * eps * h * np.abs(p).max() + 4 * se
    assert np.all(np.abs(mean - target) < tol)


def test_evolve_argument_checks():
    s = state()
    with pytest.raises(ValueError):
        lat.evolve(s, 1.0, 0.2, stream(0, 0, "t"))
    with pytest.raises(ValueError):
        lat.evolve(s, 1.03, 0.05, stream(0, 0, "t"))
    with pytest.raises(ValueError):
        lat.evolve(s, 1.0, 0.05)
    with pytest.raises(ValueError):
        lat.check_no_wrap(UNPINNED, 64, 100.0)
    lat.check_no_wrap(UNPINNED, 64, 20.0)


SPEC = lat.PacketSpec()


def test_packet_spec():
    k = np.linspace(-0.5, 0.5, 20001)[:-1]
    assert SPEC.density(k).mean() == pytest.approx(1.0, rel=1e-8)
    x = np.linspace(-20, 20, 40001)
    assert np.trapezoid(SPEC.envelope_sq(x), x) == pytest.approx(SPEC.mass, rel=1e-8)
    assert SPEC.envelope_sq_ft(0.0) == pytest.approx(SPEC.mass)
    ft = np.trapezoid(SPEC.envelope_sq(x) * np.exp(-2j * np.pi * 0.3 * x), x)
    assert SPEC.envelope_sq_ft(0.3) == pytest.approx(ft, rel=1e-8)
    with pytest.raises(ValueError):
        lat.PacketSpec(width=0.0)


def test_zero_amplitude_packet():
    ens = lat.init_ensemble(lat.PacketSpec(mass=0.0), 64, 0.1, 3, 0)
    assert np.all(ens.energies() == 0)


def test_ensemble_mass_matches_expectation():
    L, eps, M = 1024, 0.1, 64
    ens = lat.init_ensemble(SPEC, L, eps, M, 5)
    mass = eps * (np.abs(ens.psi_hat()) ** 2).sum(axis=1) / L
    assert abs(mass.mean() - lat.expected_mass(SPEC, L, eps)) < 3 * mass.std(ddof=1) / math.sqrt(M)
    # energy of the real state is half the wave-function mass
    assert np.allclose(ens.energies(), 0.5 * mass / eps, rtol=1e-10)


def test_ensemble_reproducible():
    a = lat.init_ensemble(SPEC, 128, 0.1, 4, 6)
    b = lat.init_ensemble(SPEC, 128, 0.1, 4, 6)
    lat.evolve(a, 1.0, 0.05)
    lat.evolve(b, 1.0, 0.05)
    assert np.array_equal(a.P, b.P) and np.array_equal(a.Q, b.Q)
    # realisation i does not depend on the ensemble size
    c = lat.init_ensemble(SPEC, 128, 0.1, 2, 6)
    lat.evolve(c, 1.0, 0.05)
    assert np.array_equal(c.P, a.P[:2])


def test_wigner_symmetries():
    ens = lat.init_ensemble(SPEC, 256, 0.125, 8, 7)
    p = np.array([-2.0, -1.0 / 16, 0.0, 1.0 / 16, 2.0])
    w = lat.wigner_estimate(ens, p)
    assert np.allclose(w.values[0], np.conj(w.values[-1]))
    assert np.allclose(w.values[1], np.conj(w.values[-2]))
    assert np.all(np.abs(w.values[2].imag) < 1e-12 * np.abs(w.values[2]).max())
    assert np.all(w.values[2].real >= 0)
    with pytest.raises(ValueError):
        lat.wigner_estimate(ens, [0.01])


def test_pairing_is_linear_and_batched():
    ens = lat.init_ensemble(SPEC, 256, 0.125, 6, 8)
    g = lambda p: np.exp(-(p / 0.5) ** 2)  # noqa: E731
    j1 = lat.SeparableTest(g, lambda k: np.cos(2 * np.pi * (k - 0.25)))
    j2 = lat.SeparableTest(lambda p: 3 * g(p), j1.h)
    (a, _), (b, _) = lat.pair_with_test_function(ens, [j1, j2], 4.0)
    assert b == pytest.approx(3 * a, rel=1e-12)
    single, _ = lat.pair_with_test_function(ens, j1, 4.0)
    assert single == pytest.approx(a, rel=1e-12)


def test_initial_pairing_matches_packet_wigner():
    L, eps = 2048, 0.05
    ens = lat.init_ensemble(SPEC, L, eps, 40, 9)
    J = lat.SeparableTest(lambda p: np.exp(-(p / 0.5) ** 2), lambda k: np.cos(2 * np.pi * (k - 0.25)), "carrier")
    mean, se = lat.pair_with_test_function(ens, J, 3.0)
    kin = lat.kinetic_pairing(SPEC, J, [0.0], 3.0)[0]
    assert abs(mean.real - kin) < 3 * se + 0.02 * J.norm()
    assert abs(mean.imag) < 3 * se + 1e-3


def test_kinetic_pairing_batch_matches_single():
    g = lambda p: np.exp(-p**2)  # noqa: E731
    Js = [
        lat.SeparableTest(g, lambda k: np.ones_like(k), "one"),
        lat.SeparableTest(g, lambda k: np.cos(2 * np.pi * (k - 0.25)), "carrier"),
        lat.SeparableTest(g, lambda k: np.sin(2 * np.pi * k) ** 2, "sin2"),
    ]
    times = [0.0, 0.1]
    batch = lat.kinetic_pairing(SPEC, Js, times, 2.0, n_p=6)
    assert batch.shape == (3, 2)
    for row, J in zip(batch, Js):
        assert np.allclose(row, lat.kinetic_pairing(SPEC, J, times, 2.0, n_p=6), rtol=1e-12, atol=1e-15)


def test_separable_norm():
    J = lat.SeparableTest(lambda p: np.exp(-p**2), lambda k: 2 * np.cos(2 * np.pi * k))
    assert J.norm() == pytest.approx(2 * math.sqrt(math.pi), rel=1e-8)
