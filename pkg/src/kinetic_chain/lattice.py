"""Microscopic simulator for the noisy harmonic chain on a periodic lattice.

The state is real (p, q) on L sites.  One step of size h is the symmetric
splitting

    noise(h/2, colours forward) -> harmonic(h) -> noise(h/2, colours reversed)

Both sub-flows are exact: the harmonic flow is a rotation of each Fourier
mode, and each noise term rotates the momentum triple (p_{x-1}, p_x, p_{x+1})
about (1, 1, 1)/sqrt(3).  Energy, and for the acoustic chain the total
momentum, are therefore conserved up to rounding.

Noise centres are grouped into colours by x mod 3, so triples of one colour
are disjoint.  When 3 does not divide L the leftover centres each get a
colour of their own.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .kinetic import KineticField, default_grid, evolve_snapshots
from .model import DispersionModel
from .quadrature import TorusGrid, interval_rule
from .rng import stream

__all__ = [
    "PacketSpec",
    "LatticeState",
    "LatticeEnsemble",
    "init_ensemble",
    "step_harmonic",
    "step_noise",
    "evolve",
    "check_no_wrap",
    "noise_centres",
    "rotate_triple",
    "ito_drift",
    "noise_drift_moment",
    "WignerEstimate",
    "wigner_estimate",
    "pair_with_test_function",
    "SeparableTest",
    "packet_wigner",
    "expected_mass",
    "kinetic_pairing",
]


# ---------------------------------------------------------------------------
# noise kernels


@nb.njit(cache=True, inline="always")
def _rotate(p, i0, i1, i2, angle):
    a, b, c = p[i0], p[i1], p[i2]
    cs = math.cos(angle)
    sn = math.sin(angle)
    m = (a + b + c) / 3.0
    r3 = 1.0 / math.sqrt(3.0)
    p[i0] = a * cs + (c - b) * r3 * sn + m * (1.0 - cs)
    p[i1] = b * cs + (a - c) * r3 * sn + m * (1.0 - cs)
    p[i2] = c * cs + (b - a) * r3 * sn + m * (1.0 - cs)


@nb.njit(cache=True)
def _noise_sweep(rng, p, centres, scale):
    """Rotate every triple in the order given, with angle scale * N(0, 1)."""
    L = p.size
    for j in range(centres.size):
        x = centres[j]
        _rotate(p, (x - 1) % L, x, (x + 1) % L, scale * rng.standard_normal())


@nb.njit(cache=True)
def _noise_step(rng, p, fwd, rev, scale):
    _noise_sweep(rng, p, fwd, scale)
    _noise_sweep(rng, p, rev, scale)


@nb.njit(cache=True)
def _drift_moment(rng, p0, fwd, rev, scale, n_draws):
    L = p0.size
    s1 = np.zeros(L)
    s2 = np.zeros(L)
    p = np.empty(L)
    for _ in range(n_draws):
        p[:] = p0
        _noise_step(rng, p, fwd, rev, scale)
        for i in range(L):
            d = p[i] - p0[i]
            s1[i] += d
            s2[i] += d * d
    return s1, s2


def rotate_triple(v, angle: float) -> np.ndarray:
    """Rotation of a 3-vector about (1, 1, 1)/sqrt(3)."""
    out = np.array(v, dtype=float)
    _rotate(out, 0, 1, 2, float(angle))
    return out


def noise_centres(L: int) -> list[np.ndarray]:
    """Colour classes of noise centres; triples within a class are disjoint."""
    if L < 3:
        raise ValueError("need L >= 3")
    m = L // 3
    base = np.arange(3 * m)
    colours = [base[base % 3 == c] for c in range(3)]
    colours += [np.array([x]) for x in range(3 * m, L)]
    return colours


# ---------------------------------------------------------------------------
# state


def _omega_table(model: DispersionModel, L: int) -> np.ndarray:
    k = np.fft.rfftfreq(L)
    return np.asarray(model.omega(k), dtype=float)


def _mode_weights(L: int) -> np.ndarray:
    w = np.full(L // 2 + 1, 2.0)
    w[0] = 1.0
    if L % 2 == 0:
        w[-1] = 1.0
    return w


def _energy(p: np.ndarray, q: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """H = (1/2) sum p^2 + (1/2) sum (alpha * q) q, along the last axis."""
    L = p.shape[-1]
    qh = np.fft.rfft(q, axis=-1)
    pot = (_mode_weights(L) * omega**2 * np.abs(qh) ** 2).sum(axis=-1) / L
    return 0.5 * (p**2).sum(axis=-1) + 0.5 * pot


@dataclass
class LatticeState:
    p: np.ndarray
    q: np.ndarray
    eps: float
    omega: np.ndarray  # dispersion on the rfft grid
    clock: float = 0.0
    pinned: bool = False
    momentum: float = field(init=False)

    def __post_init__(self):
        L = self.p.size
        if L & (L - 1) or L < 4:
            raise ValueError("L must be a power of 2")
        if self.q.shape != self.p.shape or self.omega.size != L // 2 + 1:
            raise ValueError("inconsistent array shapes")
        if not 0 <= self.eps <= 1:
            raise ValueError("eps must lie in [0, 1]")
        self.momentum = float(self.p.sum())

    @classmethod
    def from_model(cls, model: DispersionModel, p, q, eps: float) -> "LatticeState":
        p = np.array(p, dtype=float)
        return cls(p, np.array(q, dtype=float), eps, _omega_table(model, p.size), pinned=model.pinned_flag)

    @property
    def L(self) -> int:
        return self.p.size

    def energy(self) -> float:
        return float(_energy(self.p, self.q, self.omega))

    def total_momentum(self) -> float:
        return float(self.p.sum())


@dataclass
class LatticeEnsemble:
    """M realisations stored as (M, L) arrays."""

    P: np.ndarray
    Q: np.ndarray
    eps: float
    model: DispersionModel
    seed: int
    clock: float = 0.0
    domain: str = "lattice"
    omega: np.ndarray = field(init=False)
    rngs: list = field(init=False, repr=False)

    def __post_init__(self):
        M, L = self.P.shape
        if L & (L - 1) or L < 4:
            raise ValueError("L must be a power of 2")
        if not 0 < self.eps <= 1:
            raise ValueError("eps must lie in (0, 1]")
        self.omega = _omega_table(self.model, L)
        self.rngs = [stream(self.seed, i, f"{self.domain}-noise") for i in range(M)]

    @property
    def M(self) -> int:
        return self.P.shape[0]

    @property
    def L(self) -> int:
        return self.P.shape[1]

    def energies(self) -> np.ndarray:
        return _energy(self.P, self.Q, self.omega)

    def momenta(self) -> np.ndarray:
        return self.P.sum(axis=1)

    def state(self, i: int) -> LatticeState:
        return LatticeState(self.P[i].copy(), self.Q[i].copy(), self.eps, self.omega, self.clock, self.model.pinned_flag)

    def psi_hat(self) -> np.ndarray:
        """Fourier transform of the wave function omega~ * q + i p."""
        k = np.fft.fftfreq(self.L)
        om = np.asarray(self.model.omega(k), dtype=float)
        return om * np.fft.fft(self.Q, axis=1) + 1j * np.fft.fft(self.P, axis=1)


# ---------------------------------------------------------------------------
# initial data


@dataclass(frozen=True)
class PacketSpec:
    """Wave packet psi_y = a(eps y) eta_y.

    a(x) is a Gaussian envelope centred at x0 with width ``width`` and
    int a^2 dx = ``mass``; eta has spectral density proportional to a
    Gaussian bump of width ``k_width`` at the carrier ``k0``, normalised to
    unit integral, with independent uniform phases per mode.
    """

    x0: float = 0.0
    width: float = 1.0
    k0: float = 0.25
    k_width: float = 0.03
    mass: float = 2.0

    def __post_init__(self):
        if self.width <= 0 or self.k_width <= 0 or self.mass < 0:
            raise ValueError("width, k_width must be positive and mass nonnegative")

    def density(self, k) -> np.ndarray:
        """Spectral density S(k) (unit integral over the torus)."""
        k = np.asarray(k, dtype=float)
        d = (k - self.k0 + 0.5) % 1.0 - 0.5
        s = np.exp(-0.5 * (d / self.k_width) ** 2)
        return s / (self.k_width * math.sqrt(2 * math.pi))

    def envelope_sq(self, x) -> np.ndarray:
        return self.mass / (self.width * math.sqrt(math.pi)) * np.exp(-(((np.asarray(x) - self.x0) / self.width) ** 2))

    def envelope_sq_ft(self, p) -> np.ndarray:
        """int a(x)^2 exp(-2 pi i p x) dx."""
        p = np.asarray(p, dtype=float)
        return self.mass * np.exp(-((math.pi * self.width * p) ** 2) - 2j * math.pi * p * self.x0)


def packet_wigner(spec: PacketSpec, p, k) -> np.ndarray:
    """Limit of (eps/2) W_eps(0, p, k) for the packet: (1/2) FT[a^2](p) S(k)."""
    return 0.5 * np.multiply.outer(spec.envelope_sq_ft(p), spec.density(k))


def _sites(L: int) -> np.ndarray:
    y = np.arange(L)
    return (y + L // 2) % L - L // 2


def init_ensemble(
    spec: PacketSpec,
    L: int,
    eps: float,
    M: int,
    seed: int,
    model: DispersionModel | None = None,
    domain: str = "lattice",
) -> LatticeEnsemble:
    """Independent random-phase wave packets, one stream per realisation."""
    model = model or DispersionModel.unpinned()
    if L & (L - 1) or L < 4:
        raise ValueError("L must be a power of 2")
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    if M < 1:
        raise ValueError("M must be positive")
    kf = np.fft.fftfreq(L)
    amp = np.sqrt(L * spec.density(kf))
    env = np.sqrt(spec.envelope_sq(eps * _sites(L)))
    om = np.asarray(model.omega(kf), dtype=float)
    neg = (-np.arange(L)) % L
    P = np.empty((M, L))
    Q = np.empty((M, L))
    for i in range(M):
        rng = stream(seed, i, f"{domain}-init")
        eta = np.fft.ifft(amp * np.exp(2j * np.pi * rng.random(L)))
        psi_h = np.fft.fft(env * eta)
        conj_neg = np.conj(psi_h[neg])
        with np.errstate(divide="ignore", invalid="ignore"):
            qh = np.where(om > 0, (psi_h + conj_neg) / (2 * om), 0.0)
        ph = (psi_h - conj_neg) / 2j
        Q[i] = np.fft.ifft(qh).real
        P[i] = np.fft.ifft(ph).real
    return LatticeEnsemble(P, Q, eps, model, seed, domain=domain)


def expected_mass(spec: PacketSpec, L: int, eps: float) -> float:
    """E[eps sum |psi_y|^2] by construction."""
    kf = np.fft.fftfreq(L)
    return float(eps * spec.envelope_sq(eps * _sites(L)).sum() * spec.density(kf).mean())


# ---------------------------------------------------------------------------
# dynamics


def _harmonic(P: np.ndarray, Q: np.ndarray, omega: np.ndarray, h: float):
    ph = np.fft.rfft(P, axis=-1)
    qh = np.fft.rfft(Q, axis=-1)
    c = np.cos(omega * h)
    s = np.sin(omega * h)
    with np.errstate(divide="ignore", invalid="ignore"):
        sinc = np.where(omega > 0, s / omega, h)
    n = P.shape[-1]
    P[...] = np.fft.irfft(c * ph - omega * s * qh, n=n, axis=-1)
    Q[...] = np.fft.irfft(c * qh + sinc * ph, n=n, axis=-1)


def step_harmonic(state, h: float):
    """Exact free evolution over time h (in place; returns the state)."""
    if h <= 0:
        raise ValueError("h must be positive")
    _harmonic(state.p if isinstance(state, LatticeState) else state.P,
              state.q if isinstance(state, LatticeState) else state.Q, state.omega, h)
    state.clock += h
    return state


def _colour_orders(L: int) -> tuple[np.ndarray, np.ndarray]:
    cols = noise_centres(L)
    fwd = np.concatenate(cols).astype(np.int64)
    rev = np.concatenate(cols[::-1]).astype(np.int64)
    return fwd, rev


def step_noise(state: LatticeState, h: float, rng: np.random.Generator) -> LatticeState:
    """Exact noise rotations over time h: half-steps in forward then reverse
    colour order, each with fresh increments N(0, h/2)."""
    if h <= 0:
        raise ValueError("h must be positive")
    if state.eps == 0:
        return state
    fwd, rev = _colour_orders(state.L)
    _noise_step(rng, state.p, fwd, rev, math.sqrt(3 * state.eps * h / 2))
    return state


def check_no_wrap(model: DispersionModel, L: int, t_micro: float) -> None:
    """Reject horizons at which a wave could travel half way round the ring."""
    k = np.linspace(0, 0.5, 2049)
    vmax = float(np.max(np.abs(model.omega_prime(k)))) / (2 * math.pi)
    if vmax * t_micro >= L / 2:
        raise ValueError(f"group velocity {vmax:.3g} x time {t_micro:.3g} reaches L/2 = {L / 2}: enlarge L")


def evolve(state, t_micro: float, h: float, rng: np.random.Generator | None = None, h_max: float = 0.1):
    """Strang splitting noise/harmonic/noise up to t_micro (in place).

    ``state`` may be a single LatticeState (then ``rng`` is required) or a
    LatticeEnsemble, whose realisations use their own streams.
    """
    if not 0 < h <= h_max:
        raise ValueError(f"h must lie in (0, {h_max}]")
    n = int(round(t_micro / h))
    if abs(n * h - t_micro) > 1e-9 * max(1.0, t_micro):
        raise ValueError("t_micro must be a multiple of h")
    ens = isinstance(state, LatticeEnsemble)
    L = state.L
    if ens:
        check_no_wrap(state.model, L, state.clock + t_micro)
    fwd, rev = _colour_orders(L)
    scale = math.sqrt(3 * state.eps * h / 2)
    if ens:
        rngs, P, Q = state.rngs, state.P, state.Q
    else:
        if rng is None:
            raise ValueError("a single state needs an rng")
        rngs, P, Q = [rng], state.p[None, :], state.q[None, :]
    noisy = state.eps > 0
    for _ in range(n):
        if noisy:
            for i, r in enumerate(rngs):
                _noise_sweep(r, P[i], fwd, scale)
        _harmonic(P, Q, state.omega, h)
        if noisy:
            for i, r in enumerate(rngs):
                _noise_sweep(r, P[i], rev, scale)
    if not ens:
        state.p[:] = P[0]
        state.q[:] = Q[0]
    state.clock += n * h
    return state


def ito_drift(p: np.ndarray, eps: float) -> np.ndarray:
    """-(eps/2) (beta * p) with beta = (-1, -2, 6, -2, -1)."""
    bp = 6 * p - 2 * (np.roll(p, 1) + np.roll(p, -1)) - (np.roll(p, 2) + np.roll(p, -2))
    return -0.5 * eps * bp


def noise_drift_moment(p: np.ndarray, eps: float, h: float, n_draws: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Mean of (p(h) - p)/h under one noise step from a frozen state, with
    its standard error."""
    p0 = np.asarray(p, dtype=float)
    fwd, rev = _colour_orders(p0.size)
    s1, s2 = _drift_moment(stream(seed, 0, "drift"), p0, fwd, rev, math.sqrt(3 * eps * h / 2), int(n_draws))
    mean = s1 / n_draws
    var = s2 / n_draws - mean**2
    return mean / h, np.sqrt(var / n_draws) / h


# ---------------------------------------------------------------------------
# Wigner transform


@dataclass
class WignerEstimate:
    p: np.ndarray
    k: np.ndarray
    values: np.ndarray  # (len(p), L), scaled by eps^(1+gamma)/2
    stderr: np.ndarray  # complex, componentwise
    t: float
    n_realisations: int


def _shifts(p_grid, eps: float, L: int) -> np.ndarray:
    m = np.asarray(p_grid, dtype=float) * eps * L / 2
    mi = np.rint(m)
    if np.any(np.abs(m - mi) > 1e-9):
        raise ValueError("eps p / 2 must be a multiple of 1/L for every p")
    return mi.astype(int)


def wigner_estimate(ens: LatticeEnsemble, p_grid, gamma: float = 0.0) -> WignerEstimate:
    """Ensemble mean of psi^*(k - eps p/2) psi(k + eps p/2) times eps^(1+gamma)/2."""
    shifts = _shifts(p_grid, ens.eps, ens.L)
    ph = ens.psi_hat()
    scale = ens.eps ** (1 + gamma) / 2
    vals = np.empty((shifts.size, ens.L), complex)
    errs = np.empty_like(vals)
    M = ens.M
    for i, m in enumerate(shifts):
        prod = np.conj(np.roll(ph, m, axis=1)) * np.roll(ph, -m, axis=1) * scale
        vals[i] = prod.mean(axis=0)
        if M > 1:
            errs[i] = (prod.real.std(axis=0, ddof=1) + 1j * prod.imag.std(axis=0, ddof=1)) / math.sqrt(M)
        else:
            errs[i] = np.nan
    return WignerEstimate(np.asarray(p_grid, float), np.arange(ens.L) / ens.L, vals, errs, ens.clock * ens.eps, M)


@dataclass(frozen=True)
class SeparableTest:
    """Test function J(p, k) = g(p) h(k) with g even and real."""

    g: callable
    h: callable
    name: str = ""

    def __call__(self, p, k):
        return np.multiply.outer(self.g(np.asarray(p, float)), self.h(np.asarray(k, float)))

    def norm(self, p_max: float = 50.0) -> float:
        """int sup_k |J(p, k)| dp."""
        x, w = interval_rule(-p_max, p_max, 400)
        kk = np.linspace(0, 1, 2001)
        return float(np.dot(w, np.abs(self.g(x))) * np.max(np.abs(self.h(kk))))


def pair_with_test_function(source, J, p_max: float, gamma: float = 0.0):
    """Quadrature of (eps^(1+gamma)/2) int W(t, eps^gamma p, k) J^*(p, k) dp dk.

    ``source`` is a LatticeEnsemble (per-realisation pairings give the
    standard error) or a WignerEstimate on a uniform symmetric p grid.
    Returns (mean, stderr), or a list of them when J is a sequence.
    """
    single = isinstance(J, SeparableTest)
    Js = [J] if single else list(J)
    if isinstance(source, WignerEstimate):
        dp = float(source.p[1] - source.p[0])
        res = [
            (complex(np.sum(source.values * np.conj(j(source.p, source.k))) * dp / source.values.shape[1]), float("nan"))
            for j in Js
        ]
        return res[0] if single else res
    ens = source
    # macroscopic frequency p corresponds to the lattice frequency eps^gamma p
    dp_lat = 2.0 / (ens.eps * ens.L)
    mmax = int(math.floor(p_max * ens.eps**gamma / dp_lat))
    ph = ens.psi_hat()
    k = np.arange(ens.L) / ens.L
    H = np.conj(np.column_stack([j.h(k) for j in Js]))
    acc = np.zeros((ens.M, len(Js)), complex)
    for m in range(-mmax, mmax + 1):
        p_mac = m * dp_lat / ens.eps**gamma
        gm = np.conj(np.array([j.g(np.array([p_mac]))[0] for j in Js]))
        prod = np.conj(np.roll(ph, m, axis=1)) * np.roll(ph, -m, axis=1)
        acc += (prod @ H) * gm
    acc *= ens.eps ** (1 + gamma) / 2 * dp_lat / ens.eps**gamma / ens.L
    res = []
    for c in acc.T:
        se = float(np.hypot(c.real.std(ddof=1), c.imag.std(ddof=1)) / math.sqrt(ens.M)) if ens.M > 1 else float("nan")
        res.append((complex(c.mean()), se))
    return res[0] if single else res


def kinetic_pairing(
    spec: PacketSpec,
    J,
    times,
    p_max: float,
    model: DispersionModel | None = None,
    scattering_scale: float = 2.0,
    dt: float = 0.01,
    n_p: int = 24,
    grid: TorusGrid | None = None,
) -> np.ndarray:
    """<U(t), J> for the kinetic solution started from the packet's limit
    Wigner function, at each of ``times``.

    Returns shape (len(times),) for one test function or (len(J), len(times))
    for a sequence.  Uses U(-p) = U(p)^* and g even, so only p >= 0 is solved.
    """
    single = isinstance(J, SeparableTest)
    Js = [J] if single else list(J)
    model = model or DispersionModel.unpinned()
    grid = grid or default_grid()
    x, w = interval_rule(0.0, p_max, n_p)
    H = np.conj(np.column_stack([j.h(grid.nodes) for j in Js]))
    out = np.zeros((len(Js), len(times)), complex)
    dens = 0.5 * spec.density(grid.nodes)
    for pj, wj in zip(x, w):
        u0 = (spec.envelope_sq_ft(pj) * dens).astype(complex)
        gj = np.conj(np.array([j.g(np.array([pj]))[0] for j in Js]))
        for i, snap in enumerate(evolve_snapshots(KineticField(float(pj), u0, grid), times, dt, model, scattering_scale=scattering_scale)):
            out[:, i] += wj * gj * ((grid.weights * snap.values) @ H)
    out = 2 * out.real
    return out[0] if single else out
