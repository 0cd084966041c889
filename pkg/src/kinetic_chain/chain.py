"""Exact samplers for the skeleton chain and the jump process on the torus.

The transition kernel factorises through the two densities e_plus and
e_minus, so every draw is an exact rejection sample from a uniform proposal.
The compiled kernels take a ``numpy.random.Generator``; callers give each
path its own stream (see :mod:`kinetic_chain.rng`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np
from scipy.sparse.linalg import eigsh

from .model import DispersionModel, e_minus, e_plus, r_sum
from .quadrature import torus_grid

__all__ = [
    "STATIONARY",
    "UNIFORM",
    "FIXED",
    "sample_basis_density",
    "sample_basis_many",
    "sample_stationary",
    "sample_stationary_many",
    "skeleton_step",
    "skeleton_path",
    "transition_density_wrt_pi",
    "stationary_cdf",
    "JumpTrajectory",
    "jump_trajectory",
    "spectral_gap",
    "spectral_gap_dense",
    "transfer_matrix",
    "velocity_params",
]

PI = math.pi
REJECTION_CAP = 1_000_000
DEFAULT_STEP_CAP = 1_000_000_000

# start modes for compiled kernels
FIXED = 0
STATIONARY = 1  # skeleton-invariant law pi = r/2 dk
UNIFORM = 2  # time-invariant law of the jump process (Lebesgue)


class RejectionCapError(RuntimeError):
    pass


class StepCapError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# compiled primitives


@nb.njit(cache=True)
def _draw(rng, iota):
    """Rejection sample from e_iota; returns (k, proposals).  proposals < 0
    signals that the iteration cap was hit."""
    for n in range(1, REJECTION_CAP + 1):
        k = rng.random() - 0.5
        u = rng.random()
        if iota == 1:
            s = math.sin(PI * k)
            ok = u < s * s * s * s
        else:
            s = math.sin(2.0 * PI * k)
            ok = u < s * s
        if ok and k != 0.0:
            return k, n
    return 0.0, -1


@nb.njit(cache=True)
def _draw_stationary(rng):
    if rng.random() < 0.5:
        return _draw(rng, 1)
    return _draw(rng, -1)


@nb.njit(cache=True)
def _draw_uniform(rng):
    while True:
        k = rng.random() - 0.5
        if k != 0.0:
            return k


@nb.njit(cache=True)
def _step(rng, k):
    s = math.sin(PI * k)
    c = math.cos(PI * k)
    s2 = s * s
    e1 = 8.0 / 3.0 * s2 * s2
    em = 8.0 * s2 * c * c
    if rng.random() * (e1 + em) < em:
        return _draw(rng, 1)
    return _draw(rng, -1)


@nb.njit(cache=True)
def _start(rng, mode, k0):
    if mode == 1:
        return _draw_stationary(rng)
    if mode == 2:
        return _draw_uniform(rng), 1
    return k0, 1


@nb.njit(cache=True)
def _rate(k):
    s = math.sin(PI * k)
    s2 = s * s
    return 2.0 * s2 * (3.0 - 2.0 * s2)


@nb.njit(cache=True)
def _velocity(k, a0, coeffs):
    """Group velocity from the cosine-series form of the dispersion relation."""
    alpha = a0
    dalpha = 0.0
    for j in range(coeffs.size):
        y = j + 1.0
        s = math.sin(PI * y * k)
        alpha -= 4.0 * coeffs[j] * s * s
        dalpha -= 4.0 * PI * coeffs[j] * y * math.sin(2.0 * PI * y * k)
    if alpha <= 0.0:
        return 0.0
    return dalpha / (2.0 * math.sqrt(alpha))


@nb.njit(cache=True)
def _observable(k, kind, a0, coeffs):
    if kind == 0:
        return _velocity(k, a0, coeffs)
    return 1.0


@nb.njit(cache=True)
def _jump_functional(rng, mode, k0, checkpoints, kind, a0, coeffs, step_cap):
    """Integral of the observable along one jump path, read at sorted times.

    Returns (integrals, states at each checkpoint, jumps, status).  status is
    0 on success, 1 on step cap, 2 on rejection cap.
    """
    ncp = checkpoints.size
    out = np.zeros(ncp)
    kout = np.zeros(ncp)
    k, n = _start(rng, mode, k0)
    if n < 0:
        return out, kout, 0, 2
    t = 0.0
    acc = 0.0
    j = 0
    jumps = 0
    status = 0
    while j < ncp:
        v = _observable(k, kind, a0, coeffs)
        hold = rng.standard_exponential() / _rate(k)
        end = t + hold
        while j < ncp and checkpoints[j] <= end:
            out[j] = acc + v * (checkpoints[j] - t)
            kout[j] = k
            j += 1
        if j < ncp:
            acc += v * hold
            t = end
            jumps += 1
            if jumps > step_cap:
                status = 1
                j = ncp
            else:
                k, n = _step(rng, k)
                if n < 0:
                    status = 2
                    j = ncp
    return out, kout, jumps, status


@nb.njit(cache=True)
def _skeleton_sums(rng, mode, k0, checkpoints, a0, coeffs):
    """Partial sums of psi = velocity * theta over n = 0..m at sorted step
    indices m."""
    ncp = checkpoints.size
    out = np.zeros(ncp)
    k, n = _start(rng, mode, k0)
    if n < 0:
        return out, 2
    acc = 0.0
    j = 0
    m = 0
    while j < ncp:
        acc += _velocity(k, a0, coeffs) / _rate(k)
        while j < ncp and checkpoints[j] == m:
            out[j] = acc
            j += 1
        if j < ncp:
            k, n = _step(rng, k)
            if n < 0:
                return out, 2
            m += 1
    return out, 0


@nb.njit(cache=True)
def _many_basis(rng, iota, n):
    out = np.empty(n)
    proposals = 0
    for i in range(n):
        k, c = _draw(rng, iota)
        if c < 0:
            return out, -1
        out[i] = k
        proposals += c
    return out, proposals


@nb.njit(cache=True)
def _many_stationary(rng, n):
    out = np.empty(n)
    for i in range(n):
        k, c = _draw_stationary(rng)
        if c < 0:
            return out, -1
        out[i] = k
    return out, 0


@nb.njit(cache=True)
def _path(rng, k0, n_steps):
    out = np.empty(n_steps + 1)
    out[0] = k0
    k = k0
    for i in range(n_steps):
        k, c = _step(rng, k)
        if c < 0:
            return out, -1
        out[i + 1] = k
    return out, 0


@nb.njit(cache=True)
def _trajectory(rng, k0, total_time, step_cap):
    cap = 1024
    ks = np.empty(cap)
    holds = np.empty(cap)
    k = k0
    t = 0.0
    n = 0
    while True:
        if n == cap:
            cap *= 2
            ks2 = np.empty(cap)
            h2 = np.empty(cap)
            ks2[:n] = ks[:n]
            h2[:n] = holds[:n]
            ks = ks2
            holds = h2
        hold = rng.standard_exponential() / _rate(k)
        ks[n] = k
        holds[n] = hold
        n += 1
        if t + hold >= total_time or n > step_cap:
            break
        t += hold
        k, c = _step(rng, k)
        if c < 0:
            return ks[:n], holds[:n], 2
    status = 1 if (n > step_cap and t + holds[n - 1] < total_time) else 0
    return ks[:n], holds[:n], status


def _check(status):
    if status == 1:
        raise StepCapError("step cap exceeded")
    if status == 2 or status < 0:
        raise RejectionCapError("rejection sampler hit its iteration cap; rng failure")


# ---------------------------------------------------------------------------
# public samplers


def sample_basis_density(iota: int, rng: np.random.Generator) -> float:
    if iota not in (1, -1):
        raise ValueError("iota must be +1 or -1")
    k, c = _draw(rng, iota)
    _check(-1 if c < 0 else 0)
    return k


def sample_basis_many(iota: int, rng: np.random.Generator, n: int) -> tuple[np.ndarray, int]:
    """n draws from e_iota and the number of proposals used."""
    if iota not in (1, -1):
        raise ValueError("iota must be +1 or -1")
    out, proposals = _many_basis(rng, iota, n)
    _check(-1 if proposals < 0 else 0)
    return out, int(proposals)


def sample_stationary(rng: np.random.Generator) -> float:
    k, c = _draw_stationary(rng)
    _check(-1 if c < 0 else 0)
    return k


def sample_stationary_many(rng: np.random.Generator, n: int) -> np.ndarray:
    out, status = _many_stationary(rng, n)
    _check(status)
    return out


def skeleton_step(k: float, rng: np.random.Generator) -> float:
    if k == 0:
        raise ValueError("k = 0 is outside the state space of the chain")
    k2, c = _step(rng, float(k))
    _check(-1 if c < 0 else 0)
    return k2


def skeleton_path(k0: float | None, n_steps: int, rng: np.random.Generator) -> np.ndarray:
    """States xi_0..xi_n; k0=None draws xi_0 from the stationary law."""
    if k0 is None:
        k0 = sample_stationary(rng)
    if k0 == 0:
        raise ValueError("k = 0 is outside the state space of the chain")
    out, status = _path(rng, float(k0), int(n_steps))
    _check(status)
    return out


def transition_density_wrt_pi(k, kp):
    """Density p(k, k') of P(k, dk') with respect to pi(dk')."""
    ep, em = e_plus(k), e_minus(k)
    epp, emp = e_plus(kp), e_minus(kp)
    return 2.0 * (em * epp + ep * emp) / (r_sum(k) * r_sum(kp))


def stationary_cdf(k):
    """Distribution function of pi = r/2 dk on [-1/2, 1/2), in closed form."""
    k = np.asarray(k, dtype=float)
    x = 2 * PI * (k + 0.5)
    # antiderivatives of (8/3) sin^4(pi k) and 2 sin^2(2 pi k) from -1/2
    i_plus = (8.0 / 3.0) * (3 * x / 8 + np.sin(x) / 2 + np.sin(2 * x) / 16) / (2 * PI)
    i_minus = (x - np.sin(2 * x) / 2) / (2 * PI)
    return 0.5 * (i_plus + i_minus)


# ---------------------------------------------------------------------------
# jump process


@dataclass(frozen=True)
class JumpTrajectory:
    """States and holding times; the last hold is truncated at total_time."""

    states: np.ndarray
    holds: np.ndarray
    total_time: float
    start_mode: str

    @property
    def n_jumps(self) -> int:
        return self.states.size - 1

    def to_rows(self):
        return [(i, float(k), float(h)) for i, (k, h) in enumerate(zip(self.states, self.holds))]


def jump_trajectory(
    start: float | str,
    total_time: float,
    rng: np.random.Generator,
    step_cap: int = DEFAULT_STEP_CAP,
) -> JumpTrajectory:
    """Path of the jump process up to ``total_time``.

    ``start`` is a wavenumber, ``"stationary"`` (skeleton law pi) or
    ``"uniform"`` (the time-invariant law of the process).
    """
    if total_time <= 0:
        raise ValueError("total_time must be positive")
    if start == "stationary":
        k0, mode = sample_stationary(rng), "stationary"
    elif start == "uniform":
        k0, mode = _draw_uniform(rng), "uniform"
    else:
        k0, mode = float(start), "fixed"
        if k0 == 0:
            raise ValueError("k = 0 is outside the state space of the process")
    ks, holds, status = _trajectory(rng, k0, float(total_time), int(step_cap))
    _check(status)
    holds = holds.copy()
    holds[-1] = total_time - (holds[:-1].sum() if holds.size > 1 else 0.0)
    return JumpTrajectory(ks.copy(), holds, float(total_time), mode)


def velocity_params(model: DispersionModel) -> tuple[float, np.ndarray]:
    """Arguments for the compiled group-velocity evaluation."""
    return float(model.alpha0_hat), np.asarray(model.coeffs, dtype=float)


# ---------------------------------------------------------------------------
# spectral gap


def transfer_matrix(n_panels: int = 2048) -> np.ndarray:
    """Matrix of P on span{e_minus/r, e_plus/r}; entry [a][b] is
    the integral of e_a e_(-b) / r with rows/columns ordered (+1, -1)."""
    g = torus_grid(n_panels)
    k, w = g.nodes, g.weights
    e = {1: e_plus(k), -1: e_minus(k)}
    rr = r_sum(k)
    m = np.empty((2, 2))
    for i, a in enumerate((1, -1)):
        for j, b in enumerate((1, -1)):
            m[i, j] = np.dot(w, e[a] * e[-b] / rr)
    return m


def spectral_gap(n_panels: int = 2048) -> float:
    """Norm of P on mean-zero functions in L2(pi).

    P has rank two; its nonzero spectrum is that of :func:`transfer_matrix`,
    one eigenvalue being 1 (constants).  P is self-adjoint in L2(pi), so the
    norm on the orthogonal complement is the modulus of the other one.
    """
    m = transfer_matrix(n_panels)
    ev = np.linalg.eigvals(m)
    unit = np.argmin(np.abs(ev - 1.0))
    if abs(ev[unit] - 1.0) > 1e-8:
        raise RuntimeError("quadrature failure: eigenvalue 1 not reproduced")
    other = np.delete(ev, unit)
    return float(np.max(np.abs(other)))


def spectral_gap_dense(n_points: int = 4096) -> float:
    """Largest non-unit singular value of the symmetrised dense discretisation."""
    g = torus_grid(n_points // 4, order=4)
    k, w = g.nodes, g.weights
    mass = 0.5 * r_sum(k) * w
    mask = mass > 0
    k, mass = k[mask], mass[mask]
    dens = transition_density_wrt_pi(k[:, None], k[None, :])
    sq = np.sqrt(mass)
    a = sq[:, None] * dens * sq[None, :]
    sv = np.abs(eigsh(a, k=4, which="LM", return_eigenvectors=False))
    unit = np.argmin(np.abs(sv - 1.0))
    return float(np.max(np.delete(sv, unit)))
