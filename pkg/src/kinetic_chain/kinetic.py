"""Deterministic solver for the linear kinetic equation in Fourier variables.

For each macroscopic frequency p the field W(p, k) evolves by

    dW/dt = -i p omega'(k) W + s * L W,
    L f = -R_total f + (3/4) sum_iota <e_iota, f> e_(-iota),

with s = ``scattering_scale``.  The generator is a diagonal part plus a
rank-two coupling, which every integrator here exploits: each step costs
O(n) plus a 2x2 solve.

The sign of the transport term is the one for which the solution has the
path representation E[exp(-i p int omega'(K_s) ds) W0(K_t)].
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .chain import FIXED, _jump_functional, velocity_params
from .model import DispersionModel, R_total, e_minus, e_plus, r_sum
from .quadrature import TorusGrid, graded_grid, torus_grid
from .rng import stream

__all__ = [
    "KineticField",
    "KineticOperator",
    "evolve_kinetic",
    "evolve_snapshots",
    "mc_solution",
    "semigroup_decay",
    "ba_norm",
    "resolvent_system",
    "ResolventRecord",
    "resolvent_excluded_bound",
    "fractional_profile",
    "charfn_from_kinetic",
    "default_grid",
]


def default_grid() -> TorusGrid:
    """4096 nodes, graded toward k = 0."""
    return graded_grid(512, 8)


@dataclass(frozen=True)
class KineticField:
    p: float
    values: np.ndarray
    grid: TorusGrid
    t: float = 0.0

    @classmethod
    def from_function(cls, func, p: float, grid: TorusGrid | None = None) -> "KineticField":
        grid = grid or default_grid()
        vals = np.asarray(func(grid.nodes), dtype=complex) * np.ones(grid.size)
        return cls(float(p), vals, grid, 0.0)

    def integral(self, weight=None) -> complex:
        v = self.values if weight is None else self.values * weight
        return complex(np.dot(self.grid.weights, v))

    def l1(self) -> float:
        return float(np.dot(self.grid.weights, np.abs(self.values)))

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))


@dataclass
class KineticOperator:
    """Diagonal plus rank-two form of the generator on a grid."""

    model: DispersionModel
    grid: TorusGrid
    p: float
    scattering_scale: float = 1.0
    diag: np.ndarray = field(init=False)
    U: np.ndarray = field(init=False)
    W: np.ndarray = field(init=False)

    def __post_init__(self):
        k, w = self.grid.nodes, self.grid.weights
        s = self.scattering_scale
        self.velocity = np.asarray(self.model.omega_prime(k), dtype=float)
        self.rate = s * np.asarray(R_total(k))
        self.diag = -1j * self.p * self.velocity - self.rate
        ep, em = e_plus(k), e_minus(k)
        self.U = 0.75 * s * np.column_stack([em, ep])
        self.W = np.column_stack([ep * w, em * w])

    def apply(self, f: np.ndarray) -> np.ndarray:
        return self.diag * f + self.U @ (self.W.T @ f)

    def apply_L(self, f: np.ndarray) -> np.ndarray:
        """Scattering part only (p-independent)."""
        return -self.rate * f + self.U @ (self.W.T @ f)

    def cfl(self, dt: float) -> float:
        return abs(self.p) * float(np.max(np.abs(self.velocity))) * dt


class _Trapezoidal:
    """Crank-Nicolson on the full generator, solved with the Woodbury
    identity.  Conserves the p = 0 mass exactly on the grid."""

    def __init__(self, op: KineticOperator, dt: float):
        self.op = op
        h = 0.5 * dt
        self.h = h
        self.d = 1.0 - h * op.diag
        self.Z = (h * op.U) / self.d[:, None]
        self.inner = np.linalg.inv(np.eye(2) - op.W.T @ self.Z)

    def step(self, f):
        op = self.op
        rhs = f + self.h * op.apply(f)
        y = rhs / self.d
        return y + self.Z @ (self.inner @ (op.W.T @ y))


class _Exponential:
    """Exact diagonal exponential with trapezoidal Duhamel coupling of the
    two moments (second order, implicit in the new moments).  Stable for
    any dt; the p = 0 mass is conserved only to O(dt^2)."""

    def __init__(self, op: KineticOperator, dt: float):
        self.op = op
        z = op.diag * dt
        self.E = np.exp(z)
        small = np.abs(z) < 1e-4
        zs = np.where(small, 1.0, z)
        phi1 = np.where(small, 1 + z / 2 + z * z / 6, np.expm1(zs) / zs)
        phi2 = np.where(small, 0.5 + z / 6 + z * z / 24, (np.expm1(zs) - zs) / zs**2)
        self.A = dt * (phi1 - phi2)[:, None] * op.U
        self.B = dt * phi2[:, None] * op.U
        self.inner = np.linalg.inv(np.eye(2) - op.W.T @ self.B)

    def step(self, f):
        op = self.op
        m0 = op.W.T @ f
        F = self.E * f + self.A @ m0
        m1 = self.inner @ (op.W.T @ F)
        return F + self.B @ m1


METHODS = {"trapezoidal": _Trapezoidal, "exponential": _Exponential}


def _stepper(model, fld, dt, method, scattering_scale):
    if dt <= 0:
        raise ValueError("dt must be positive")
    if method not in METHODS:
        raise ValueError(f"method: expected one of {sorted(METHODS)}")
    op = KineticOperator(model, fld.grid, fld.p, scattering_scale)
    if method == "trapezoidal" and op.cfl(dt) > 1:
        warnings.warn(f"|p| sup|omega'| dt = {op.cfl(dt):.2f} > 1: transport phase under-resolved", stacklevel=3)
    return METHODS[method](op, dt)


def evolve_kinetic(
    fld: KineticField,
    T: float,
    dt: float,
    model: DispersionModel | None = None,
    method: str = "trapezoidal",
    scattering_scale: float = 1.0,
) -> KineticField:
    """Advance the field by time T using steps of (at most) dt."""
    model = model or DispersionModel.unpinned()
    if T < 0:
        raise ValueError("T must be >= 0")
    if dt <= 0:
        raise ValueError("dt must be positive")
    if T == 0:
        return fld
    n = max(1, math.ceil(T / dt - 1e-9))
    st = _stepper(model, fld, T / n, method, scattering_scale)
    f = fld.values.astype(complex)
    for _ in range(n):
        f = st.step(f)
    return replace(fld, values=f, t=fld.t + T)


def evolve_snapshots(
    fld: KineticField,
    times,
    dt: float,
    model: DispersionModel | None = None,
    method: str = "trapezoidal",
    scattering_scale: float = 1.0,
) -> list[KineticField]:
    """Fields at the sorted ``times`` (which must be multiples of dt)."""
    model = model or DispersionModel.unpinned()
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or times[0] < 0:
        raise ValueError("times must be sorted and nonnegative")
    st = _stepper(model, fld, dt, method, scattering_scale)
    f = fld.values.astype(complex)
    out, n_done = [], 0
    for t in times:
        target = int(round(t / dt))
        if abs(target * dt - t) > 1e-9 * max(1.0, t):
            raise ValueError("times must be multiples of dt")
        for _ in range(target - n_done):
            f = st.step(f)
        n_done = target
        out.append(replace(fld, values=f.copy(), t=fld.t + t))
    return out


# ---------------------------------------------------------------------------
# path representation


def mc_solution(
    W0,
    p: float,
    k0: float,
    t: float,
    n_paths: int,
    seed: int,
    model: DispersionModel | None = None,
    domain: str = "kinetic-mc",
) -> tuple[complex, complex]:
    """Monte Carlo estimate of E[exp(-i p int_0^t omega'(K_s) ds) W0(K_t)]
    from K_0 = k0, with componentwise standard error."""
    if n_paths < 1000:
        raise ValueError("n_paths must be >= 1000")
    model = model or DispersionModel.unpinned()
    if t == 0:
        return complex(W0(np.array([k0]))[0]), 0j
    a0, coeffs = velocity_params(model)
    cps = np.array([float(t)])
    ints = np.empty(n_paths)
    finals = np.empty(n_paths)
    for i in range(n_paths):
        out, kout, _, status = _jump_functional(stream(seed, i, domain), FIXED, float(k0), cps, 0, a0, coeffs, 10**9)
        if status:
            raise RuntimeError("step cap exceeded in path representation")
        ints[i], finals[i] = out[0], kout[0]
    samples = np.exp(-1j * p * ints) * np.asarray(W0(finals), dtype=complex)
    se = complex(samples.real.std(ddof=1), samples.imag.std(ddof=1)) / math.sqrt(n_paths)
    return complex(samples.mean()), se


# ---------------------------------------------------------------------------
# semigroup decay


def ba_norm(values: np.ndarray, grid: TorusGrid, a: float) -> float:
    """int |f(k)| / |k|^(2a) dk on the grid."""
    return float(np.dot(grid.weights, np.abs(values) / np.abs(grid.nodes) ** (2 * a)))


def semigroup_decay(
    func,
    a: float,
    times=None,
    dt: float = 0.1,
    grid: TorusGrid | None = None,
    model: DispersionModel | None = None,
    fit_range=(10.0, 1000.0),
) -> dict:
    """L1 decay of Q_t f for a mean-zero f; returns the table and fitted slope."""
    if not 0 < a <= 1:
        raise ValueError("a must lie in (0, 1]")
    grid = grid or default_grid()
    fine = graded_grid(2 * (grid.size // 8), 8, 1e-9)
    norm = ba_norm(np.asarray(func(grid.nodes)), grid, a)
    norm_fine = ba_norm(np.asarray(func(fine.nodes)), fine, a)
    if not np.isfinite(norm) or abs(norm - norm_fine) > 1e-3 * abs(norm_fine):
        raise ArithmeticError("grid too coarse near k = 0 for the |k|^(-2a) weight")
    fld = KineticField.from_function(func, 0.0, grid)
    if abs(fld.integral()) > 1e-12 * fld.l1():
        raise ValueError("f must have zero mean")
    if times is None:
        times = np.unique(np.round(np.geomspace(1.0, fit_range[1], 41) / dt) * dt)
    times = np.concatenate(([0.0], np.asarray(times, dtype=float)))
    snaps = evolve_snapshots(fld, times, dt, model, "trapezoidal")
    l1 = np.array([s.l1() for s in snaps])
    sel = (times >= fit_range[0]) & (times <= fit_range[1])
    slope, _ = np.polyfit(np.log(times[sel]), np.log(l1[sel]), 1)
    weighted = l1 * (1 + times) ** a
    return {
        "a": a,
        "ba_norm": norm,
        "times": times,
        "l1": l1,
        "weighted": weighted,
        "slope": float(slope),
        "mass_drift": float(max(abs(s.integral()) for s in snaps)),
    }


# ---------------------------------------------------------------------------
# resolvent


def resolvent_excluded_bound() -> float:
    """M = (4/3) sup R_total + 1; the segment [-M, 0] is excluded."""
    return 4.0 / 3.0 * 2.25 + 1.0


@dataclass(frozen=True)
class ResolventRecord:
    lam: complex
    a: complex
    a_minus: complex
    a_plus: complex
    b_minus: complex
    b_plus: complex
    delta: complex

    @property
    def D(self) -> complex:
        return self.delta / self.lam

    def delta_factored(self) -> complex:
        lam = self.lam
        return lam * (lam * self.b_minus * self.b_plus + self.b_minus * self.a_plus + self.a_minus * self.b_plus)


def resolvent_system(lam: complex, grid: TorusGrid | None = None) -> ResolventRecord:
    """Entries of the 2x2 system for the Laplace transform of Q_t."""
    lam = complex(lam)
    if lam.imag == 0 and -resolvent_excluded_bound() <= lam.real <= 0 and lam != 0:
        raise ValueError("lambda lies on the excluded segment [-M, 0]")
    grid = grid or graded_grid(512, 8, 1e-9)
    k, w = grid.nodes, grid.weights
    ep, em = e_plus(k), e_minus(k)
    den = lam + r_sum(k)
    a = 1.0 - np.dot(w, em * ep / den)
    a_m = -np.dot(w, em**2 / den)
    a_p = -np.dot(w, ep**2 / den)
    b_m = -np.dot(w, em / den)
    b_p = -np.dot(w, ep / den)
    delta = a * a - a_m * a_p
    return ResolventRecord(lam, complex(a), complex(a_m), complex(a_p), complex(b_m), complex(b_p), complex(delta))


# ---------------------------------------------------------------------------
# limit profiles


def fractional_profile(W0_bar, p, t, c_hat: float, regime: str = "stable"):
    """W0_bar(p) exp(-c |p|^(3/2) t) (stable) or W0_bar(p) exp(-c p^2 t) (gaussian)."""
    p = np.asarray(p, dtype=float)
    power = {"stable": 1.5, "gaussian": 2.0}[regime]
    w0 = W0_bar(p) if callable(W0_bar) else W0_bar
    out = w0 * np.exp(-c_hat * np.abs(p) ** power * t)
    return out if np.ndim(out) else complex(out)


def charfn_from_kinetic(
    p: float,
    N: float,
    t: float,
    beta: float = 1.5,
    start: str = "uniform",
    model: DispersionModel | None = None,
    dt: float | None = None,
    grid: TorusGrid | None = None,
    method: str = "exponential",
) -> complex:
    """E exp(-i p Y) for Y = N^(-1/beta) int_0^(N t) omega'(K_s) ds, computed
    deterministically by solving the kinetic equation at frequency
    p N^(-1/beta) with unit initial data and averaging over the start law."""
    model = model or DispersionModel.unpinned()
    grid = grid or default_grid()
    T = N * t
    q = p * N ** (-1.0 / beta)
    dt = dt or max(0.05, T / 4000)
    fld = KineticField.from_function(lambda k: np.ones_like(k), q, grid)
    out = evolve_kinetic(fld, T, dt, model, method)
    if start == "uniform":
        weight = np.ones(grid.size)
    elif start == "stationary":
        weight = 0.5 * r_sum(grid.nodes)
    else:
        raise ValueError("start must be 'uniform' or 'stationary'")
    return out.integral(weight)
