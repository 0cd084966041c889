"""Dispersion relations and the closed-form scattering kernel.

Wavenumbers live on the torus [-1/2, 1/2).  All kernel functions accept
scalars or numpy arrays and broadcast.

The noise kernel does not depend on the interaction potential, so the
scattering functions are module-level; the potential enters only through
:class:`DispersionModel` (the dispersion relation and group velocity).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

__all__ = [
    "TorusPoint",
    "wrap",
    "torus_distance",
    "DispersionModel",
    "beta_hat",
    "r_elementary",
    "r_three_sine",
    "R_kernel",
    "R_eps_kernel",
    "e_plus",
    "e_minus",
    "e_basis",
    "r_sum",
    "R_total",
    "theta",
    "ScatteringTables",
    "scattering_tables",
]

PI = np.pi


def wrap(k):
    """Canonical representative of k in [-1/2, 1/2)."""
    w = np.mod(np.add(k, 0.5), 1.0) - 0.5
    return float(w) if np.ndim(w) == 0 else w


def torus_distance(k, kp):
    d = np.abs(np.mod(np.subtract(k, kp), 1.0))
    d = np.minimum(d, 1.0 - d)
    return float(d) if np.ndim(d) == 0 else d


@dataclass(frozen=True)
class TorusPoint:
    k: float

    def __post_init__(self):
        object.__setattr__(self, "k", wrap(float(self.k)))

    def __add__(self, other):
        other = other.k if isinstance(other, TorusPoint) else other
        return TorusPoint(self.k + other)

    def __sub__(self, other):
        other = other.k if isinstance(other, TorusPoint) else other
        return TorusPoint(self.k - other)

    def __neg__(self):
        return TorusPoint(-self.k)

    def distance(self, other: "TorusPoint") -> float:
        return torus_distance(self.k, other.k)


# ---------------------------------------------------------------------------
# dispersion relation


FAMILIES = ("unpinned-nn", "pinned-nn", "custom")


@dataclass(frozen=True)
class DispersionModel:
    """Interaction potential through its Fourier symbol.

    Every family is stored as a finite cosine series

        alpha_hat(k) = alpha_hat(0) - 4 * sum_y coeffs[y-1] * sin(pi y k)^2,

    which is the real-space sum alpha_0 + 2 sum_y alpha_y cos(2 pi y k)
    rewritten without cancellation near k = 0.  The nearest-neighbour
    families also have closed forms that are used for evaluation.
    """

    family: str = "unpinned-nn"
    pinning_mass: float = 0.0
    alpha0_hat: float = 0.0
    coeffs: tuple[float, ...] = (-1.0,)
    source: str = field(default="", compare=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family: unknown value {self.family!r}; expected one of {FAMILIES}")
        if self.pinning_mass < 0:
            raise ValueError("pinning_mass: must be >= 0")
        self._validate()

    # -- constructors -------------------------------------------------------

    @classmethod
    def unpinned(cls) -> "DispersionModel":
        return cls("unpinned-nn", 0.0, 0.0, (-1.0,))

    @classmethod
    def pinned(cls, pinning_mass: float = 1.0) -> "DispersionModel":
        if pinning_mass <= 0:
            raise ValueError("pinning_mass: must be > 0 for the pinned family")
        return cls("pinned-nn", float(pinning_mass), float(pinning_mass) ** 2, (-1.0,))

    @classmethod
    def custom(cls, alpha0_hat: float, coeffs, source: str = "") -> "DispersionModel":
        """Custom potential from alpha_hat(0) and the couplings alpha_1, alpha_2, ..."""
        coeffs = tuple(float(c) for c in np.atleast_1d(coeffs))
        mass = float(np.sqrt(max(alpha0_hat, 0.0)))
        return cls("custom", mass, float(alpha0_hat), coeffs, source)

    @classmethod
    def from_table(cls, path, n_modes: int | None = None, tol: float = 1e-8) -> "DispersionModel":
        """Fit a cosine series to a CSV table with columns (k, alpha_hat)."""
        path = Path(path)
        rows = []
        with path.open(newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    rows.append((float(row[0]), float(row[1])))
                except ValueError:
                    continue  # header
        if len(rows) < 8:
            raise ValueError("custom_table: need at least 8 rows of (k, alpha_hat)")
        k, a = np.array(rows).T
        if np.any(np.abs(k) > 0.5):
            raise ValueError("custom_table: k values must lie in [-1/2, 1/2]")
        n_modes = n_modes or max(1, min(32, len(rows) // 4))
        y = np.arange(1, n_modes + 1)
        design = np.column_stack([np.ones_like(k), -4.0 * np.sin(PI * np.outer(k, y)) ** 2])
        sol, *_ = np.linalg.lstsq(design, a, rcond=None)
        scale = max(np.max(np.abs(a)), 1.0)
        resid = np.max(np.abs(design @ sol - a)) / scale
        if resid > tol:
            raise ValueError(
                f"custom_table: table is not an even trigonometric series of <= {n_modes} modes "
                f"(relative residual {resid:.2e})"
            )
        a0 = float(sol[0])
        if abs(a0) < 1e-10 * scale:
            a0 = 0.0
        return cls.custom(a0, sol[1:], source=str(path))

    # -- validation ---------------------------------------------------------

    def _validate(self):
        if self.alpha0_hat < 0:
            raise ValueError("alpha_hat(0) must be >= 0")
        if self.family == "pinned-nn" and abs(self.alpha0_hat - self.pinning_mass**2) > 1e-12:
            raise ValueError("pinned-nn: alpha_hat(0) must equal pinning_mass**2")
        if self.family == "unpinned-nn" and (self.alpha0_hat != 0 or self.pinning_mass != 0):
            raise ValueError("unpinned-nn: no pinning allowed")
        k = np.linspace(1e-3, 0.5, 2001)
        if np.any(self._alpha_series(k) <= 0):
            raise ValueError("alpha_hat must be positive for k != 0")
        if self.alpha0_hat == 0 and self.alpha_hat_dd0 <= 0:
            raise ValueError("unpinned potential needs alpha_hat''(0) > 0")

    # -- evaluation ---------------------------------------------------------

    @property
    def pinned_flag(self) -> bool:
        return self.alpha0_hat > 0

    @property
    def alpha_hat_dd0(self) -> float:
        """Second derivative of alpha_hat at 0."""
        y = np.arange(1, len(self.coeffs) + 1)
        return float(-8.0 * PI**2 * np.sum(np.asarray(self.coeffs) * y**2))

    def _alpha_series(self, k):
        k = np.asarray(k, dtype=float)
        y = np.arange(1, len(self.coeffs) + 1)
        s = np.sin(PI * np.multiply.outer(k, y)) ** 2
        return self.alpha0_hat - 4.0 * s @ np.asarray(self.coeffs)

    def _alpha_series_prime(self, k):
        k = np.asarray(k, dtype=float)
        y = np.arange(1, len(self.coeffs) + 1)
        s = np.sin(2 * PI * np.multiply.outer(k, y))
        return -4.0 * PI * s @ (np.asarray(self.coeffs) * y)

    def alpha_hat(self, k):
        if self.family == "custom":
            return _scalar(self._alpha_series(k))
        return _scalar(self.alpha0_hat + 4.0 * np.sin(PI * np.asarray(k, dtype=float)) ** 2)

    def omega(self, k):
        k = np.asarray(k, dtype=float)
        if self.family == "unpinned-nn":
            return _scalar(2.0 * np.abs(np.sin(PI * k)))
        return _scalar(np.sqrt(np.maximum(self.alpha_hat(k), 0.0)))

    def omega_prime(self, k):
        """Group velocity d omega / dk, odd, with the value 0 at k = 0."""
        k = np.asarray(k, dtype=float)
        if self.family == "unpinned-nn":
            return _scalar(2.0 * PI * np.cos(PI * k) * np.sign(k))
        if self.family == "pinned-nn":
            return _scalar(2.0 * PI * np.sin(2 * PI * k) / np.sqrt(self.alpha_hat(k)))
        w = np.sqrt(np.maximum(self._alpha_series(k), 0.0))
        d = self._alpha_series_prime(k)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(w > 0, d / (2.0 * np.where(w > 0, w, 1.0)), 0.0)
        if not self.pinned_flag:
            # the one-sided limit at 0 is +/- sqrt(alpha''(0)/2), the convention is 0
            out = np.where(k == 0, 0.0, out)
        return _scalar(out)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "pinning_mass": self.pinning_mass,
            "alpha0_hat": self.alpha0_hat,
            "coeffs": list(self.coeffs),
            "alpha_hat_dd0": self.alpha_hat_dd0,
            "source": self.source,
        }

    @classmethod
    def from_config(cls, family: str = "unpinned-nn", pinning_mass: float = 0.0, custom_table=None):
        family = family.strip().lower()
        if family == "unpinned-nn":
            return cls.unpinned()
        if family == "pinned-nn":
            return cls.pinned(pinning_mass)
        if family == "custom":
            if not custom_table:
                raise ValueError("custom_table: required for family = custom")
            return cls.from_table(custom_table)
        raise ValueError(f"family: unknown value {family!r}")


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


# ---------------------------------------------------------------------------
# scattering kernel (depends on the noise only)


def beta_hat(k):
    s2 = np.sin(PI * np.asarray(k, dtype=float)) ** 2
    return _scalar(8.0 * s2 * (1.0 + 2.0 * (1.0 - s2)))


def r_elementary(k, kp):
    """Product form 4 sin(pi k) sin(pi (k - k')) sin(pi (2k - k'))."""
    k, kp = np.asarray(k, dtype=float), np.asarray(kp, dtype=float)
    return _scalar(4.0 * np.sin(PI * k) * np.sin(PI * (k - kp)) * np.sin(PI * (2 * k - kp)))


def r_three_sine(k, kp):
    """Sum form sin(2 pi k) + sin(2 pi (k - k')) + sin(2 pi (k' - 2k))."""
    k, kp = np.asarray(k, dtype=float), np.asarray(kp, dtype=float)
    t = 2 * PI
    return _scalar(np.sin(t * k) + np.sin(t * (k - kp)) + np.sin(t * (kp - 2 * k)))


def R_kernel(k, kp):
    k, kp = np.asarray(k, dtype=float), np.asarray(kp, dtype=float)
    return _scalar(
        8.0
        * np.sin(PI * k) ** 2
        * np.sin(PI * kp) ** 2
        * (np.sin(PI * (k + kp)) ** 2 + np.sin(PI * (k - kp)) ** 2)
    )


def R_eps_kernel(p, k, kp, eps):
    """Scattering kernel at finite scale: half the sum over both signs of
    r(k - eps p/2, k + s k') r(k + eps p/2, k + s k')."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0, 1]")
    k, kp, p = (np.asarray(a, dtype=float) for a in (k, kp, p))
    shift = 0.5 * eps * p
    total = 0.0
    for s in (1.0, -1.0):
        target = k + s * kp
        total = total + r_elementary(k - shift, target) * r_elementary(k + shift, target)
    return _scalar(0.5 * total)


def e_plus(k):
    """Density (8/3) sin^4(pi k); integrates to one."""
    return _scalar(8.0 / 3.0 * np.sin(PI * np.asarray(k, dtype=float)) ** 4)


def e_minus(k):
    """Density 2 sin^2(2 pi k); integrates to one."""
    return _scalar(2.0 * np.sin(2 * PI * np.asarray(k, dtype=float)) ** 2)


def e_basis(iota: int, k):
    if iota == 1:
        return e_plus(k)
    if iota == -1:
        return e_minus(k)
    raise ValueError("iota must be +1 or -1")


def r_sum(k):
    return _scalar(np.asarray(e_plus(k)) + np.asarray(e_minus(k)))


def R_total(k):
    """Total scattering rate 2 sin^2(pi k) (1 + 2 cos^2(pi k))."""
    s2 = np.sin(PI * np.asarray(k, dtype=float)) ** 2
    return _scalar(2.0 * s2 * (3.0 - 2.0 * s2))


def theta(k):
    """Mean holding time 1 / R_total, +inf at k = 0."""
    with np.errstate(divide="ignore"):
        return _scalar(1.0 / np.asarray(R_total(k)))


@dataclass(frozen=True)
class ScatteringTables:
    e_plus: Callable
    e_minus: Callable
    r_sum: Callable
    R_total: Callable
    beta_hat: Callable
    theta: Callable


def scattering_tables(model: DispersionModel | None = None) -> ScatteringTables:
    """Closed-form kernel pieces.  The kernel is set by the noise, so the
    model argument is accepted for interface symmetry only."""
    return ScatteringTables(e_plus, e_minus, r_sum, R_total, beta_hat, theta)
