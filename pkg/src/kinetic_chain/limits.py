"""Limit constants by quadrature and small linear algebra.

The observable driving the limit theorems is psi = omega' * theta, the
group velocity times the mean holding time.  Near k = 0 it diverges like
k^-2 for an acoustic chain (stable tails, index 3/2) and like k^-1 for a
pinned one (square integrable, Gaussian limit).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize, special

from .model import DispersionModel, R_total, e_minus, e_plus, r_sum, theta
from .quadrature import interval_rule, torus_grid

__all__ = [
    "psi_observable",
    "ObservablePsi",
    "tail_function",
    "tail_constant",
    "TailConstant",
    "tail_constant_formula",
    "tail_constant_leading_order",
    "levy_exponent",
    "stable_integrals",
    "sine_power_integral",
    "stable_c_hat_formula",
    "stable_c_hat_pipeline",
    "theta_bar",
    "theta_tail_index",
    "apply_P",
    "poisson_solve",
    "PoissonSolution",
    "sigma_sq",
    "gaussian_c_hats",
    "LimitConstants",
    "limit_constants",
    "LAMBDA_LADDER",
]

LAMBDA_LADDER = tuple(10.0 ** e for e in (2.0, 2.5, 3.0, 3.5, 4.0))


def psi_observable(model: DispersionModel, k):
    """Group velocity times mean holding time, omega'(k) / R_total(k)."""
    k = np.asarray(k, dtype=float)
    if np.any(k == 0):
        raise ValueError("psi is undefined at k = 0")
    out = np.asarray(model.omega_prime(k)) / np.asarray(R_total(k))
    return float(out) if out.ndim == 0 else out


@dataclass
class ObservablePsi:
    """psi together with its tail indices.

    alpha is 3/2 for an acoustic chain and 2 (square integrable) when pinned.
    alpha1 is the measured correction exponent of the tail expansion and
    alpha2 the measured tail index of the holding time under pi.
    """

    model: DispersionModel
    alpha: float
    alpha1: float | None = None
    alpha2: float | None = None

    def __call__(self, k):
        return psi_observable(self.model, k)

    @classmethod
    def for_model(cls, model: DispersionModel) -> "ObservablePsi":
        return cls(model, 2.0 if model.pinned_flag else 1.5)


# ---------------------------------------------------------------------------
# tails


def _pi_mass(a: float, b: float) -> float:
    """pi([a, b]) with pi = r/2 dk, exact for the short intervals used here."""
    x, w = interval_rule(a, b, 48)
    return float(0.5 * np.dot(w, r_sum(x)))


def _superlevel_edge(g: Callable, lam: float, side: float) -> float:
    """Edge k_lam of {side*k in (0, k_lam)} = {g > lam}, checked to be an
    interval attached to 0."""
    u = np.geomspace(1e-12, 0.5, 6000)[:-1]
    vals = g(side * u)
    above = vals > lam
    if not above[0]:
        raise ValueError(f"bracketing failure: psi does not exceed {lam:g} next to k = 0")
    first_below = np.argmin(above)
    if above[first_below] or np.any(above[first_below:]):
        raise ValueError(f"bracketing failure: {{psi > {lam:g}}} is not an interval at k = 0")
    lo, hi = u[first_below - 1], u[first_below]
    return optimize.brentq(lambda x: g(side * x) - lam, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps)


def tail_function(model: DispersionModel, lam: float, sign: int = 1) -> float:
    """pi(sign * psi > lam) for lam >= 1."""
    if lam < 1:
        raise ValueError("lambda must be >= 1")
    g = lambda k: sign * psi_observable(model, k)  # noqa: E731
    # the superlevel set sits on the side of 0 where sign * psi blows up to +inf
    side = 1.0 if g(1e-9) > 0 else -1.0
    edge = _superlevel_edge(g, lam, side)
    return _pi_mass(0.0, edge)


@dataclass
class TailConstant:
    c_plus: float
    c_minus: float
    ladder: list
    scaled_plus: list
    scaled_minus: list
    relative_spread: float
    alpha1: float | None
    formula: float
    leading_order: float


def tail_constant_formula(model: DispersionModel) -> float:
    """Closed form 2^(-1/4) 3^(-5/2) pi^(1/2) alpha''(0)^(3/4), kept as a
    reference value."""
    return 2 ** -0.25 * 3 ** -2.5 * math.sqrt(math.pi) * model.alpha_hat_dd0 ** 0.75


def tail_constant_leading_order(model: DispersionModel) -> float:
    """Leading-order value from psi ~ v0 / (6 pi^2 k^2) and pi ~ 4 pi^2 k^2 dk
    near 0, with v0 = sqrt(alpha''(0) / 2)."""
    v0 = math.sqrt(model.alpha_hat_dd0 / 2)
    return 4 * math.pi**2 / 3 * (v0 / (6 * math.pi**2)) ** 1.5


def _extrapolate(lams: np.ndarray, g: np.ndarray) -> tuple[float, float | None]:
    """Fit g = c + C lam^-a1 and return (c, a1); falls back to the last
    value when the sequence is already flat to rounding."""
    if np.ptp(g) <= 1e-13 * abs(g[-1]):
        return float(g[-1]), None
    x = np.log(lams)
    try:
        popt, _ = optimize.curve_fit(
            lambda x, c, cc, a: c + cc * np.exp(-a * x),
            x,
            g,
            p0=(g[-1], (g[0] - g[-1]) * lams[0], 1.0),
            bounds=([-np.inf, -np.inf, 0.05], [np.inf, np.inf, 6.0]),
            maxfev=20000,
        )
        return float(popt[0]), float(popt[2])
    except RuntimeError:
        return float(g[-1]), None


def tail_constant(model: DispersionModel, ladder=LAMBDA_LADDER, alpha: float = 1.5) -> TailConstant:
    """Limits of lam^alpha pi(+-psi > lam) by Richardson-type extrapolation."""
    if model.pinned_flag:
        raise ValueError("tail_constant needs an unpinned model")
    lams = np.asarray(ladder, dtype=float)
    gp = np.array([lam**alpha * tail_function(model, lam, +1) for lam in lams])
    gm = np.array([lam**alpha * tail_function(model, lam, -1) for lam in lams])
    spread = float(np.ptp(gp) / np.mean(gp))
    cp, a1 = _extrapolate(lams, gp)
    cm, _ = _extrapolate(lams, gm)
    if spread > 0.01:
        raise ArithmeticError(f"tail extrapolation did not converge (relative spread {spread:.3g})")
    return TailConstant(
        cp,
        cm,
        lams.tolist(),
        gp.tolist(),
        gm.tolist(),
        spread,
        a1,
        tail_constant_formula(model),
        tail_constant_leading_order(model),
    )


def theta_tail_index(ladder=(1e2, 1e3, 1e4, 1e5)) -> float:
    """Slope of -log pi(theta > lam) against log lam."""
    lams = np.asarray(ladder, dtype=float)
    probs = []
    for lam in lams:
        # theta > lam  <=>  R_total < 1/lam, an interval around 0
        edge = optimize.brentq(lambda k: R_total(k) - 1 / lam, 1e-14, 0.5, xtol=1e-300)
        probs.append(2 * _pi_mass(0.0, edge))
    slope = np.polyfit(np.log(lams), np.log(probs), 1)[0]
    return float(-slope)


# ---------------------------------------------------------------------------
# stable law


def _series_cos(alpha: float, u0: float, terms: int = 30) -> float:
    """Integral over [0, u0] of (1 - cos u) / u^(1+alpha) from its power series."""
    total = 0.0
    for n in range(1, terms + 1):
        total += (-1) ** (n + 1) * u0 ** (2 * n - alpha) / ((2 * n - alpha) * math.factorial(2 * n))
    return total


def _series_sin(alpha: float, u0: float, terms: int = 30) -> float:
    """Integral over [0, u0] of (u - sin u) / u^(1+alpha)."""
    total = 0.0
    for n in range(1, terms + 1):
        total += (-1) ** (n + 1) * u0 ** (2 * n + 1 - alpha) / ((2 * n + 1 - alpha) * math.factorial(2 * n + 1))
    return total


def stable_integrals(alpha: float, tol: float = 1e-13) -> tuple[float, float]:
    """(I_c, I_s) with I_c = int_0^inf (1 - cos u) u^-(1+alpha) du and
    I_s = int_0^inf (u - sin u) u^-(1+alpha) du."""
    if not 1 < alpha < 2:
        raise ValueError("alpha must lie in (1, 2)")
    tail_c, err_c = integrate.quad(lambda u: u ** (-1 - alpha), 1, np.inf, weight="cos", wvar=1.0, epsabs=tol)
    tail_s, err_s = integrate.quad(lambda u: u ** (-1 - alpha), 1, np.inf, weight="sin", wvar=1.0, epsabs=tol)
    if max(err_c, err_s) > 1e3 * tol:
        raise ArithmeticError("oscillatory tail quadrature did not meet tolerance")
    i_c = _series_cos(alpha, 1.0) + 1.0 / alpha - tail_c
    i_s = _series_sin(alpha, 1.0) + 1.0 / (alpha - 1.0) - tail_s
    return i_c, i_s


def levy_exponent(p: float, alpha: float, c_plus: float, c_minus: float) -> complex:
    """Exponent psi(p) of a stable law with tail constants c+ and c-:
    alpha * int (1 + i lam p - exp(i lam p)) c(lam) |lam|^-(1+alpha) dlam."""
    if p == 0:
        return 0j
    i_c, i_s = stable_integrals(alpha)
    ap = abs(p) ** alpha
    re = alpha * (c_plus + c_minus) * i_c * ap
    im = alpha * (c_plus - c_minus) * i_s * ap * math.copysign(1.0, p)
    return complex(re, im)


def sine_power_integral() -> float:
    """int_0^inf sin^2 x / x^(5/2) dx, by series on [0, 1] and an
    oscillatory-weight rule on the tail."""
    # sin^2 x = (1 - cos 2x) / 2
    head = 0.0
    for n in range(1, 30):
        # (1 - cos 2x)/2 = sum (-1)^(n+1) 2^(2n-1) x^(2n) / (2n)!
        head += (-1) ** (n + 1) * 2 ** (2 * n - 1) / math.factorial(2 * n) / (2 * n - 1.5)
    tail_cos, _ = integrate.quad(lambda x: x**-2.5, 1, np.inf, weight="cos", wvar=2.0, epsabs=1e-13, limlst=200)
    return head + 0.5 / 1.5 - 0.5 * tail_cos


def stable_c_hat_formula(model: DispersionModel) -> float:
    """Closed form (pi^2 alpha''(0) / 2)^(3/4), reported for comparison."""
    if model.pinned_flag:
        raise ValueError("needs an unpinned model")
    return (math.pi**2 * model.alpha_hat_dd0 / 2) ** 0.75


def theta_bar(n_panels: int = 2048) -> float:
    """Mean holding time under pi."""
    g = torus_grid(n_panels)
    return float(np.dot(g.weights, 0.5 * r_sum(g.nodes) * theta(g.nodes)))


def stable_c_hat_pipeline(model: DispersionModel, theta_power: str = "renewal", tail: TailConstant | None = None) -> dict:
    """Coefficient c in exp(-c |p|^(3/2) t) from the numerical tail constant.

    The holding-time mean enters as theta_bar^-s; ``theta_power`` selects
    s = 1 ("renewal", the number of jumps by time t is t/theta_bar) or
    s = alpha ("alpha").
    """
    tail = tail or tail_constant(model)
    alpha = 1.5
    tb = theta_bar()
    s = {"renewal": 1.0, "alpha": alpha}[theta_power]
    gamma = special.gamma(alpha + 1)
    c_plus = tb**-s * gamma * tail.c_plus
    c_minus = tb**-s * gamma * tail.c_minus
    c_hat = levy_exponent(1.0, alpha, c_plus, c_minus).real
    return {
        "c_hat": c_hat,
        "theta_power": theta_power,
        "theta_bar": tb,
        "gamma": gamma,
        "c_tilde_plus": c_plus,
        "c_tilde_minus": c_minus,
        "c_star_plus": tail.c_plus,
        "sine_integral": sine_power_integral(),
    }


# ---------------------------------------------------------------------------
# Poisson equation and Gaussian constants


def apply_P(f_values: np.ndarray, nodes: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """P f on the nodes, with f given by its values there."""
    mp = np.dot(weights, e_plus(nodes) * f_values)
    mm = np.dot(weights, e_minus(nodes) * f_values)
    rr = r_sum(nodes)
    return (mp * e_minus(nodes) + mm * e_plus(nodes)) / rr


@dataclass
class PoissonSolution:
    """chi = psi + c_minus e_plus / r + c_plus e_minus / r."""

    psi: Callable
    c_minus: float
    c_plus: float
    condition: float = field(default=float("nan"))

    def __call__(self, k):
        k = np.asarray(k, dtype=float)
        rr = r_sum(k)
        return self.psi(k) + (self.c_minus * e_plus(k) + self.c_plus * e_minus(k)) / rr

    def P_chi(self, k):
        """P chi = chi - psi."""
        k = np.asarray(k, dtype=float)
        return (self.c_minus * e_plus(k) + self.c_plus * e_minus(k)) / r_sum(k)


def poisson_solve(psi: Callable, n_panels: int = 2048, mean_tol: float = 1e-10) -> PoissonSolution:
    """Zero-mean solution of chi - P chi = psi.

    The range of P is spanned by g_- = e_plus/r and g_+ = e_minus/r, so
    chi = psi + c_- g_- + c_+ g_+ and the equation reduces to two linear
    conditions on (c_-, c_+).  Constants solve the homogeneous problem,
    which is why the zero-mean row is appended.
    """
    g = torus_grid(n_panels)
    k, w = g.nodes, g.weights
    ep, em, rr = e_plus(k), e_minus(k), r_sum(k)
    pi_w = 0.5 * rr * w
    psi_k = psi(k)
    mean = float(np.dot(pi_w, psi_k))
    if abs(mean) > mean_tol * max(1.0, float(np.dot(pi_w, np.abs(psi_k)))):
        raise ValueError(f"psi must have zero pi-mean (got {mean:.3e})")
    gm, gp = ep / rr, em / rr

    def moments(f):
        return np.dot(w, ep * f), np.dot(w, em * f)

    # c_+ = <e_plus, chi>, c_- = <e_minus, chi>
    b_plus, b_minus = moments(psi_k)
    pp_m, pm_m = moments(gm)
    pp_p, pm_p = moments(gp)
    a = np.array(
        [
            [pp_m, pp_p - 1.0],  # <e_plus, chi> - c_+ = 0
            [pm_m - 1.0, pm_p],  # <e_minus, chi> - c_- = 0
            [0.5, 0.5],  # pi-mean of chi = 0
        ]
    )
    rhs = np.array([-b_plus, -b_minus, -mean])
    sv = np.linalg.svd(a, compute_uv=False)
    if sv[-1] < 1e-12 * sv[0]:
        raise np.linalg.LinAlgError("singular 2x2 reduction; contradicts the spectral gap")
    (c_minus, c_plus), *_ = np.linalg.lstsq(a, rhs, rcond=None)
    return PoissonSolution(psi, float(c_minus), float(c_plus), float(sv[0] / sv[-1]))


def sigma_sq(model: DispersionModel, n_panels: int = 2048) -> dict:
    """Asymptotic variance of the partial sums of psi under the stationary chain.

    Returns the general expression int (chi^2 - (P chi)^2) dpi and the
    shortcut int psi^2 dpi = (8/9) int omega'^2 / r, valid since psi is odd.
    """
    if not model.pinned_flag:
        raise ValueError("sigma_sq needs a pinned model (psi is not square integrable otherwise)")
    g = torus_grid(n_panels)
    k, w = g.nodes, g.weights
    psi = lambda x: psi_observable(model, x)  # noqa: E731
    sol = poisson_solve(psi, n_panels)
    chi, pchi = sol(k), sol.P_chi(k)
    general = float(np.dot(w, 0.5 * r_sum(k) * (chi**2 - pchi**2)))
    shortcut = float(8.0 / 9.0 * np.dot(w, np.asarray(model.omega_prime(k)) ** 2 / r_sum(k)))
    return {"sigma_sq": general, "shortcut": shortcut}


def gaussian_c_hats(model: DispersionModel) -> dict:
    """Candidate Gaussian constants.

    ``nine_sigma_sq`` is the coefficient c in exp(-c p^2 t) (so the variance
    of Y_1 is 2c); ``two_theta_sq`` is a variance, 2 sigma^2 / theta_bar^2;
    ``renewal`` is the variance 2 sigma^2 / theta_bar obtained by counting
    t / theta_bar jumps with exponential holds of second moment 2.
    """
    s2 = sigma_sq(model)["sigma_sq"]
    tb = theta_bar()
    return {
        "sigma_sq": s2,
        "nine_sigma_sq": 9 * s2,
        "two_theta_sq": 2 * s2 / tb**2,
        "renewal": 2 * s2 / tb,
        "variance": {
            "nine_sigma_sq": 18 * s2,
            "two_theta_sq": 2 * s2 / tb**2,
            "renewal": 2 * s2 / tb,
        },
    }


@dataclass
class LimitConstants:
    c_star_plus: float
    c_star_minus: float
    c_hat_formula: float
    c_hat_pipeline: float
    theta_bar: float
    sigma_sq: float
    c_hat_gaussian_a: float
    c_hat_gaussian_b: float
    notes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def limit_constants(
    unpinned: DispersionModel | None = None,
    pinned: DispersionModel | None = None,
    theta_power: str = "renewal",
) -> LimitConstants:
    unpinned = unpinned or DispersionModel.unpinned()
    pinned = pinned or DispersionModel.pinned(1.0)
    tail = tail_constant(unpinned)
    pipe = stable_c_hat_pipeline(unpinned, theta_power, tail)
    alt = stable_c_hat_pipeline(unpinned, "alpha" if theta_power == "renewal" else "renewal", tail)
    gauss = gaussian_c_hats(pinned)
    notes = {
        "c_star_plus": f"lam^1.5 pi(psi > lam) extrapolated over {tail.ladder}; spread {tail.relative_spread:.2e}",
        "c_star_minus": "same ladder on the negative side",
        "c_star_formula_reference": tail.formula,
        "c_star_leading_order": tail.leading_order,
        "c_hat_formula": "(pi^2 alpha''(0)/2)^(3/4)",
        "c_hat_pipeline": f"tail constant -> Gamma(5/2) -> theta_bar^-s with s from '{theta_power}' -> Levy exponent at p=1",
        "c_hat_pipeline_alternative": {alt["theta_power"]: alt["c_hat"]},
        "theta_bar": "quadrature of theta r/2",
        "sigma_sq": f"int (chi^2 - (P chi)^2) dpi for {pinned.family} mass {pinned.pinning_mass}",
        "c_hat_gaussian_a": "9 sigma^2, coefficient of p^2 t (variance 18 sigma^2)",
        "c_hat_gaussian_b": "2 sigma^2 / theta_bar^2, variance of Y_1",
        "variance_renewal": gauss["renewal"],
        "alpha1": tail.alpha1,
        "alpha2_measured": theta_tail_index(),
    }
    return LimitConstants(
        tail.c_plus,
        tail.c_minus,
        stable_c_hat_formula(unpinned),
        pipe["c_hat"],
        pipe["theta_bar"],
        gauss["sigma_sq"],
        gauss["nine_sigma_sq"],
        gauss["two_theta_sq"],
        notes,
    )
