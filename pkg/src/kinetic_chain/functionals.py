"""Scaled additive functionals, empirical characteristic functions and
convergence-rate measurements.

Two functionals are simulated:

* Z = N^(-1/alpha) sum_{n=0}^{[N t]} psi(xi_n) over the skeleton chain;
* Y = N^(-1/beta) int_0^{N t} omega'(K_s) ds over the jump process.

Each path uses its own random stream, so any subset of paths can be
regenerated independently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import chain
from .chain import FIXED, STATIONARY, UNIFORM, JumpTrajectory, _jump_functional, _skeleton_sums, velocity_params
from .limits import PoissonSolution, psi_observable
from .model import DispersionModel
from .rng import stream

__all__ = [
    "CharFnEstimate",
    "empirical_charfn",
    "simulate_Y",
    "simulate_Z",
    "partial_sum_functional",
    "additive_functional",
    "stable_limit_test",
    "gaussian_limit_test",
    "RateSweepResult",
    "rate_sweep",
    "fit_rate",
    "delta_star",
    "tail_probability_check",
    "martingale_decompose",
    "martingale_regression",
]

START_MODES = {"stationary": STATIONARY, "uniform": UNIFORM}


@dataclass
class CharFnEstimate:
    p: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray  # complex: (std of cos, std of sin) / sqrt(n)
    n_samples: int
    meta: dict = field(default_factory=dict)

    def abs_stderr(self) -> np.ndarray:
        return np.hypot(self.stderr.real, self.stderr.imag)


def empirical_charfn(samples, p_grid, meta: dict | None = None) -> CharFnEstimate:
    """Sample mean of exp(i p Y) with componentwise standard errors."""
    y = np.asarray(samples, dtype=float)
    if y.size == 0:
        raise ValueError("empty sample set")
    if y.size < 100:
        raise ValueError("need at least 100 samples")
    p = np.atleast_1d(np.asarray(p_grid, dtype=float))
    arg = np.multiply.outer(p, y)
    c, s = np.cos(arg), np.sin(arg)
    mean = c.mean(axis=1) + 1j * s.mean(axis=1)
    se = (c.std(axis=1, ddof=1) + 1j * s.std(axis=1, ddof=1)) / math.sqrt(y.size)
    zero = p == 0
    mean[zero], se[zero] = 1.0, 0.0
    return CharFnEstimate(p, mean, se, int(y.size), dict(meta or {}))


# ---------------------------------------------------------------------------
# simulation


def simulate_Y(
    model: DispersionModel,
    N_values,
    t: float,
    n_paths: int,
    seed: int,
    beta: float | None = None,
    start: str | float = "stationary",
    domain: str = "Y",
    observable: str = "velocity",
    step_cap: int = chain.DEFAULT_STEP_CAP,
) -> np.ndarray:
    """Y^(N)_t for every N in ``N_values`` on shared paths.

    The unscaled integral over [0, N t] is read off one trajectory at all
    horizons N t, so the row for N is a prefix of the row for a larger N.
    Returns an array of shape (len(N_values), n_paths).
    """
    N_values = np.atleast_1d(np.asarray(N_values, dtype=float))
    if beta is None:
        beta = 2.0 if model.pinned_flag else 1.5
    order = np.argsort(N_values)
    horizons = N_values[order] * t
    a0, coeffs = velocity_params(model)
    kind = {"velocity": 0, "one": 1}[observable]
    if isinstance(start, str):
        mode, k0 = START_MODES[start], 0.0
    else:
        mode, k0 = FIXED, float(start)
    raw = np.empty((N_values.size, n_paths))
    for i in range(n_paths):
        out, _, _, status = _jump_functional(stream(seed, i, domain), mode, k0, horizons, kind, a0, coeffs, step_cap)
        chain._check(status)
        raw[order, i] = out
    return raw * (N_values ** (-1.0 / beta))[:, None]


def simulate_Z(
    model: DispersionModel,
    N: int,
    t: float,
    n_paths: int,
    seed: int,
    alpha: float | None = None,
    start: str | float = "stationary",
    domain: str = "Z",
) -> np.ndarray:
    """n_paths independent draws of Z^(N)_t."""
    if N < 1 or t < 0:
        raise ValueError("need N >= 1 and t >= 0")
    if alpha is None:
        alpha = 2.0 if model.pinned_flag else 1.5
    a0, coeffs = velocity_params(model)
    if isinstance(start, str):
        mode, k0 = START_MODES[start], 0.0
    else:
        mode, k0 = FIXED, float(start)
    m = np.array([int(math.floor(N * t))], dtype=np.int64)
    out = np.empty(n_paths)
    for i in range(n_paths):
        sums, status = _skeleton_sums(stream(seed, i, domain), mode, k0, m, a0, coeffs)
        chain._check(status)
        out[i] = sums[0]
    return out * N ** (-1.0 / alpha)


def partial_sum_functional(k0_mode, model: DispersionModel, N: int, t: float, rng: np.random.Generator, alpha=None) -> float:
    """One draw of Z^(N)_t with the given generator."""
    if alpha is None:
        alpha = 2.0 if model.pinned_flag else 1.5
    a0, coeffs = velocity_params(model)
    if isinstance(k0_mode, str):
        mode, k0 = START_MODES[k0_mode], 0.0
    else:
        mode, k0 = FIXED, float(k0_mode)
    m = np.array([int(math.floor(N * t))], dtype=np.int64)
    sums, status = _skeleton_sums(rng, mode, k0, m, a0, coeffs)
    chain._check(status)
    return float(sums[0]) * N ** (-1.0 / alpha)


def additive_functional(traj: JumpTrajectory, V, N: float, beta_index: float, t: float | None = None) -> float:
    """N^(-1/beta) sum_i V(k_i) hold_i along an explicit trajectory."""
    if t is not None and not math.isclose(traj.total_time, N * t, rel_tol=1e-12):
        raise ValueError("trajectory total_time does not equal N * t")
    return float(np.dot(np.asarray(V(traj.states), dtype=float) * np.ones(traj.states.size), traj.holds)) * N ** (
        -1.0 / beta_index
    )


# ---------------------------------------------------------------------------
# limit tests


def _fit_stable(est: CharFnEstimate, t: float) -> dict:
    phi = est.mean
    se = est.abs_stderr()
    mod = np.abs(phi)
    if np.any(mod < 10 * se):
        bad = est.p[mod < 10 * se].tolist()
        raise ArithmeticError(f"|phi| < 10 stderr at p = {bad}: p too large for this N and sample size")
    x = t * np.abs(est.p) ** 1.5
    y = -np.log(mod)
    per_p = y / x
    per_p_se = se / mod / x
    c_hat = float(np.dot(x, y) / np.dot(x, x))
    c_se = float(np.sqrt(np.sum((x * se / mod) ** 2)) / np.dot(x, x))
    return {"c_hat": c_hat, "c_hat_se": c_se, "per_p": per_p.tolist(), "per_p_se": per_p_se.tolist()}


def stable_limit_test(
    model: DispersionModel,
    N: float,
    t: float,
    p_grid,
    n_paths: int,
    seed: int,
    c_hat_pipeline: float | None = None,
    c_hat_formula: float | None = None,
    samples: np.ndarray | None = None,
    start: str = "stationary",
) -> dict:
    """Characteristic function of Y^(N)_t and the fitted stable coefficient."""
    if n_paths < 10_000 and samples is None:
        raise ValueError("n_paths must be >= 10^4")
    if model.pinned_flag:
        raise ValueError("stable_limit_test needs an unpinned model")
    y = samples if samples is not None else simulate_Y(model, [N], t, n_paths, seed, 1.5, start)[0]
    est = empirical_charfn(y, p_grid, {"N": N, "t": t, "model": model.family, "seed": seed})
    imag_z = np.abs(est.mean.imag) / np.where(est.stderr.imag > 0, est.stderr.imag, 1.0)
    report = {
        "estimate": est,
        "real_within_3se": bool(np.all(imag_z <= 3)),
        "imag_z": imag_z.tolist(),
    }
    try:
        fit = _fit_stable(est, t)
        per = np.array(fit["per_p"])
        fit["spread"] = float(per.max() / per.min() - 1)
        report.update(fit)
        report["identifiable"] = True
    except ArithmeticError as exc:
        report["identifiable"] = False
        report["reason"] = str(exc)
    for name, ref in (("pipeline", c_hat_pipeline), ("formula", c_hat_formula)):
        if ref is not None and report["identifiable"]:
            report[f"rel_diff_{name}"] = report["c_hat"] / ref - 1
    return report


def gaussian_limit_test(
    model: DispersionModel,
    N: float,
    t: float,
    p_grid,
    n_paths: int,
    seed: int,
    candidates: dict | None = None,
    samples: np.ndarray | None = None,
    start: str = "stationary",
) -> dict:
    """Moments and characteristic function of Y^(N)_t in the Gaussian regime.

    ``candidates`` maps names to candidate variances of Y_1.
    """
    if n_paths < 10_000 and samples is None:
        raise ValueError("n_paths must be >= 10^4")
    y = samples if samples is not None else simulate_Y(model, [N], t, n_paths, seed, 2.0, start)[0]
    n = y.size
    mean = float(y.mean())
    var = float(y.var(ddof=1))
    m4 = float(np.mean((y - mean) ** 4))
    excess = m4 / var**2 - 3.0
    # delta-method standard errors from the sample itself
    var_se = math.sqrt(max(m4 - var**2, 0.0) / n)
    kurt_se = float(np.std(((y - mean) ** 4 - 6 * var * (y - mean) ** 2) / var**2, ddof=1) / math.sqrt(n))
    kurt_se = max(kurt_se, math.sqrt(24.0 / n))
    est = empirical_charfn(y, p_grid, {"N": N, "t": t, "model": model.family, "seed": seed})
    report = {
        "estimate": est,
        "mean": mean,
        "mean_se": math.sqrt(var / n),
        "variance_per_t": var / t,
        "variance_se": var_se / t,
        "excess_kurtosis": excess,
        "excess_kurtosis_se": kurt_se,
        "distances": {},
    }
    if candidates:
        for name, v in candidates.items():
            target = np.exp(-v * est.p**2 * t / 2)
            report["distances"][name] = float(np.max(np.abs(est.mean - target)))
        best = min(candidates, key=lambda c: abs(candidates[c] / (var / t) - 1))
        report["matching_candidate"] = best
        report["relative_diffs"] = {c: var / t / v - 1 for c, v in candidates.items()}
    return report


# ---------------------------------------------------------------------------
# rates


@dataclass
class RateSweepResult:
    N: list
    errors: list
    stderr: list
    slope: float | None
    slope_ci: tuple | None
    delta: float
    identifiable: bool
    note: str = ""


def delta_star(regime: str, alpha2: float, alpha: float | None = None) -> float:
    """Guaranteed rate exponent for the jump-process functional."""
    if regime == "stable":
        a = alpha or 1.5
        return min(a / (a + 1), (alpha2 - 1) / (a * alpha2 + 1))
    if regime == "gaussian":
        return min(1.0 / 3.0, (alpha2 - 1) / (1 + 2 * alpha2))
    raise ValueError("regime must be 'stable' or 'gaussian'")


def fit_rate(N, errors, stderr) -> tuple[float | None, tuple | None, bool, str]:
    """Log-log slope of the bias with the noise floor subtracted."""
    N, err, se = (np.asarray(a, dtype=float) for a in (N, errors, stderr))
    ok = err > 3 * se
    if ok.sum() < 2:
        return None, None, False, "errors at or below 3 stderr: slope unidentifiable"
    near = err[ok] < 10 * se[ok]
    bias = np.where(near, np.sqrt(np.maximum(err[ok] ** 2 - se[ok] ** 2, 0.0)), err[ok])
    x, y = np.log(N[ok]), np.log(bias)
    if ok.sum() == 2:
        slope = float((y[1] - y[0]) / (x[1] - x[0]))
        return slope, None, True, "two identifiable points"
    res = stats.linregress(x, y)
    tq = stats.t.ppf(0.975, ok.sum() - 2)
    return float(res.slope), (res.slope - tq * res.stderr, res.slope + tq * res.stderr), True, ""


def rate_sweep(
    regime: str,
    N_ladder,
    p: float,
    t: float,
    n_paths: int,
    seed: int,
    target: complex,
    model: DispersionModel,
    alpha2: float,
    samples: np.ndarray | None = None,
    start: str = "stationary",
) -> RateSweepResult:
    """Error |phi_N(p) - target| along the N ladder and its fitted decay."""
    N_ladder = np.asarray(N_ladder, dtype=float)
    if N_ladder.size < 4:
        raise ValueError("ladder needs at least 4 values")
    if np.any(np.diff(N_ladder) <= 0):
        raise ValueError("ladder must be strictly increasing")
    beta = 1.5 if regime == "stable" else 2.0
    ys = samples if samples is not None else simulate_Y(model, N_ladder, t, n_paths, seed, beta, start)
    errs, ses = [], []
    for y in ys:
        est = empirical_charfn(y, [p])
        errs.append(float(abs(est.mean[0] - target)))
        ses.append(float(est.abs_stderr()[0]))
    slope, ci, ident, note = fit_rate(N_ladder, errs, ses)
    return RateSweepResult(N_ladder.tolist(), errs, ses, slope, ci, delta_star(regime, alpha2), ident, note)


# ---------------------------------------------------------------------------
# tail probability


def tail_probability_check(
    N_values,
    t: float,
    kappa: float,
    n_paths: int,
    seed: int,
    model: DispersionModel | None = None,
) -> dict:
    """Frequency of |Z^(N)_t| >= N^kappa with Wilson intervals and a
    power-law fit C (t + 1) / N^delta."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    model = model or DispersionModel.unpinned()
    rows = []
    for j, N in enumerate(N_values):
        z = simulate_Z(model, int(N), t, n_paths, seed, domain=f"tail-{j}")
        hits = int(np.sum(np.abs(z) >= N**kappa))
        ci = stats.binomtest(hits, n_paths).proportion_ci(0.95, method="wilson")
        rows.append({"N": int(N), "hits": hits, "freq": hits / n_paths, "lo": ci.low, "hi": ci.high})
    freq = np.array([r["freq"] for r in rows])
    pos = freq > 0
    out = {"rows": rows, "kappa": kappa, "t": t}
    if pos.sum() < 3:
        out.update(delta=None, delta_lo=None, C=None, identifiable=False)
        return out
    Ns = np.array([r["N"] for r in rows], dtype=float)[pos]
    hits = np.array([r["hits"] for r in rows], dtype=float)[pos]
    # weighted least squares on log frequency; Var(log f) ~ (1 - f) / hits
    w = hits / (1 - freq[pos])
    X = np.column_stack([np.ones(pos.sum()), -np.log(Ns)])
    Wm = np.diag(w)
    cov = np.linalg.inv(X.T @ Wm @ X)
    beta = cov @ X.T @ Wm @ np.log(freq[pos])
    delta, delta_se = float(beta[1]), float(math.sqrt(cov[1, 1]))
    C = float(math.exp(beta[0]) / (t + 1))
    z = stats.norm.ppf(0.975)
    out.update(
        delta=delta,
        delta_se=delta_se,
        delta_lo=delta - z * delta_se,
        C=C,
        identifiable=True,
        bound_holds=bool(np.all(freq[pos] <= C * (t + 1) / Ns**delta * 3)),
    )
    return out


# ---------------------------------------------------------------------------
# martingale decomposition


def martingale_decompose(path: np.ndarray, chi: PoissonSolution) -> tuple[float, float, np.ndarray]:
    """Split sum_{n=0}^{m} psi(xi_n) into M_m + boundary.

    M_m = sum_{n=1}^{m} [chi(xi_n) - P chi(xi_{n-1})] and the boundary term
    is chi(xi_0) - P chi(xi_m).  Returns (M_m, boundary, increments).
    """
    path = np.asarray(path, dtype=float)
    c = chi(path)
    pc = chi.P_chi(path)
    inc = c[1:] - pc[:-1]
    return float(inc.sum()), float(c[0] - pc[-1]), inc


def martingale_regression(paths, chi: PoissonSolution, n_basis: int = 8) -> dict:
    """Regress martingale increments on functions of the previous state and
    F-test the joint significance of the slopes."""
    xs, ys = [], []
    for path in paths:
        _, _, inc = martingale_decompose(path, chi)
        xs.append(np.asarray(path[:-1]))
        ys.append(inc)
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    cols = [np.ones_like(x)]
    for j in range(1, n_basis // 2 + 1):
        cols += [np.cos(2 * np.pi * j * x), np.sin(2 * np.pi * j * x)]
    X = np.column_stack(cols[: n_basis + 1])
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    rss1 = float(np.sum((y - X @ beta) ** 2))
    rss0 = float(np.sum((y - y.mean()) ** 2))
    q = X.shape[1] - 1
    dof = y.size - X.shape[1]
    F = ((rss0 - rss1) / q) / (rss1 / dof)
    pval = float(stats.f.sf(F, q, dof))
    return {"F": F, "p_value": pval, "n": int(y.size), "n_basis": q}
