"""Run configuration, acceptance checks, provenance and reports.

Each ``criterion_*`` function runs one acceptance criterion and returns a
:class:`CriterionResult`: tri-state checks plus any data tables.  The
experiments exposed by the command line are groups of criteria.
"""

from __future__ import annotations

import configparser
import csv
import functools
import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from . import __version__, chain, functionals, kinetic, lattice, limits
from .model import DispersionModel, R_kernel, beta_hat, e_minus, e_plus
from .quadrature import torus_grid
from .rng import stream

PASS, FAIL, UNIDENTIFIABLE = "pass", "fail", "unidentifiable"
THEOREM_KEYS = ("thm-main1", "prop1", "prop1a", "main-1", "main-5", "main", "L1-bounds", "r-beta", "conservation")
KINDS = ("constants", "charfn", "rates", "kinetic-solve", "semigroup", "lattice-sim", "verify-all")


class ConfigError(ValueError):
    def __init__(self, field_name: str, reason: str):
        super().__init__(f"{field_name}: {reason}")
        self.field = field_name
        self.reason = reason


# ---------------------------------------------------------------------------
# configuration

# (type, lower, upper) per key; "floats" are comma-separated lists
SCHEMA = {
    "model": {
        "family": ("choice", ("unpinned-nn", "pinned-nn", "custom")),
        "pinning_mass": ("float", 0.0, 100.0),
        "custom_table": ("str",),
    },
    "functionals": {
        "N_ladder": ("floats", 1.0, 1e8),
        "oracle_N": ("floats", 1.0, 1e8),
        "t": ("float", 1e-6, 100.0),
        "p_grid": ("floats", 0.0, 100.0),
        "p_fit": ("floats", 0.0, 100.0),
        "p_rate": ("float", 1e-6, 100.0),
        "n_paths": ("int", 100, 10**8),
        "kappa": ("float", 1e-6, 10.0),
        "tail_N": ("floats", 1.0, 1e8),
        "tail_paths": ("int", 100, 10**8),
    },
    "kinetic": {
        "dt": ("float", 1e-5, 10.0),
        "method": ("choice", ("trapezoidal", "exponential")),
        "mc_paths": ("int", 1000, 10**8),
    },
    "semigroup": {
        "a_values": ("floats", 1e-6, 1.0),
        "t_max": ("float", 10.0, 1e5),
        "dt": ("float", 1e-3, 10.0),
    },
    "lattice": {
        "L": ("int", 4, 1 << 22),
        "eps": ("float", 1e-6, 1.0),
        "eps_trend": ("float", 1e-6, 1.0),
        "M": ("int", 1, 10**6),
        "h": ("float", 1e-5, 0.1),
        "times": ("floats", 0.0, 100.0),
        "steps": ("int", 1, 10**8),
        "h_max": ("float", 1e-5, 1.0),
    },
}

PRESETS = {
    "quick": {
        "model": {"family": "unpinned-nn", "pinning_mass": "1.0", "custom_table": ""},
        "functionals": {
            "N_ladder": "1e2, 1e3, 1e4, 1e5",
            "oracle_N": "1e3, 1e4, 1e5, 1e6",
            "t": "1.0",
            "p_grid": "0.5, 1, 2",
            "p_fit": "0.25, 0.5",
            "p_rate": "0.5",
            "n_paths": "10000",
            "kappa": "0.2",
            "tail_N": "1e2, 3e2, 1e3, 3e3, 1e4",
            "tail_paths": "10000",
        },
        "kinetic": {"dt": "0.005", "method": "trapezoidal", "mc_paths": "10000"},
        "semigroup": {"a_values": "0.5, 1.0", "t_max": "1000", "dt": "0.1"},
        "lattice": {
            "L": "1024",
            "eps": "0.1",
            "eps_trend": "0.05",
            "M": "32",
            "h": "0.05",
            "times": "0.25, 0.5, 1.0",
            "steps": "10000",
            "h_max": "0.1",
        },
    },
    "paper": {
        "functionals": {
            "N_ladder": "1e3, 1e4, 1e5, 1e6",
            "oracle_N": "1e3, 1e4, 1e5, 1e6",
            "n_paths": "100000",
            "tail_paths": "100000",
        },
        "kinetic": {"mc_paths": "100000"},
        "lattice": {"L": "4096", "M": "200", "steps": "100000"},
    },
}

DEFAULT_SEED = 12345


def _parse(section: str, key: str, raw: str):
    spec = SCHEMA[section][key]
    name = f"{section}.{key}"
    kind = spec[0]
    try:
        if kind == "choice":
            v = raw.strip().lower()
            if v not in spec[1]:
                raise ConfigError(name, f"must be one of {spec[1]}, got {raw!r}")
            return v
        if kind == "str":
            return raw.strip()
        if kind == "int":
            v = int(float(raw))
        elif kind == "float":
            v = float(raw)
        else:
            v = [float(x) for x in raw.split(",") if x.strip()]
            if not v:
                raise ConfigError(name, "empty list")
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(name, f"cannot parse {raw!r}") from None
    lo, hi = spec[1], spec[2]
    for x in v if isinstance(v, list) else [v]:
        if not (lo <= x <= hi) or not math.isfinite(x):
            raise ConfigError(name, f"value {x} outside [{lo}, {hi}]")
    return v


@dataclass
class RunConfig:
    kind: str
    seed: int
    out: str = "runs"
    preset: str = "quick"
    params: dict = field(default_factory=dict)

    @classmethod
    def build(cls, kind: str, seed: int | None = None, preset: str = "quick", out: str = "runs", overrides=None, path=None):
        """Preset values, then the INI file at ``path``, then ``overrides``
        ({section: {key: value}})."""
        if preset not in PRESETS:
            raise ConfigError("run.preset", f"unknown preset {preset!r}")
        raw = {s: dict(v) for s, v in PRESETS["quick"].items()}
        for s, v in PRESETS[preset].items():
            raw[s].update(v)
        file_seed = None
        if path is not None:
            cp = configparser.ConfigParser()
            cp.optionxform = str
            if not cp.read(path):
                raise ConfigError("config", f"cannot read {path}")
            for s in cp.sections():
                if s == "run":
                    run = cp["run"]
                    kind = run.get("kind", kind)
                    file_seed = run.get("seed")
                    out = run.get("out", out)
                    continue
                if s not in SCHEMA:
                    raise ConfigError(s, "unknown section")
                for k, v in cp[s].items():
                    if k not in SCHEMA[s]:
                        raise ConfigError(f"{s}.{k}", "unknown key")
                    raw[s][k] = v
        for s, kv in (overrides or {}).items():
            for k, v in kv.items():
                if s not in SCHEMA or k not in SCHEMA[s]:
                    raise ConfigError(f"{s}.{k}", "unknown key")
                raw[s][k] = str(v)
        if seed is None:
            if file_seed is None:
                raise ConfigError("run.seed", "seed is mandatory")
            try:
                seed = int(file_seed)
            except ValueError:
                raise ConfigError("run.seed", f"cannot parse {file_seed!r}") from None
        cfg = cls(kind, int(seed), out, preset, {s: {k: _parse(s, k, v) for k, v in kv.items()} for s, kv in raw.items()})
        cfg.validate()
        return cfg

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError("run.kind", f"must be one of {KINDS}")
        if self.seed < 0:
            raise ConfigError("run.seed", "must be nonnegative")
        f = self.params["functionals"]
        if len(f["N_ladder"]) < 4 or np.any(np.diff(f["N_ladder"]) <= 0):
            raise ConfigError("functionals.N_ladder", "needs at least 4 strictly increasing values")
        L = self.params["lattice"]["L"]
        if L & (L - 1):
            raise ConfigError("lattice.L", "must be a power of 2")
        lp = self.params["lattice"]
        if lp["h"] > lp["h_max"]:
            raise ConfigError("lattice.h", f"exceeds h_max = {lp['h_max']}")
        m = self.params["model"]
        if m["family"] == "custom" and not m["custom_table"]:
            raise ConfigError("model.custom_table", "required for family = custom")
        if m["family"] == "pinned-nn" and m["pinning_mass"] <= 0:
            raise ConfigError("model.pinning_mass", "must be positive for pinned-nn")

    def section(self, name: str) -> dict:
        return self.params[name]

    def snapshot(self) -> dict:
        return {"kind": self.kind, "seed": self.seed, "preset": self.preset, "params": self.params}


# ---------------------------------------------------------------------------
# records


@dataclass
class Check:
    criterion: str
    theorem: str
    name: str
    status: str
    measured: object
    tolerance: str
    detail: str = ""

    def __post_init__(self):
        if self.status not in (PASS, FAIL, UNIDENTIFIABLE):
            raise ValueError(f"bad status {self.status!r}")
        if self.theorem not in THEOREM_KEYS:
            raise ValueError(f"unknown theorem key {self.theorem!r}")

    @property
    def passed(self) -> bool:
        return self.status == PASS

    def line(self) -> str:
        return f"[{self.status.upper():>14}] {self.criterion:<10} {self.name}: {_fmt(self.measured)} (tol {self.tolerance})"


@dataclass
class CriterionResult:
    checks: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)  # name -> (header, rows)
    arbitration: dict = field(default_factory=dict)
    seconds: float = 0.0

    def add(self, *args, **kw) -> Check:
        c = Check(*args, **kw)
        self.checks.append(c)
        return c

    def by_name(self, criterion: str) -> Check:
        for c in self.checks:
            if c.criterion == criterion:
                return c
        raise KeyError(criterion)


@dataclass
class RunRecord:
    config: dict
    version: str
    wall_time: float
    checks: list
    manifest: dict
    arbitration: dict

    def __post_init__(self):
        names = [c["criterion"] for c in self.checks]
        if not names:
            raise ValueError("a run record needs at least one check")
        if len(set(names)) != len(names):
            raise ValueError("every check must appear exactly once")

    @property
    def failed(self) -> bool:
        return any(c["status"] == FAIL for c in self.checks)


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.6g}"
    if isinstance(x, complex):
        return f"{x.real:.6g}{x.imag:+.6g}i"
    return str(x)


def _status(ok: bool) -> str:
    return PASS if ok else FAIL


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


# ---------------------------------------------------------------------------
# shared constants


@functools.lru_cache(maxsize=None)
def _stable_constants() -> dict:
    m = DispersionModel.unpinned()
    tail = limits.tail_constant(m)
    renewal = limits.stable_c_hat_pipeline(m, "renewal", tail)
    alpha = limits.stable_c_hat_pipeline(m, "alpha", tail)
    return {
        "tail": tail,
        "pipeline": renewal["c_hat"],
        "pipeline_alpha_power": alpha["c_hat"],
        "formula": limits.stable_c_hat_formula(m),
        "theta_bar": renewal["theta_bar"],
    }


@functools.lru_cache(maxsize=None)
def _gaussian_constants(pinning_mass: float) -> dict:
    return limits.gaussian_c_hats(DispersionModel.pinned(pinning_mass))


@functools.lru_cache(maxsize=None)
def _alpha2() -> float:
    return limits.theta_tail_index()


def _pinning(cfg: RunConfig) -> float:
    m = cfg.section("model")["pinning_mass"]
    return m if m > 0 else 1.0


# ---------------------------------------------------------------------------
# criteria


def criterion_1(cfg: RunConfig) -> CriterionResult:
    """Kernel identities."""
    res = CriterionResult()
    rng = stream(cfg.seed, 0, "crit1")
    g = torus_grid(64, 4)
    ks = rng.random(100)
    lhs = np.array([4 * g.integrate(R_kernel(k, g.nodes)) for k in ks])
    err = float(np.max(np.abs(lhs - beta_hat(ks))))
    res.add("1a", "r-beta", "4 int R(k, .) = beta_hat(k) at 100 k", _status(err < 1e-10), err, "1e-10")
    k, kp = rng.random(10_000), rng.random(10_000)
    fact = 0.75 * (e_minus(k) * e_plus(kp) + e_plus(k) * e_minus(kp))
    err = float(np.max(np.abs(R_kernel(k, kp) - fact)))
    res.add("1b", "r-beta", "rank-2 factorisation at 1e4 pairs", _status(err < 1e-12), err, "1e-12")
    err = max(abs(g.integrate(e_plus(g.nodes)) - 1), abs(g.integrate(e_minus(g.nodes)) - 1))
    res.add("1c", "r-beta", "int e_(+-1) = 1", _status(err < 1e-10), float(err), "1e-10")
    return res


def criterion_2(cfg: RunConfig, n_samples: int = 10**6) -> CriterionResult:
    """Chain correctness."""
    res = CriterionResult()
    rng = stream(cfg.seed, 0, "crit2")
    k, kp = rng.random(10_000), rng.random(10_000)
    err = float(np.max(np.abs(chain.transition_density_wrt_pi(k, kp) - chain.transition_density_wrt_pi(kp, k))))
    res.add("2a", "main-1", "transition density symmetric wrt pi", _status(err < 1e-12), err, "1e-12")

    x = chain.sample_stationary_many(stream(cfg.seed, 1, "crit2"), n_samples)
    edges = np.linspace(-0.5, 0.5, 101)
    counts, _ = np.histogram(x, edges)
    expected = np.diff(chain.stationary_cdf(edges)) * n_samples
    chi2 = stats.chisquare(counts, expected * counts.sum() / expected.sum())
    res.add("2b", "main-1", "stationary chi-squared, 100 bins, 1e6 samples", _status(chi2.pvalue >= 0.01), float(chi2.pvalue), "p >= 0.01")

    th = 1.0 / (2 * np.sin(np.pi * x) ** 2 * (3 - 2 * np.sin(np.pi * x) ** 2))
    mean, se = float(th.mean()), float(th.std(ddof=1) / math.sqrt(th.size))
    res.add("2c", "main-1", "E_pi[theta] = 2/3", _status(abs(mean - 2 / 3) <= 3 * se), mean, f"2/3 +- 3 stderr ({3 * se:.3g})",
            "theta has infinite variance under pi, so the stderr is itself noisy")

    a = chain.spectral_gap()
    oracle = chain.spectral_gap_dense(4096)
    res.add("2d", "main-1", "spectral gap a < 1 vs 4096-grid oracle", _status(a < 1 and abs(a - oracle) < 1e-4), a,
            f"|a - {oracle:.9f}| < 1e-4")
    return res


def _poisson_residual(sol, n: int = 4096) -> float:
    g = torus_grid(n // 4, 4)
    vals = sol(g.nodes)
    return float(np.max(np.abs(vals - limits.apply_P(vals, g.nodes, g.weights) - sol.psi(g.nodes))))


def criterion_3(cfg: RunConfig) -> CriterionResult:
    """Poisson equation and parity."""
    res = CriterionResult()
    m = DispersionModel.unpinned()
    psi = limits.ObservablePsi.for_model(m)
    g = torus_grid(1024, 4)
    vals = psi(g.nodes)
    sup = float(np.max(np.abs(limits.apply_P(vals, g.nodes, g.weights))))
    res.add("3a", "main-1", "sup |P psi| for the odd observable", _status(sup < 1e-12), sup, "1e-12")

    def odd(k):
        return np.sin(2 * np.pi * np.asarray(k))

    def even(k):
        return e_plus(k) - 25.0 / 18.0

    for tag, f in (("3b", odd), ("3c", even)):
        sol = limits.poisson_solve(f)
        r = _poisson_residual(sol)
        res.add(tag, "main-1", f"poisson residual, {'odd' if tag == '3b' else 'even'} observable", _status(r < 1e-10), r, "1e-10")
    return res


def criterion_4(cfg: RunConfig) -> CriterionResult:
    """Tail law and the stable constant."""
    res = CriterionResult()
    c = _stable_constants()
    tail = c["tail"]
    res.add("4a", "main-1", "lam^1.5 pi(psi > lam) spread over the ladder", _status(tail.relative_spread < 0.01),
            tail.relative_spread, "0.01")
    d = abs(tail.c_plus - tail.c_minus)
    res.add("4b", "main-1", "c*+ = c*-", _status(d < 1e-10), d, "1e-10")
    res.arbitration["stable_c_hat"] = {
        "pipeline (theta_bar^-1, default)": c["pipeline"],
        "pipeline (theta_bar^-alpha)": c["pipeline_alpha_power"],
        "closed formula": c["formula"],
        "pipeline vs formula relative difference": c["pipeline"] / c["formula"] - 1,
        "c_star": tail.c_plus,
        "c_star formula": tail.formula,
        "c_star leading order": tail.leading_order,
    }
    res.tables["constants"] = (
        ["name", "value"],
        [
            ["c_star_plus", tail.c_plus],
            ["c_star_minus", tail.c_minus],
            ["c_hat_pipeline", c["pipeline"]],
            ["c_hat_pipeline_alpha_power", c["pipeline_alpha_power"]],
            ["c_hat_formula", c["formula"]],
            ["theta_bar", c["theta_bar"]],
        ],
    )
    return res


def _oracle_charfn(p_grid, N_list, t, beta, model, start="stationary") -> np.ndarray:
    out = np.empty((len(N_list), len(p_grid)), complex)
    for i, N in enumerate(N_list):
        dt = max(0.01, N * t / 8000) if beta == 2.0 else None
        for j, p in enumerate(p_grid):
            out[i, j] = kinetic.charfn_from_kinetic(p, N, t, beta, start, model, dt=dt)
    return out


def _charfn_rows(N, t, est, target):
    rows = []
    for j, p in enumerate(est.p):
        tgt = complex(target[j])
        rows.append([N, t, p, est.mean[j].real, est.mean[j].imag, float(est.abs_stderr()[j]), tgt.real, tgt.imag])
    return rows


CHARFN_HEADER = ["N", "t", "p", "re_phi", "im_phi", "stderr", "target_re", "target_im"]


def criterion_5(cfg: RunConfig, samples: np.ndarray | None = None) -> CriterionResult:
    """Stable limit for the acoustic chain.

    Monte Carlo runs at the configured scale; the deterministic kinetic
    oracle gives the exact law of Y^(N) at the larger N of the criterion.
    """
    res = CriterionResult()
    fp = cfg.section("functionals")
    model = DispersionModel.unpinned()
    consts = _stable_constants()
    c_pipe = consts["pipeline"]
    t = fp["t"]
    ladder = np.asarray(fp["N_ladder"])
    if samples is None:
        samples = functionals.simulate_Y(model, ladder, t, fp["n_paths"], cfg.seed, 1.5, domain="crit5")
    y = samples[-1]
    N_top = float(ladder[-1])
    p_grid = fp["p_grid"]

    rep = functionals.stable_limit_test(model, N_top, t, p_grid, fp["n_paths"], cfg.seed, c_pipe, consts["formula"], samples=y)
    z = max(rep["imag_z"])
    res.add("5a", "main", f"phi real within 3 stderr, N={N_top:g}", _status(rep["real_within_3se"]), z, "max |Im|/stderr <= 3")
    target = np.exp(-c_pipe * np.abs(p_grid) ** 1.5 * t)
    res.tables["charfn_stable"] = (CHARFN_HEADER, _charfn_rows(N_top, t, rep["estimate"], target))

    if rep["identifiable"]:
        dev = float(np.max(np.abs(np.array(rep["per_p"]) / rep["c_hat"] - 1)))
        res.add("5b", "main", f"c_emp self-consistent over p={p_grid}", _status(dev <= 0.05), dev, "0.05")
    else:
        res.add("5b", "main", f"c_emp self-consistent over p={p_grid}", UNIDENTIFIABLE, rep["reason"], "0.05")

    sub = functionals.stable_limit_test(model, N_top, t, fp["p_fit"], fp["n_paths"], cfg.seed, c_pipe, consts["formula"], samples=y)
    if sub["identifiable"]:
        dev = float(np.max(np.abs(np.array(sub["per_p"]) / sub["c_hat"] - 1)))
        res.add("5b-fit", "main", f"c_emp self-consistent over identifiable p={fp['p_fit']}", _status(dev <= 0.05), dev, "0.05")
        rel = sub["c_hat"] / c_pipe - 1
        res.add("5c", "prop1", f"c_emp = {sub['c_hat']:.4f} +- {sub['c_hat_se']:.4f} vs pipeline {c_pipe:.4f}",
                _status(abs(rel) <= 0.10), rel, "0.10")
    else:
        res.add("5b-fit", "main", "c_emp on the fit grid", UNIDENTIFIABLE, sub["reason"], "0.05")
        res.add("5c", "prop1", "c_emp vs pipeline", UNIDENTIFIABLE, sub["reason"], "0.10")
    res.arbitration["stable_c_hat_mc"] = {
        "c_emp": sub.get("c_hat"),
        "c_emp_se": sub.get("c_hat_se"),
        "N": N_top,
        "candidates": {"pipeline": c_pipe, "pipeline_alpha_power": consts["pipeline_alpha_power"], "formula": consts["formula"]},
    }

    # exact law of Y^(N) from the kinetic equation
    oN = np.asarray(fp["oracle_N"])
    p_or = sorted(set([0.25] + list(p_grid)))
    phi = _oracle_charfn(p_or, oN, t, 1.5, model)
    mod = np.abs(phi[-1])
    per = -np.log(mod) / (t * np.power(p_or, 1.5))
    x = t * np.power(p_or, 1.5)
    c_or = float(np.dot(x, -np.log(mod)) / np.dot(x, x))
    sel = [p_or.index(p) for p in p_grid]
    dev = float(np.max(np.abs(per[sel] / c_or - 1)))
    res.add("5b-oracle", "main", f"kinetic oracle c self-consistent over p={p_grid}, N={oN[-1]:g}", _status(dev <= 0.05), dev, "0.05")
    rel = c_or / c_pipe - 1
    res.add("5c-oracle", "prop1", f"kinetic oracle c = {c_or:.4f} vs pipeline", _status(abs(rel) <= 0.10), rel, "0.10")
    tgt = np.exp(-c_pipe * np.power(p_or, 1.5) * t)
    err = np.max(np.abs(phi - tgt[None, :]), axis=1)
    res.tables["charfn_stable_oracle"] = (
        ["N", "t", "p", "re_phi", "im_phi", "target"],
        [[float(N), t, p, phi[i, j].real, phi[i, j].imag, tgt[j]] for i, N in enumerate(oN) for j, p in enumerate(p_or)],
    )
    tail3 = err[-3:]
    res.add("5d", "main", f"oracle error decreasing along N={list(oN[-3:])}", _status(bool(np.all(np.diff(tail3) < 0))),
            tail3.tolist(), "strictly decreasing")
    slope = float(np.polyfit(np.log(oN), np.log(err), 1)[0])
    bound = -functionals.delta_star("stable", 1.5) + 0.05
    res.add("5e", "main", "oracle rate slope (sup over p)", _status(slope <= bound), slope, f"<= {bound:.4f}")

    # Monte Carlo error trend and rate at the configured scale
    sweep = functionals.rate_sweep("stable", ladder, fp["p_rate"], t, fp["n_paths"], cfg.seed,
                                   math.exp(-c_pipe * fp["p_rate"] ** 1.5 * t), model, 1.5, samples=samples)
    res.tables["rates_stable_mc"] = (["N", "p", "error", "stderr"], [[n, fp["p_rate"], e, s] for n, e, s in zip(sweep.N, sweep.errors, sweep.stderr)])
    e, s = np.array(sweep.errors), np.array(sweep.stderr)
    ok = e > 3 * s
    if ok.sum() >= 2:
        e3, s3 = e[ok], s[ok]
        trend = bool(np.all(np.diff(e3) <= 2 * np.hypot(s3[1:], s3[:-1])))
        res.add("5d-mc", "main", "MC error nonincreasing along N (2 stderr slack)", _status(trend), e.tolist(), "2 stderr")
    else:
        res.add("5d-mc", "main", "MC error nonincreasing along N", UNIDENTIFIABLE, e.tolist(), "errors below 3 stderr")
    if sweep.identifiable:
        res.add("5e-mc", "main", "MC rate slope", _status(sweep.slope <= bound), sweep.slope, f"<= {bound:.4f}")
    else:
        res.add("5e-mc", "main", "MC rate slope", UNIDENTIFIABLE, sweep.note, f"<= {bound:.4f}")
    return res


def criterion_6(cfg: RunConfig, samples: np.ndarray | None = None) -> CriterionResult:
    """Gaussian limit for the pinned chain and arbitration of its variance."""
    res = CriterionResult()
    fp = cfg.section("functionals")
    pm = DispersionModel.pinned(_pinning(cfg))
    g = _gaussian_constants(_pinning(cfg))
    cands = g["variance"]
    literal = cands["two_theta_sq"]
    t = fp["t"]
    ladder = np.asarray(fp["N_ladder"])
    if samples is None:
        samples = functionals.simulate_Y(pm, ladder, t, fp["n_paths"], cfg.seed, 2.0, domain="crit6")
    y = samples[-1]
    N_top = float(ladder[-1])
    rep = functionals.gaussian_limit_test(pm, N_top, t, [0.1, 0.2, 0.4], fp["n_paths"], cfg.seed, cands, samples=y)
    z = abs(rep["mean"]) / rep["mean_se"]
    res.add("6a", "main-5", "sample mean 0", _status(z <= 3), z, "|mean|/stderr <= 3")

    # variance of the exact law at the oracle N
    oN = np.asarray(fp["oracle_N"])
    p0 = 0.05
    phi = _oracle_charfn([p0], oN, t, 2.0, pm)[:, 0]
    var_or = -2 * np.log(np.abs(phi)) / (p0**2 * t)
    rel = float(var_or[-1] / literal - 1)
    best = min(cands, key=lambda c: abs(var_or[-1] / cands[c] - 1))
    res.add("6b", "prop1a", f"Var(Y_1) at N={oN[-1]:g} = {var_or[-1]:.4f} vs 2 sigma^2/theta_bar^2 = {literal:.4f}",
            _status(abs(rel) <= 0.03), rel, "0.03", f"matching candidate: {best}")
    var_mc = rep["variance_per_t"]
    rel_mc = var_mc / literal - 1
    res.add("6b-mc", "prop1a", f"MC Var(Y_1) at N={N_top:g} = {var_mc:.4f} +- {rep['variance_se']:.4f} vs 2 sigma^2/theta_bar^2",
            _status(abs(rel_mc) <= 0.03), rel_mc, "0.03")
    i_top = int(np.argmin(np.abs(oN - N_top)))
    if oN[i_top] == N_top:
        zc = abs(var_mc - var_or[i_top]) / rep["variance_se"]
        res.add("6-cross", "main-5", f"MC variance vs kinetic oracle at N={N_top:g}", _status(zc <= 3), zc, "3 stderr")
    res.arbitration["gaussian_variance"] = {
        "oracle_variance": dict(zip([f"{n:g}" for n in oN], var_or.tolist())),
        "mc_variance": var_mc,
        "mc_variance_se": rep["variance_se"],
        "candidates": cands,
        "matching_candidate": best,
        "sigma_sq": g["sigma_sq"],
    }
    kz = abs(rep["excess_kurtosis"]) / rep["excess_kurtosis_se"]
    res.add("6c", "main-5", f"excess kurtosis at N={N_top:g} = {rep['excess_kurtosis']:.4f}", _status(kz <= 3), kz, "3 stderr")
    res.tables["charfn_gaussian"] = (
        CHARFN_HEADER,
        _charfn_rows(N_top, t, rep["estimate"], np.exp(-cands[best] * rep["estimate"].p ** 2 * t / 2)),
    )

    # rate towards the matching candidate, exact law
    p_r = 0.2
    phi_r = _oracle_charfn([p_r], oN, t, 2.0, pm)[:, 0]
    err = np.abs(phi_r - math.exp(-cands[best] * p_r**2 * t / 2))
    slope = float(np.polyfit(np.log(oN), np.log(err), 1)[0])
    res.add("6d", "main-5", f"oracle rate slope towards the {best} law", _status(slope <= -0.25), slope, "<= -1/4",
            f"guarantee with measured alpha2 = {_alpha2():.3f}: delta = {functionals.delta_star('gaussian', _alpha2()):.4f}")
    res.tables["rates_gaussian_oracle"] = (["N", "p", "error"], [[float(n), p_r, float(e)] for n, e in zip(oN, err)])
    sweep = functionals.rate_sweep("gaussian", ladder, p_r, t, fp["n_paths"], cfg.seed,
                                   math.exp(-cands[best] * p_r**2 * t / 2), pm, _alpha2(), samples=samples)
    if sweep.identifiable:
        res.add("6d-mc", "main-5", "MC rate slope", _status(sweep.slope <= -0.25), sweep.slope, "<= -1/4")
    else:
        res.add("6d-mc", "main-5", "MC rate slope", UNIDENTIFIABLE, sweep.note, "<= -1/4")
    return res


def _w0(k):
    k = np.asarray(k, dtype=float)
    return 1.0 + 0.5 * np.cos(2 * np.pi * k) + 0.3 * np.sin(2 * np.pi * k)


def criterion_7(cfg: RunConfig) -> CriterionResult:
    """Kinetic solver against the path representation."""
    res = CriterionResult()
    kp = cfg.section("kinetic")
    model = DispersionModel.unpinned()
    grid = kinetic.default_grid()
    idx = [int(np.argmin(np.abs(grid.nodes - k))) for k in (-0.4, -0.15, 0.05, 0.2, 0.35)]
    rows, worst = [], 0.0
    j = 0
    for p in (0.5, 2.0):
        fld = kinetic.KineticField.from_function(_w0, p, grid)
        snaps = kinetic.evolve_snapshots(fld, [0.5, 2.0], kp["dt"], model, kp["method"])
        for t, snap in zip((0.5, 2.0), snaps):
            for i in idx:
                k0 = float(grid.nodes[i])
                mc, se = kinetic.mc_solution(_w0, p, k0, t, kp["mc_paths"], cfg.seed, model, domain=f"crit7-{j}")
                det = complex(snap.values[i])
                zr = abs(det.real - mc.real) / se.real
                zi = abs(det.imag - mc.imag) / se.imag if se.imag > 0 else 0.0
                worst = max(worst, zr, zi)
                rows.append([p, t, k0, det.real, det.imag, mc.real, mc.imag, se.real, se.imag])
                j += 1
    res.tables["kinetic_vs_mc"] = (["p", "t", "k0", "det_re", "det_im", "mc_re", "mc_im", "se_re", "se_im"], rows)
    res.add("7a", "prop1", "deterministic vs path representation, 20 points", _status(worst <= 3), worst, "componentwise 3 stderr")

    fld = kinetic.KineticField.from_function(_w0, 0.0, grid)
    out = kinetic.evolve_kinetic(fld, 5.0, 0.05, model, "trapezoidal")
    drift = abs(out.integral() - fld.integral()) / fld.l1()
    res.add("7b", "prop1", "p = 0 mass conservation", _status(drift < 1e-10), float(drift), "1e-10")

    for method in ("trapezoidal", "exponential"):
        f2 = kinetic.KineticField.from_function(_w0, 2.0, grid)
        sols = [kinetic.evolve_kinetic(f2, 1.0, dt, model, method).values for dt in (0.04, 0.02, 0.01)]
        d1 = np.dot(grid.weights, np.abs(sols[0] - sols[1]))
        d2 = np.dot(grid.weights, np.abs(sols[1] - sols[2]))
        order = float(math.log2(d1 / d2))
        res.add(f"7c-{method[:4]}", "prop1", f"Richardson order, {method}", _status(abs(order - 2) <= 0.2), order, "2 +- 0.2")
    return res


def _f1(k):
    return e_plus(k) - e_minus(k)


def _f2(k):
    k = np.asarray(k, dtype=float)
    return np.sin(np.pi * k) ** 2 * np.cos(4 * np.pi * k)


def criterion_8(cfg: RunConfig) -> CriterionResult:
    """Semigroup decay and resolvent identities."""
    res = CriterionResult()
    sp = cfg.section("semigroup")
    rows = []
    for a in sp["a_values"]:
        for name, f in (("f1", _f1), ("f2", _f2)):
            d = kinetic.semigroup_decay(f, a, dt=sp["dt"], fit_range=(10.0, sp["t_max"]))
            res.add(f"8a-{name}-a{a:g}", "L1-bounds", f"L1 decay slope, {name}, a={a:g}", _status(d["slope"] <= -a + 0.1),
                    d["slope"], f"<= {-a + 0.1:.2f}")
            rows += [[a, name, t, l1] for t, l1 in zip(d["times"], d["l1"])]
    res.tables["semigroup"] = (["a", "f", "t", "l1"], rows)
    lams = [0.5, 1.0 + 1.0j, 3.0, -5.0, 0.2 - 2.0j]
    err = 0.0
    for lam in lams:
        r = kinetic.resolvent_system(lam)
        err = max(err, abs(r.delta - r.delta_factored()) / max(1.0, abs(r.delta)))
    res.add("8b", "L1-bounds", "Delta(lam) = lam D(lam)", _status(err < 1e-10), float(err), "1e-10")
    r0 = kinetic.resolvent_system(0.0)
    e0 = max(abs(r0.a + r0.a_minus), abs(r0.a + r0.a_plus))
    res.add("8c", "L1-bounds", "a(0) = -a_(+-1)(0)", _status(e0 < 1e-10), float(e0), "1e-10")
    return res


def criterion_9(cfg: RunConfig, L: int | None = None, steps: int | None = None) -> CriterionResult:
    """Microscopic conservation laws and the Ito drift."""
    res = CriterionResult()
    lp = cfg.section("lattice")
    L = L or lp["L"]
    steps = steps or lp["steps"]
    model = DispersionModel.unpinned()
    ens = lattice.init_ensemble(lattice.PacketSpec(), L, lp["eps"], 1, cfg.seed, model, domain="crit9")
    st = ens.state(0)
    E0, P0, l1 = st.energy(), st.total_momentum(), float(np.abs(st.p).sum())
    h = 0.01
    lattice.evolve(st, steps * h, h, stream(cfg.seed, 0, "crit9-noise"))
    dE = abs(st.energy() / E0 - 1)
    dP = abs(st.total_momentum() - P0) / l1
    res.add("9a", "conservation", f"energy drift over {steps} steps, L={L}", _status(dE < 1e-10), dE, "1e-10")
    res.add("9b", "conservation", f"momentum drift over {steps} steps (relative to l1 norm)", _status(dP < 1e-12), dP, "1e-12")

    p = stream(cfg.seed, 1, "crit9").standard_normal(16)
    hh, eps = 0.01, lp["eps"]
    mu, se = lattice.noise_drift_moment(p, eps, hh, 10**6, cfg.seed)
    target = lattice.ito_drift(p, eps)
    # O(h) bias bound: second-order terms of the rotation are eps h |p| sized
    tol = eps * hh * 10 * np.max(np.abs(p)) + 3 * se
    worst = float(np.max(np.abs(mu - target) - tol))
    res.add("9c", "conservation", "noise drift matches -(eps/2) beta * p", _status(worst <= 0), float(np.max(np.abs(mu - target))),
            "10 eps h max|p| + 3 stderr")
    return res


def _test_functions() -> list:
    g = lambda p: np.exp(-((np.asarray(p) / 0.5) ** 2))  # noqa: E731
    return [
        lattice.SeparableTest(g, lambda k: np.ones_like(np.asarray(k, float)), "one"),
        lattice.SeparableTest(g, lambda k: np.cos(2 * np.pi * (np.asarray(k) - 0.25)), "carrier"),
        lattice.SeparableTest(g, lambda k: np.sin(np.pi * np.asarray(k)) ** 2, "sin2"),
    ]


def criterion_10(cfg: RunConfig, scattering_scale: float = 2.0) -> CriterionResult:
    """Kinetic limit of the lattice Wigner transform."""
    res = CriterionResult()
    lp = cfg.section("lattice")
    model = DispersionModel.unpinned()
    spec = lattice.PacketSpec()
    Js = _test_functions()
    times = lp["times"]
    p_max = 2.5
    kin = lattice.kinetic_pairing(spec, Js, times, p_max, model, scattering_scale)
    kin1 = lattice.kinetic_pairing(spec, Js, times, p_max, model, 1.0)
    norms = [J.norm() for J in Js]
    rows, total = [], {}
    for eps in (lp["eps"], lp["eps_trend"]):
        ens = lattice.init_ensemble(spec, lp["L"], eps, lp["M"], cfg.seed, model, domain=f"crit10-{eps:g}")
        prev, disc, var = 0.0, 0.0, 0.0
        for i, t in enumerate(times):
            lattice.evolve(ens, (t - prev) / eps, lp["h"])
            prev = t
            for j, (J, (val, se)) in enumerate(zip(Js, lattice.pair_with_test_function(ens, Js, p_max))):
                d = abs(val.real - kin[j, i])
                disc += d
                var += se**2
                rows.append([eps, t, J.name, val.real, se, kin[j, i], kin1[j, i]])
                if eps == lp["eps"]:
                    ok = d <= 0.1 * norms[j] + 3 * se
                    res.add(f"10-t{t:g}-{J.name}", "thm-main1", f"|<W - U, J>| at eps={eps:g}, t={t:g}, J={J.name}",
                            _status(ok), d, f"0.1 |J| + 3 stderr = {0.1 * norms[j] + 3 * se:.4f}")
        total[eps] = (disc, var)
    (d0, v0), (d1, v1) = total[lp["eps"]], total[lp["eps_trend"]]
    # rows treated as independent, which overstates the noise slightly
    noise = math.sqrt(v0 + v1)
    desc = f"summed discrepancy eps={lp['eps']:g} -> {lp['eps_trend']:g}"
    if abs(d0 - d1) <= 2 * noise:
        res.add("10-trend", "thm-main1", desc, UNIDENTIFIABLE,
                f"[{d0:.4g}, {d1:.4g}] differ by less than 2 stderr ({2 * noise:.3g})", "decreasing")
    else:
        res.add("10-trend", "thm-main1", desc, _status(d1 < d0), [d0, d1], "decreasing")
    res.tables["lattice_pairings"] = (["eps", "t", "J", "lattice", "stderr", "kinetic", "kinetic_scale_1"], rows)
    res.arbitration["lattice_scattering_scale"] = {
        "used": scattering_scale,
        "summed |lattice - kinetic| at scale used": float(sum(abs(r[3] - r[5]) for r in rows)),
        "summed |lattice - kinetic| at scale 1": float(sum(abs(r[3] - r[6]) for r in rows)),
    }
    return res


def criterion_11(cfg: RunConfig) -> CriterionResult:
    """Tail probability of the scaled partial sums."""
    res = CriterionResult()
    fp = cfg.section("functionals")
    out = functionals.tail_probability_check(fp["tail_N"], fp["t"], fp["kappa"], fp["tail_paths"], cfg.seed)
    res.tables["tail_probability"] = (["N", "hits", "freq", "wilson_lo", "wilson_hi"],
                                      [[r["N"], r["hits"], r["freq"], r["lo"], r["hi"]] for r in out["rows"]])
    if not out["identifiable"]:
        res.add("11", "main-1", "tail probability exponent", UNIDENTIFIABLE, "too few nonzero frequencies", "delta > 0 at 95%")
    else:
        res.add("11", "main-1", f"fitted delta = {out['delta']:.4f} +- {out['delta_se']:.4f}", _status(out["delta_lo"] > 0),
                out["delta_lo"], "95% lower bound > 0")
    return res


CRITERIA = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5, 6: criterion_6,
    7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10, 11: criterion_11,
}

EXPERIMENTS = {
    "constants": (1, 2, 3, 4),
    "charfn": (5, 6),
    "rates": (5, 6, 11),
    "kinetic-solve": (7,),
    "semigroup": (8,),
    "lattice-sim": (9, 10),
    "verify-all": tuple(range(1, 12)),
}


# ---------------------------------------------------------------------------
# persistence


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_table(out: Path, name: str, header, rows, cfg: RunConfig) -> list[Path]:
    """CSV with a header row plus a JSON sidecar holding the full config."""
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{name}.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    side = out / f"{name}.json"
    side.write_text(json.dumps(_jsonable({"columns": header, "config": cfg.snapshot(), "version": __version__}), indent=2, sort_keys=True))
    return [path, side]


def run(cfg: RunConfig, criteria=None, log=print) -> RunRecord:
    """Run the experiment named by ``cfg.kind`` and persist its outputs."""
    start = time.perf_counter()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    ids = criteria or EXPERIMENTS[cfg.kind]
    checks, arbitration, files = [], {}, []
    for i in ids:
        t0 = time.perf_counter()
        r = CRITERIA[i](cfg)
        r.seconds = time.perf_counter() - t0
        for c in r.checks:
            log(c.line())
        checks += r.checks
        arbitration.update(r.arbitration)
        for name, (header, rows) in r.tables.items():
            files += write_table(out, name, header, rows, cfg)
    if cfg.kind == "constants":
        lc = limits.limit_constants(DispersionModel.unpinned(), DispersionModel.pinned(_pinning(cfg)))
        p = out / "limit_constants.json"
        p.write_text(json.dumps(_jsonable(asdict(lc)), indent=2, sort_keys=True))
        files.append(p)
    wall = time.perf_counter() - start
    if cfg.kind == "verify-all" and cfg.preset == "quick":
        arbitration["runtime_budget"] = {"seconds": wall, "budget": 600, "within": wall <= 600}
    manifest = {f.name: _sha256(f) for f in files}
    record = RunRecord(cfg.snapshot(), __version__, wall, [_jsonable(asdict(c)) for c in checks], manifest, _jsonable(arbitration))
    (out / "run_record.json").write_text(json.dumps(_jsonable(asdict(record)), indent=2, sort_keys=True))
    return record


def emit_report(records) -> str:
    """Plain-text summary keyed by theorem."""
    records = list(records)
    if not records:
        raise ValueError("need at least one record")
    lines = []
    for rec in records:
        lines.append(f"run kind={rec.config['kind']} seed={rec.config['seed']} preset={rec.config['preset']} "
                     f"version={rec.version} wall={rec.wall_time:.1f}s")
        for key in THEOREM_KEYS:
            cs = [c for c in rec.checks if c["theorem"] == key]
            if not cs:
                continue
            lines.append(f"  {key}")
            for c in cs:
                lines.append(f"    [{c['status'].upper():>14}] {c['criterion']:<14} {c['name']}  measured={_fmt(c['measured'])}  tol={c['tolerance']}")
        arb = rec.arbitration
        stable = arb.get("stable_c_hat") or {}
        if stable or "stable_c_hat_mc" in arb:
            lines.append("  stable c_hat candidates")
            cands = (arb.get("stable_c_hat_mc") or {}).get("candidates") or {
                "pipeline": stable.get("pipeline (theta_bar^-1, default)"),
                "pipeline_alpha_power": stable.get("pipeline (theta_bar^-alpha)"),
                "formula": stable.get("closed formula"),
            }
            for name, v in cands.items():
                lines.append(f"    {name:<22} {_fmt(v)}")
            if "stable_c_hat_mc" in arb and arb["stable_c_hat_mc"].get("c_emp") is not None:
                lines.append(f"    {'monte carlo':<22} {_fmt(arb['stable_c_hat_mc']['c_emp'])}")
        if "gaussian_variance" in arb:
            g = arb["gaussian_variance"]
            lines.append(f"  gaussian variance candidates (matching: {g['matching_candidate']})")
            for name, v in g["candidates"].items():
                lines.append(f"    {name:<22} {_fmt(v)}")
        if "lattice_scattering_scale" in arb:
            lines.append(f"  lattice scattering scale: {arb['lattice_scattering_scale']}")
        n_fail = sum(c["status"] == FAIL for c in rec.checks)
        n_un = sum(c["status"] == UNIDENTIFIABLE for c in rec.checks)
        lines.append(f"  {len(rec.checks)} checks, {n_fail} failed, {n_un} unidentifiable")
    return "\n".join(lines)
