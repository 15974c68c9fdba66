"""Seeded Monte-Carlo harness for interval coverage, calibrated risk, and
ADM-vs-exact approximation accuracy, plus the deterministic shrinkage and
variance curve tables.

Reproducibility contract: each (gridpoint, replication) pair gets its own
counter-based Philox stream keyed by (seed, gridpoint, rep), and all
reductions run in a fixed order, so identical configurations produce
bit-identical results for any number of worker processes.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from functools import partial
from itertools import chain

import numpy as np
from scipy import integrate, optimize

from . import specfun
from .fitters import (
    FitMethod,
    adm_moments_equal,
    exact_moments_equal,
    fit,
    mle_shrinkage_equal,
)
from .inference import random_effects
from .model import PriorSpec, TwoLevelData

_phi = np.frompyfunc(specfun.normal_cdf, 1, 1)

TWO_GROUP_V = (0.55,) * 5 + (5.5,) * 5  # harmonic mean 1.0, 10x spread


# ---------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class SimConfig:
    """One coverage experiment: a grid of true shrinkage levels B0 (relative
    to the reference variance V0, so A = V0 (1 - B0)/B0), `reps` replications
    per gridpoint, and the methods to score."""

    k: int
    r: int
    V: tuple[float, ...]
    X: object  # "none", "intercept", or a k-by-r nested tuple
    beta_true: tuple[float, ...]
    grid: tuple[float, ...]
    V0: float
    reps: int
    seed: int
    methods: tuple[FitMethod, ...]
    z_star: float = 1.96
    c: float = 1.0


def equal_variance_grid(n: int = 100) -> tuple[float, ...]:
    """True-shrinkage grid 0.005 ... 0.995 (the full 100-point version steps
    by 0.01); smaller n keeps the endpoints."""
    return tuple(float(b) for b in np.linspace(0.005, 0.995, n))


def two_group_grid(n: int = 50) -> tuple[float, ...]:
    """True-shrinkage grid 0.01, 0.03, ..., 0.99 at n = 50."""
    return tuple(float(b) for b in np.linspace(0.01, 0.99, n))


def equal_variance_config(
    k: int,
    *,
    seed: int,
    reps: int = 1000,
    grid: tuple[float, ...] | None = None,
    methods: tuple[FitMethod, ...] = (FitMethod.EXACT, FitMethod.ADM, FitMethod.MLE),
    V: float = 1.0,
    z_star: float = 1.96,
    c: float = 1.0,
) -> SimConfig:
    """Equal variances, known means (r = 0), shrinking toward zero."""
    return SimConfig(
        k=k,
        r=0,
        V=(float(V),) * k,
        X="none",
        beta_true=(),
        grid=equal_variance_grid() if grid is None else tuple(grid),
        V0=float(V),
        reps=reps,
        seed=seed,
        methods=tuple(methods),
        z_star=z_star,
        c=c,
    )


def two_group_config(
    *,
    seed: int,
    reps: int = 100,
    grid: tuple[float, ...] | None = None,
    methods: tuple[FitMethod, ...] = (FitMethod.ADM,),
    beta_true: tuple[float, ...] = (0.0,),
    z_star: float = 1.96,
    c: float = 1.0,
) -> SimConfig:
    """The two-group design: k = 10, five variances at 0.55 and five at 5.5,
    shrinking toward an estimated common mean (intercept-only regression)."""
    return SimConfig(
        k=10,
        r=1,
        V=TWO_GROUP_V,
        X="intercept",
        beta_true=tuple(beta_true),
        grid=two_group_grid() if grid is None else tuple(grid),
        V0=1.0,
        reps=reps,
        seed=seed,
        methods=tuple(methods),
        z_star=z_star,
        c=c,
    )


def _design_matrix(cfg: SimConfig) -> np.ndarray | None:
    if isinstance(cfg.X, str):
        if cfg.X == "none":
            return None
        if cfg.X == "intercept":
            return np.ones((cfg.k, 1))
        raise ValueError(f"unknown design {cfg.X!r}")
    X = np.asarray(cfg.X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return X


def _check_config(cfg: SimConfig) -> None:
    if cfg.k < 1 or len(cfg.V) != cfg.k:
        raise ValueError("V must list one variance per unit")
    if any(v <= 0.0 for v in cfg.V):
        raise ValueError("all variances must be positive")
    if cfg.V0 <= 0.0:
        raise ValueError("V0 must be positive")
    if cfg.reps < 1:
        raise ValueError("reps must be at least 1")
    if not cfg.grid or any(not (0.0 < b < 1.0) for b in cfg.grid):
        raise ValueError("grid values must lie strictly inside (0, 1)")
    if not cfg.methods:
        raise ValueError("at least one method is required")
    if cfg.z_star <= 0.0:
        raise ValueError("z_star must be positive")
    X = _design_matrix(cfg)
    r = 0 if X is None else X.shape[1]
    if r != cfg.r:
        raise ValueError(f"design implies r={r} but config says r={cfg.r}")
    if len(cfg.beta_true) != cfg.r:
        raise ValueError("beta_true must have one entry per covariate")


# ---------------------------------------------------------------------------
# Results


_CSV_COLUMNS = [
    "k",
    "r",
    "b0",
    "A",
    "method",
    "group",
    "n_units",
    "reps",
    "coverage",
    "coverage_se",
    "coverage_raw",
    "coverage_raw_se",
    "risk",
    "boundary_rate",
    "mean_B_hat",
    "mean_v",
    "rmse",
    "mean_halfwidth",
]


@dataclass(frozen=True)
class SimRow:
    """Aggregates for one (gridpoint, method, unit-group) cell."""

    k: int
    r: int
    b0: float
    A: float
    method: str
    group: str
    n_units: int
    reps: int
    coverage: float
    coverage_se: float
    coverage_raw: float
    coverage_raw_se: float
    risk: float
    boundary_rate: float
    mean_B_hat: float
    mean_v: float
    rmse: float
    mean_halfwidth: float


@dataclass(frozen=True)
class SimResult:
    config: SimConfig
    rows: tuple[SimRow, ...]

    def to_csv_bytes(self) -> bytes:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(_CSV_COLUMNS)
        for row in self.rows:
            d = asdict(row)
            writer.writerow([_fmt(d[c]) for c in _CSV_COLUMNS])
        return buf.getvalue().encode()

    def to_csv(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_csv_bytes())

    def to_json_bytes(self) -> bytes:
        cfg = asdict(self.config)
        cfg["methods"] = [m.value for m in self.config.methods]
        payload = {
            "schema": 1,
            "config": cfg,
            "rows": [asdict(row) for row in self.rows],
        }
        return (json.dumps(payload, indent=1, sort_keys=True) + "\n").encode()

    def to_json(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_json_bytes())


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


# ---------------------------------------------------------------------------
# Coverage simulation


def _rep_rng(seed: int, gridpoint: int, rep: int) -> np.random.Generator:
    """Counter-based stream for one replication: the key carries the user
    seed, the high counter words carry (gridpoint, rep), so the stream is
    independent of any execution schedule."""
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, 0x9E3779B97F4A7C15], dtype=np.uint64)
    counter = np.array([0, 0, gridpoint, rep], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=counter, key=key))


def _group_slices(V: np.ndarray) -> list[tuple[str, np.ndarray]]:
    """Units grouped by distinct variance, in order of first appearance."""
    seen: dict[float, None] = {}
    for v in V:
        seen.setdefault(float(v), None)
    values = list(seen)
    if len(values) == 1:
        return [("all", np.arange(V.size))]
    return [(f"V={v:g}", np.flatnonzero(V == v)) for v in values]


def _simulate_gridpoint(cfg: SimConfig, g: int) -> list[SimRow]:
    b0 = cfg.grid[g]
    A = cfg.V0 * (1.0 - b0) / b0
    V = np.asarray(cfg.V, dtype=float)
    X = _design_matrix(cfg)
    beta_true = np.asarray(cfg.beta_true, dtype=float)
    mu_true = X @ beta_true if X is not None else np.zeros(cfg.k)
    B_true = V / (V + A)
    sigma_cond = np.sqrt(V * (1.0 - B_true))
    prior = PriorSpec(c=cfg.c)
    z = cfg.z_star
    k, reps = cfg.k, cfg.reps
    sqrt_A = math.sqrt(A)
    sqrt_V = np.sqrt(V)

    stats = {
        m: {name: np.empty((reps, k)) for name in
            ("cov_rb", "risk", "ok", "raw", "sqerr", "half", "B", "v")}
        for m in cfg.methods
    }
    for rep in range(reps):
        rng = _rep_rng(cfg.seed, g, rep)
        theta = mu_true + sqrt_A * rng.standard_normal(k)
        y = theta + sqrt_V * rng.standard_normal(k)
        data = TwoLevelData(y, V, X)
        cond_mean = (1.0 - B_true) * y + B_true * mu_true
        for method in cfg.methods:
            shr = fit(data, prior, method)
            post = random_effects(data, shr, z_star=z)
            th, s2 = post.theta_hat, post.s2
            s = np.sqrt(s2)
            centered = th - cond_mean
            cov = _phi((centered + z * s) / sigma_cond) - _phi(
                (centered - z * s) / sigma_cond
            )
            ok = s2 > 0.0
            risk = np.where(
                ok,
                (V * (1.0 - B_true) + centered * centered) / np.where(ok, s2, 1.0),
                np.nan,
            )
            rec = stats[method]
            rec["cov_rb"][rep] = cov.astype(float)
            rec["risk"][rep] = risk
            rec["ok"][rep] = ok
            rec["raw"][rep] = np.abs(theta - th) <= z * s
            rec["sqerr"][rep] = (th - theta) ** 2
            rec["half"][rep] = z * s
            rec["B"][rep] = shr.B_hat
            rec["v"][rep] = shr.v

    rows: list[SimRow] = []
    groups = _group_slices(V)
    for method in cfg.methods:
        rec = stats[method]
        for label, idx in groups:
            per_rep_cov = rec["cov_rb"][:, idx].mean(axis=1)
            per_rep_raw = rec["raw"][:, idx].mean(axis=1)
            ok = rec["ok"][:, idx].astype(bool)
            risk_vals = rec["risk"][:, idx][ok]
            rows.append(
                SimRow(
                    k=cfg.k,
                    r=cfg.r,
                    b0=float(b0),
                    A=float(A),
                    method=method.value,
                    group=label,
                    n_units=int(idx.size),
                    reps=reps,
                    coverage=float(per_rep_cov.mean()),
                    coverage_se=float(
                        per_rep_cov.std(ddof=1) / math.sqrt(reps) if reps > 1 else 0.0
                    ),
                    coverage_raw=float(per_rep_raw.mean()),
                    coverage_raw_se=float(
                        per_rep_raw.std(ddof=1) / math.sqrt(reps) if reps > 1 else 0.0
                    ),
                    risk=float(risk_vals.mean()) if risk_vals.size else float("nan"),
                    boundary_rate=float(1.0 - ok.mean()),
                    mean_B_hat=float(rec["B"][:, idx].mean()),
                    mean_v=float(rec["v"][:, idx].mean()),
                    rmse=float(math.sqrt(rec["sqerr"][:, idx].mean())),
                    mean_halfwidth=float(rec["half"][:, idx].mean()),
                )
            )
    return rows


def run_coverage(cfg: SimConfig, threads: int | None = None) -> SimResult:
    """Run the coverage/risk experiment over the whole grid.

    Gridpoints are independent and may run in worker processes (`threads`);
    results are assembled in grid order, so the output is identical for any
    thread count.
    """
    _check_config(cfg)
    indices = range(len(cfg.grid))
    workers = 1 if threads is None else max(1, min(int(threads), len(cfg.grid)))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(partial(_simulate_gridpoint, cfg), indices))
    else:
        parts = [_simulate_gridpoint(cfg, g) for g in indices]
    return SimResult(config=cfg, rows=tuple(chain.from_iterable(parts)))


def run_two_group(cfg: SimConfig | None = None, *, threads: int | None = None, **kwargs) -> SimResult:
    """Coverage and calibrated risk for the two-group design; `kwargs` are
    forwarded to two_group_config when no explicit config is given."""
    if cfg is None:
        cfg = two_group_config(**kwargs)
    if cfg.r != 1 or len(set(cfg.V)) != 2:
        raise ValueError("run_two_group expects the two-variance-group design")
    return run_coverage(cfg, threads=threads)


# ---------------------------------------------------------------------------
# Approximation accuracy (ADM vs exact random-effect estimates)


@dataclass(frozen=True)
class AccuracyRow:
    k: int
    exact_shrinkage: float
    T: float
    ratio: float


@dataclass(frozen=True)
class AccuracyResult:
    max_ratio: float
    k_at_max: int
    shrinkage_at_max: float
    rows: tuple[AccuracyRow, ...]


def _solve_T_for_exact_shrinkage(b: float, m: float) -> float:
    """Invert the (monotone decreasing) exact shrinkage curve B(T) = b."""
    f = lambda log_t: exact_moments_equal(math.exp(log_t), m)[0] - b
    return math.exp(optimize.brentq(f, -25.0, 25.0, xtol=1e-13))


def run_accuracy(
    k_values=range(3, 61),
    shrinkage_grid=None,
    V: float = 1.0,
) -> AccuracyResult:
    """Worst-case relative loss of the ADM random-effect estimates against
    the exact ones (equal variances, r = 0, c = 1):

        sum_i (theta_adm_i - theta_exact_i)^2 / sum_i s_exact_i^2
        = (B_adm - B_exact)^2 S+ / (k V (1 - B_exact) + v_exact S+),

    swept over k and a grid of exact-shrinkage levels (each level is realized
    by solving for the S+ that produces it)."""
    if shrinkage_grid is None:
        shrinkage_grid = [round(0.05 + 0.01 * j, 10) for j in range(91)]
    rows = []
    best = None
    for k in k_values:
        m = 0.5 * (k - 2.0)
        b_max = m / (m + 1.0)
        for b in shrinkage_grid:
            if b >= b_max - 1e-9:
                continue
            T = _solve_T_for_exact_shrinkage(float(b), m)
            s_plus = 2.0 * T * V
            B_e, v_e = exact_moments_equal(T, m)
            B_a, _, _ = adm_moments_equal(T, m, 1.0)
            ratio = (B_a - B_e) ** 2 * s_plus / (k * V * (1.0 - B_e) + v_e * s_plus)
            row = AccuracyRow(k=int(k), exact_shrinkage=float(b), T=T, ratio=ratio)
            rows.append(row)
            if best is None or ratio > best.ratio:
                best = row
    return AccuracyResult(
        max_ratio=best.ratio,
        k_at_max=best.k,
        shrinkage_at_max=best.exact_shrinkage,
        rows=tuple(rows),
    )


# ---------------------------------------------------------------------------
# Deterministic shrinkage/variance curves (no simulation)


@dataclass(frozen=True)
class CurveRow:
    k: int
    r: int
    c: float
    m: float
    T: float
    method: str
    B_hat: float
    v: float


def exact_moments_equal_anyc(T: float, m: float, c: float) -> tuple[float, float]:
    """Posterior mean and variance of B for equal variances and general c,
    by quadrature of the alpha-posterior (closed form exists only at c = 1)."""
    if m + 1.0 <= c:
        raise ValueError("posterior is improper: need m + 1 > c")
    if c == 1.0:
        return exact_moments_equal(T, m)
    B_center, _, _ = adm_moments_equal(T, m, c)
    a_center = math.log((1.0 - B_center) / B_center)

    def log_post(alpha: float) -> float:
        A = math.exp(alpha)
        return c * alpha - (m + 1.0) * math.log1p(A) - T / (1.0 + A)

    shift = log_post(a_center)

    def integrand(alpha: float) -> np.ndarray:
        w = math.exp(log_post(alpha) - shift)
        B = 1.0 / (1.0 + math.exp(alpha))
        return np.array([w, w * B, w * B * B])

    res, _ = integrate.quad_vec(
        integrand, a_center - 40.0, a_center + 40.0, epsrel=1e-10, epsabs=0.0
    )
    EB = res[1] / res[0]
    return EB, max(res[2] / res[0] - EB * EB, 0.0)


def curve_rows(k_values, t_grid, r: int = 0, c: float = 1.0) -> tuple[CurveRow, ...]:
    """Shrinkage B(T) and variance v tables for the exact, ADM, and MLE rules
    (equal variances); these reproduce the deterministic comparison figures."""
    rows = []
    for k in k_values:
        m = 0.5 * (k - r - 2.0)
        if m + 1.0 <= c:
            raise ValueError(f"k={k}, r={r} too small for c={c}")
        for T in t_grid:
            T = float(T)
            if T < 0.0:
                raise ValueError("T must be nonnegative")
            B_e, v_e = exact_moments_equal_anyc(T, m, c)
            B_a, v_a, _ = adm_moments_equal(T, m, c)
            B_m = mle_shrinkage_equal(T, m)
            rows.append(CurveRow(k, r, c, m, T, "exact", B_e, v_e))
            rows.append(CurveRow(k, r, c, m, T, "adm", B_a, v_a))
            rows.append(CurveRow(k, r, c, m, T, "mle", B_m, 0.0))
    return tuple(rows)
