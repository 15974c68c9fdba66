"""The four estimation methods for the Level-2 variance and the shrinkage
factors: ADM (adjusted density maximization), MLE, REML, and exact Bayes.

All fitters are pure functions of (data, prior) and return a
ShrinkagePosterior; they can run concurrently on different datasets.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np
from scipy import integrate, optimize

from . import density, specfun
from .density import AdjustedLogDensity, NonconcaveAtMax, residual_ss
from .model import (
    FitMethod,
    PriorSpec,
    ShrinkagePosterior,
    TooFewUnits,
    TwoLevelData,
    validate,
)

__all__ = [
    "FitMethod",
    "OptimizerNoBracket",
    "NonintegrablePosterior",
    "fit",
    "fit_adm_equal",
    "fit_adm_general",
    "fit_mle",
    "fit_reml",
    "fit_exact_equal",
    "fit_exact_quadrature",
    "adm_beta_moments",
    "adm_moments_equal",
    "exact_moments_equal",
    "mle_shrinkage_equal",
]

_GROW = 1.7
_BRENT_XTOL = 1e-10
_BOUNDARY_REL = 1e-10
_FLOOR_REL = 1e-12
_T_LIMIT = 1e-8  # below this, use the T -> 0 limits of the exact moments


class OptimizerNoBracket(Exception):
    """No finite interior maximizer was bracketed; for the adjusted density
    this signals c too large relative to k - r."""


class NonintegrablePosterior(Exception):
    """The posterior of A is improper (k - r <= 2c), so its moments diverge."""


# ---------------------------------------------------------------------------
# 1-D maximization in alpha = log A


def _walk_bracket(f, x0: float, lo: float, hi: float, step: float = 1.0):
    """Expand from x0 until a triple a < b < c brackets a maximum of f.

    Returns the triple, or None when f keeps rising toward `lo` (the caller
    treats that as an A = 0 boundary).  Raises OptimizerNoBracket when f is
    still rising at `hi`.
    """
    x0 = min(max(x0, lo + step), hi - step)
    f0 = f(x0)
    fp = f(x0 + step)
    fm = f(x0 - step)
    if f0 >= fp and f0 >= fm:
        return (x0 - step, x0, x0 + step)
    if fp > f0:
        b, fb, d = x0 + step, fp, step
    else:
        b, fb, d = x0 - step, fm, -step
    a, fa = x0, f0
    while True:
        d *= _GROW
        c = min(max(b + d, lo), hi)
        fc = f(c)
        if fc <= fb:
            return (a, b, c) if a < c else (c, b, a)
        if c == lo:
            return None
        if c == hi:
            raise OptimizerNoBracket(
                "objective is still increasing at the top of the search range"
            )
        a, b, fa, fb = b, c, fb, fc


def _newton_polish(
    f,
    x: float,
    lo: float,
    hi: float,
    d1: Callable[[float], float] | None = None,
    iters: int = 6,
) -> float:
    """Sharpen a Brent maximizer with Newton steps on the first derivative.

    Derivative-free bracketing locates an argmax only to ~sqrt(eps); a few
    Newton steps on the (analytic or central-difference) gradient recover
    ~1e-10 accuracy in alpha.
    """
    for _ in range(iters):
        h = 1e-5 * max(1.0, abs(x))
        if d1 is not None:
            g = d1(x)
            curv = (d1(x + h) - d1(x - h)) / (2.0 * h)
        else:
            fp, fm, f0 = f(x + h), f(x - h), f(x)
            g = (fp - fm) / (2.0 * h)
            curv = (fp - 2.0 * f0 + fm) / (h * h)
        if not (curv < 0.0) or not math.isfinite(g):
            break
        step = max(-0.5, min(0.5, -g / curv))
        xn = min(max(x + step, lo), hi)
        if abs(xn - x) <= 1e-14 * max(1.0, abs(x)):
            return xn
        x = xn
    return x


def _maximize_alpha(f, x0: float, lo: float, hi: float, d1=None):
    """Bracket from x0, refine by Brent (parabolic/golden), then polish.

    Returns the maximizer, or None when the maximum sits at/below `lo`.
    """
    bracket = _walk_bracket(f, x0, lo, hi)
    if bracket is None:
        return None
    try:
        res = optimize.minimize_scalar(
            lambda a: -f(a),
            bracket=bracket,
            method="brent",
            options={"xtol": _BRENT_XTOL},
        )
        x = float(res.x)
    except ValueError:
        x = bracket[1]  # degenerate (flat) bracket; Newton below still applies
    x = min(max(x, lo), hi)
    return _newton_polish(f, x, lo, hi, d1=d1)


def _search_range(data: TwoLevelData, known_mu) -> tuple[float, float, float]:
    """Starting point and search bounds for alpha: expand from
    log(max(A_unb, Vbar/10)) with A_unb the moment estimate of A, and floor
    the search at Vbar * 1e-12."""
    v_bar = float(data.V.mean())
    dof = data.k - data.r if data.r >= 1 else data.k
    a_unb = residual_ss(data, known_mu) / dof - v_bar
    a0 = max(a_unb, v_bar / 10.0)
    alpha0 = math.log(a0)
    lo = math.log(v_bar * _FLOOR_REL)
    hi = math.log(max(a0, v_bar)) + 45.0
    return alpha0, lo, hi


# ---------------------------------------------------------------------------
# ADM engine


def adm_beta_moments(
    logdensity,
    alpha0: float = 0.0,
    *,
    V: float = 1.0,
    lo: float | None = None,
    hi: float | None = None,
    d1: Callable[[float], float] | None = None,
    d2: Callable[[float], float] | None = None,
) -> tuple[float, float, float, float]:
    """ADM Beta approximation for a shrinkage factor B = V / (V + exp(alpha))
    whose adjusted log-density in alpha is `logdensity`.

    Maximizes the density (Newton on `d1` when analytic derivatives are
    supplied, bracketing plus Brent otherwise), takes the invariant
    information -l''(alpha_hat) from `d2` or a central five-point stencil,
    and returns (B_hat, v, alpha_hat, inv_info).  With exact Beta input and
    analytic derivatives the recovered mean and variance are exact.
    """
    lo = alpha0 - 100.0 if lo is None else lo
    hi = alpha0 + 100.0 if hi is None else hi
    alpha_hat = _maximize_alpha(logdensity, alpha0, lo, hi, d1=d1)
    if alpha_hat is None:
        raise OptimizerNoBracket("no interior maximizer in the search range")
    if d2 is not None:
        inv_info = -d2(alpha_hat)
    else:
        h = 1e-3 * max(1.0, abs(alpha_hat))
        inv_info = -density._fd_second_derivative(logdensity, alpha_hat, h)
    if not inv_info > 0.0:
        raise NonconcaveAtMax(
            f"nonpositive curvature {inv_info} at alpha={alpha_hat}"
        )
    B = V / (V + math.exp(alpha_hat))
    w = B * (1.0 - B)
    v = w * w / (inv_info + w)
    return B, v, alpha_hat, inv_info


# ---------------------------------------------------------------------------
# Equal-variance closed forms (shared with the deterministic curve tables)


def adm_moments_equal(T: float, m: float, c: float = 1.0) -> tuple[float, float, float]:
    """Closed-form ADM posterior moments of B for equal variances.

    B_hat is the positive root of the stationarity quadratic of the adjusted
    density, written in its cancellation-free form; returns
    (B_hat, v, inv_info).  At T = 0 the shrinkage attains its maximum
    1 - c/(m+1).
    """
    if m + 1.0 <= c:
        raise TooFewUnits(f"need m + 1 > c, got m={m}, c={c}")
    B = 2.0 * (m - c + 1.0) / (T + m + 1.0 + math.sqrt((T - m - 1.0) ** 2 + 4.0 * c * T))
    inv_info = (m + 1.0) * (1.0 - B) ** 2 - c * (1.0 - 2.0 * B)
    w = B * (1.0 - B)
    v = w * w / (inv_info + w)
    return B, v, inv_info


def exact_moments_equal(T: float, m: float) -> tuple[float, float]:
    """Exact posterior mean and variance of B for equal variances under the
    flat prior on A (c = 1).

    B_hat is the James-Stein factor m/T times a ratio of chi-square CDFs,
    evaluated in log space so small T never underflows; v comes from the
    James-Stein identity with the T -> 0 limit m/((m+1)^2 (m+2)) spliced in
    below T = 1e-8.
    """
    if T < _T_LIMIT:
        return m / (m + 1.0), m / ((m + 1.0) ** 2 * (m + 2.0))
    log_ratio = specfun.log_lower_regularized_gamma(
        m + 1.0, T
    ) - specfun.log_lower_regularized_gamma(m, T)
    B = (m / T) * math.exp(log_ratio)
    b_js = m / T
    v = B * B / m - (b_js - B) * (1.0 - (m + 1.0) / m * B)
    return B, v


def mle_shrinkage_equal(T: float, m: float) -> float:
    """Equal-variance MLE shrinkage min(1, (m+1)/T)."""
    if T <= 0.0:
        return 1.0
    return min(1.0, (m + 1.0) / T)


# ---------------------------------------------------------------------------
# Fitters


def _require_equal_variances(data: TwoLevelData) -> float:
    if not data.equal_variances:
        raise ValueError("this fitter requires all V_i equal")
    return float(data.V[0])


def _equal_var_stats(data: TwoLevelData, known_mu) -> tuple[float, float, float]:
    V = _require_equal_variances(data)
    ss = residual_ss(data, known_mu)
    T = ss / (2.0 * V)
    m = 0.5 * (data.k - data.r - 2.0)
    return V, T, m


def fit_adm_equal(data: TwoLevelData, prior: PriorSpec) -> ShrinkagePosterior:
    """Equal-variance ADM fit by the closed-form quadratic root."""
    validate(data, prior, FitMethod.ADM)
    V, T, m = _equal_var_stats(data, prior.known_mu)
    B, v, inv_info = adm_moments_equal(T, m, prior.c)
    A_hat = V * (1.0 - B) / B
    k = data.k
    return ShrinkagePosterior(
        A_hat=A_hat,
        B_hat=np.full(k, B),
        v=np.full(k, v),
        inv_info=inv_info,
        a1=np.full(k, inv_info / (1.0 - B)),
        a0=np.full(k, inv_info / B),
        boundary=False,
        method=FitMethod.ADM,
    )


def fit_adm_general(data: TwoLevelData, prior: PriorSpec) -> ShrinkagePosterior:
    """ADM fit by numerical maximization of the adjusted log-density over
    alpha = log A; handles any r >= 0 and unequal variances."""
    validate(data, prior, FitMethod.ADM)
    ell = AdjustedLogDensity(data, prior)
    alpha0, lo, hi = _search_range(data, prior.known_mu)
    alpha_hat = _maximize_alpha(ell, alpha0, lo, hi)
    if alpha_hat is None:
        raise OptimizerNoBracket("adjusted density keeps rising toward A = 0")
    inv_info = density.adjusted_logdensity_d2(alpha_hat, data, prior)
    A_hat = math.exp(alpha_hat)
    B = data.V / (data.V + A_hat)
    w = B * (1.0 - B)
    v = w * w / (inv_info + w)
    return ShrinkagePosterior(
        A_hat=A_hat,
        B_hat=B,
        v=v,
        inv_info=inv_info,
        a1=inv_info / (1.0 - B),
        a0=inv_info / B,
        boundary=False,
        method=FitMethod.ADM,
    )


def _fit_plugin(data: TwoLevelData, objective, method: FitMethod, known_mu) -> ShrinkagePosterior:
    """Shared MLE/REML driver: maximize `objective` over alpha with A = 0
    boundary detection, then plug in (v = 0 convention)."""
    v_bar = float(data.V.mean())
    alpha0, lo, hi = _search_range(data, known_mu)
    alpha_hat = _maximize_alpha(objective, alpha0, lo, hi)
    boundary = alpha_hat is None or math.exp(alpha_hat) < v_bar * _BOUNDARY_REL
    A_hat = 0.0 if boundary else math.exp(alpha_hat)
    B = data.V / (data.V + A_hat) if A_hat > 0.0 else np.ones(data.k)
    return ShrinkagePosterior(
        A_hat=A_hat,
        B_hat=B,
        v=np.zeros(data.k),
        inv_info=None,
        boundary=boundary,
        method=method,
    )


def fit_mle(data: TwoLevelData, known_mu: np.ndarray | None = None) -> ShrinkagePosterior:
    """Maximum likelihood for A: the likelihood of the known-means model when
    r = 0, the profile likelihood (beta maximized out) when r >= 1.

    The boundary estimate A_hat = 0 is reported exactly, with B_hat = 1 and
    the plug-in convention v = 0.
    """
    prior = PriorSpec(1.0, known_mu) if data.r == 0 else PriorSpec(1.0)
    validate(data, prior, FitMethod.MLE)
    if data.r == 0:
        mu = known_mu

        def objective(alpha: float) -> float:
            return density.loglik_L0(math.exp(alpha), data, mu)

    else:

        def objective(alpha: float) -> float:
            return density.profile_loglik(math.exp(alpha), data)

    return _fit_plugin(data, objective, FitMethod.MLE, known_mu)


def fit_reml(data: TwoLevelData, known_mu: np.ndarray | None = None) -> ShrinkagePosterior:
    """REML: maximize the marginal density of A after integrating beta
    against a flat prior (no A-adjustment).  Coincides with fit_mle when
    r = 0."""
    prior = PriorSpec(1.0, known_mu) if data.r == 0 else PriorSpec(1.0)
    validate(data, prior, FitMethod.REML)

    def objective(alpha: float) -> float:
        return density.restricted_loglik(math.exp(alpha), data, known_mu)

    return _fit_plugin(data, objective, FitMethod.REML, known_mu)


def fit_exact_equal(data: TwoLevelData, prior: PriorSpec) -> ShrinkagePosterior:
    """Exact posterior moments of B for equal variances under the flat prior
    (c = 1), via the chi-square CDF ratio."""
    validate(data, prior, FitMethod.EXACT)
    if prior.c != 1.0:
        raise ValueError("closed-form exact moments exist only for c = 1")
    V, T, m = _equal_var_stats(data, prior.known_mu)
    B, v = exact_moments_equal(T, m)
    k = data.k
    return ShrinkagePosterior(
        A_hat=V * (1.0 - B) / B,
        B_hat=np.full(k, B),
        v=np.full(k, v),
        inv_info=None,
        boundary=False,
        method=FitMethod.EXACT,
    )


def fit_exact_quadrature(data: TwoLevelData, prior: PriorSpec) -> ShrinkagePosterior:
    """Exact posterior mean and variance of each B_i by adaptive quadrature
    of the posterior of alpha = log A (which, including the Jacobian, is the
    adjusted density).

    The exponent is shifted by its maximum before exponentiating and the
    integral taken over alpha_hat +- 40, a numerically safe normalization.
    """
    try:
        validate(data, prior, FitMethod.EXACT)
    except TooFewUnits as err:
        raise NonintegrablePosterior(
            f"posterior of A is improper: k - r <= 2c (k={data.k}, r={data.r}, c={prior.c})"
        ) from err
    ell = AdjustedLogDensity(data, prior)
    alpha0, lo, hi = _search_range(data, prior.known_mu)
    alpha_hat = _maximize_alpha(ell, alpha0, lo, hi)
    if alpha_hat is None:
        raise OptimizerNoBracket("posterior density keeps rising toward A = 0")
    l_max = ell(alpha_hat)
    V = data.V
    k = data.k

    def integrand(alpha: float) -> np.ndarray:
        w = math.exp(ell(alpha) - l_max)
        B = V / (V + math.exp(alpha))
        return np.concatenate(([w], w * B, w * B * B))

    res, _ = integrate.quad_vec(
        integrand, alpha_hat - 40.0, alpha_hat + 40.0, epsrel=1e-10, epsabs=0.0
    )
    Z = res[0]
    EB = res[1 : k + 1] / Z
    v = np.maximum(res[k + 1 :] / Z - EB * EB, 0.0)
    if data.equal_variances:
        # single shrinkage factor: report the A consistent with it
        A_hat = float(V[0]) * (1.0 - EB[0]) / EB[0]
    else:
        A_hat = math.exp(alpha_hat)
    return ShrinkagePosterior(
        A_hat=A_hat,
        B_hat=EB,
        v=v,
        inv_info=None,
        boundary=False,
        method=FitMethod.EXACT,
    )


def fit(data: TwoLevelData, prior: PriorSpec, method: FitMethod) -> ShrinkagePosterior:
    """Dispatch to the appropriate fitter, preferring closed forms where they
    exist (equal variances; c = 1 for the exact method)."""
    if method is FitMethod.ADM:
        if data.equal_variances:
            return fit_adm_equal(data, prior)
        return fit_adm_general(data, prior)
    if method is FitMethod.MLE:
        return fit_mle(data, known_mu=prior.known_mu)
    if method is FitMethod.REML:
        return fit_reml(data, known_mu=prior.known_mu)
    if method is FitMethod.EXACT:
        if data.equal_variances and prior.c == 1.0:
            return fit_exact_equal(data, prior)
        return fit_exact_quadrature(data, prior)
    raise TypeError(f"unknown method {method!r}")
