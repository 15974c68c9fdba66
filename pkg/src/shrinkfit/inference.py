"""Posterior means, variances, and Normal-approximation intervals for the
random effects, given a fitted ShrinkagePosterior."""

from __future__ import annotations

import numpy as np

from .density import beta_hat_A, projection_diag
from .model import (
    RandomEffectPosterior,
    ShrinkagePosterior,
    TwoLevelData,
    level2_means,
)

DEFAULT_Z = 1.96  # nominal 95% two-sided


def random_effects(
    data: TwoLevelData,
    shr: ShrinkagePosterior,
    z_star: float = DEFAULT_Z,
    known_mu: np.ndarray | None = None,
) -> RandomEffectPosterior:
    """Random-effect moments from the fitted shrinkages.

    theta_hat_i = (1 - B_i) y_i + B_i * fitted mean, and

        s_i^2 = (1 - (1 - p_ii) B_i) V_i + v_i (y_i - yhat_i)^2   (r >= 1)
        s_i^2 = V_i (1 - B_i) + v_i (y_i - mu_i)^2                (r = 0)

    where p_ii is the projection diagonal at A_hat.  The second term carries
    the uncertainty in the shrinkage itself; plug-in fits (v = 0) omit it,
    which is what makes their intervals too short.  The regression weights
    (beta_hat and p_ii) are frozen at A_hat: exact for equal variances, where
    they do not depend on A, and a good approximation otherwise since their
    relative variation dies off like 1/k.  Intervals are the Normal
    approximation theta_hat +- z_star * s (no skew correction).
    """
    if z_star <= 0.0:
        raise ValueError("z_star must be positive")
    B = shr.B_hat
    if data.r >= 1:
        beta = beta_hat_A(shr.A_hat, data)
        y_fit = data.X @ beta
        p_diag = projection_diag(shr.A_hat, data)
        theta = (1.0 - B) * data.y + B * y_fit
        s2 = (1.0 - (1.0 - p_diag) * B) * data.V + shr.v * (data.y - y_fit) ** 2
    else:
        beta = np.empty(0)
        mu = level2_means(data, known_mu)
        theta = (1.0 - B) * data.y + B * mu
        s2 = data.V * (1.0 - B) + shr.v * (data.y - mu) ** 2
    s2 = np.maximum(s2, 0.0)
    half = z_star * np.sqrt(s2)
    return RandomEffectPosterior(
        theta_hat=theta,
        s2=s2,
        beta_hat=beta,
        lo=theta - half,
        hi=theta + half,
        z_star=z_star,
    )


def conditional_theta_moments(
    data: TwoLevelData,
    beta: np.ndarray | None,
    A: float,
    known_mu: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Vector of conditional means and variances of theta_i given (y, beta, A):
    mean (1 - B_i) y_i + B_i x_i'beta, variance V_i (1 - B_i)."""
    if A < 0.0:
        raise ValueError("A must be nonnegative")
    B = data.V / (data.V + A) if A > 0.0 else np.ones(data.k)
    if data.r >= 1:
        mu = data.X @ np.asarray(beta, dtype=float)
    else:
        mu = level2_means(data, known_mu)
    return (1.0 - B) * data.y + B * mu, data.V * (1.0 - B)


def conditional_theta_law(
    data: TwoLevelData,
    i: int,
    beta: np.ndarray | None,
    A: float,
    known_mu: np.ndarray | None = None,
) -> tuple[float, float]:
    """Conditional Normal law of a single theta_i given (y_i, beta, A)."""
    mean, var = conditional_theta_moments(data, beta, A, known_mu)
    return float(mean[i]), float(var[i])
