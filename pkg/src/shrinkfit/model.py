"""Domain types shared by all fitters, and input validation.

The value types are frozen dataclasses wrapping read-only numpy arrays, so
instances can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import linalg as sla


class ModelError(Exception):
    """Base class for input-validation failures."""


class RankDeficientX(ModelError):
    pass


class TooFewUnits(ModelError):
    pass


class NonpositiveVariance(ModelError):
    pass


class NonpositiveC(ModelError):
    pass


class FitMethod(Enum):
    ADM = "adm"
    MLE = "mle"
    REML = "reml"
    EXACT = "exact"


_RANK_TOL = 1e-10


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TwoLevelData:
    """Unit-level estimates y with known sampling variances V and optional
    Level-2 covariates X (a k-by-r matrix; r = 0 means the Level-2 means are
    known, conventionally zero unless a `known_mu` is supplied at fit time).
    """

    y: np.ndarray
    V: np.ndarray
    X: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        y = _readonly(np.atleast_1d(self.y))
        V = _readonly(np.atleast_1d(self.V))
        if y.ndim != 1 or V.ndim != 1:
            raise ValueError("y and V must be one-dimensional")
        if y.shape != V.shape:
            raise ValueError(f"y has length {y.size} but V has length {V.size}")
        if self.X is None:
            X = np.empty((y.size, 0))
        else:
            X = np.array(self.X, dtype=float)
            if X.ndim == 1:
                X = X[:, None]
            if X.shape[0] != y.size:
                raise ValueError(f"X has {X.shape[0]} rows for {y.size} units")
        X = _readonly(X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "X", X)

    @property
    def k(self) -> int:
        return self.y.size

    @property
    def r(self) -> int:
        return self.X.shape[1]

    @property
    def equal_variances(self) -> bool:
        return bool(self.V.max() == self.V.min())


@dataclass(frozen=True)
class PriorSpec:
    """Scale-invariant prior on the Level-2 variance, density ~ A^(c-1).

    c = 1 is the flat prior on A (the harmonic prior on the random effects).
    `known_mu` supplies nonzero known Level-2 means for r = 0.  The
    density-adjustment machinery itself works for any smooth prior on the
    variance, but only this power family is exposed here; generalizing means
    swapping the c*log(A) term of the adjusted log-density for
    log(A * pi(A)).
    """

    c: float = 1.0
    known_mu: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.known_mu is not None:
            object.__setattr__(self, "known_mu", _readonly(np.atleast_1d(self.known_mu)))


@dataclass(frozen=True)
class ShrinkagePosterior:
    """Fitted Level-2 variance with per-unit shrinkage moments.

    B_hat and v approximate (or, for the exact methods, equal) the posterior
    mean and variance of each shrinkage factor.  inv_info and the per-unit
    Beta parameters (a1, a0) are populated by the ADM fitters only; the
    plug-in methods (MLE, REML) report v = 0 and may sit on the A = 0
    boundary.
    """

    A_hat: float
    B_hat: np.ndarray
    v: np.ndarray
    inv_info: float | None = None
    a1: np.ndarray | None = None
    a0: np.ndarray | None = None
    boundary: bool = False
    method: FitMethod | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "B_hat", _readonly(self.B_hat))
        object.__setattr__(self, "v", _readonly(self.v))
        if self.a1 is not None:
            object.__setattr__(self, "a1", _readonly(self.a1))
        if self.a0 is not None:
            object.__setattr__(self, "a0", _readonly(self.a0))


@dataclass(frozen=True)
class RandomEffectPosterior:
    """Posterior means and variances of the random effects with Normal
    interval endpoints theta_hat +- z_star * sqrt(s2)."""

    theta_hat: np.ndarray
    s2: np.ndarray
    beta_hat: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    z_star: float

    def __post_init__(self) -> None:
        for name in ("theta_hat", "s2", "beta_hat", "lo", "hi"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))


def matrix_rank_pivoted(X: np.ndarray) -> int:
    """Numerical column rank via column-pivoted QR.

    A pivot is counted when |R_jj| exceeds 1e-10 times the largest column
    norm, a scale-aware full-rank test.
    """
    if X.shape[1] == 0:
        return 0
    col_norms = np.sqrt((X * X).sum(axis=0))
    tol = _RANK_TOL * float(col_norms.max())
    _, R, _ = sla.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    return int((diag > tol).sum())


def validate(data: TwoLevelData, prior: PriorSpec, method: FitMethod) -> None:
    """Check that (data, prior) admit the requested fit; raise otherwise.

    The improper prior A^(c-1) yields a proper posterior only when
    k - r > 2c (for c = 1 this is the usual k >= r + 3), so the ADM and
    exact fitters require it.  MLE/REML only need a positive residual
    dimension, k >= r + 1.
    """
    if not isinstance(method, FitMethod):
        raise TypeError(f"method must be a FitMethod, got {method!r}")
    if data.k < 1:
        raise TooFewUnits("at least one unit is required")
    if not np.all(np.isfinite(data.y)):
        raise ValueError("y contains non-finite values")
    if not np.all(np.isfinite(data.V)):
        raise NonpositiveVariance("V contains non-finite values")
    if np.any(data.V <= 0.0):
        raise NonpositiveVariance("all Level-1 variances must be positive")
    if not np.isfinite(prior.c) or prior.c <= 0.0:
        raise NonpositiveC(
            f"prior exponent c must be positive, got {prior.c} "
            "(c = 0 forces 100% shrinkage regardless of the data)"
        )
    if prior.known_mu is not None:
        if data.r != 0:
            raise ValueError("known_mu is only meaningful when r = 0")
        if prior.known_mu.size != data.k:
            raise ValueError("known_mu must have one entry per unit")
    if data.r >= 1:
        if not np.all(np.isfinite(data.X)):
            raise ValueError("X contains non-finite values")
        if matrix_rank_pivoted(data.X) < data.r:
            raise RankDeficientX(f"X must have full column rank {data.r}")
    if method in (FitMethod.ADM, FitMethod.EXACT):
        if data.k - data.r <= 2.0 * prior.c:
            raise TooFewUnits(
                f"k - r must exceed 2c for a proper posterior; "
                f"got k={data.k}, r={data.r}, c={prior.c}"
            )
    else:
        if data.k < data.r + 1:
            raise TooFewUnits(f"k >= r + 1 required; got k={data.k}, r={data.r}")


def level2_means(data: TwoLevelData, known_mu: np.ndarray | None) -> np.ndarray:
    """Known Level-2 means for the r = 0 case (zeros unless supplied)."""
    if known_mu is None:
        return np.zeros(data.k)
    mu = np.atleast_1d(np.asarray(known_mu, dtype=float))
    if mu.size != data.k:
        raise ValueError("known_mu must have one entry per unit")
    return mu
