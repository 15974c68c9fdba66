import numpy as np
import pytest

from shrinkfit import TwoLevelData


@pytest.fixture
def fig1_data() -> TwoLevelData:
    """Equal variances V=1, k=10, sum of squares 8, known means 0: the MLE
    sits on the A = 0 boundary here."""
    y = np.sqrt(0.8) * np.array([1, -1, 1, -1, 1, -1, 1, -1, 1, -1.0])
    return TwoLevelData(y, np.ones(10))


@pytest.fixture
def two_group_data() -> TwoLevelData:
    """The two-variance-group design (five units at V=0.55, five at V=5.5)
    with an intercept-only regression, fixed draws."""
    rng = np.random.default_rng(20110607)
    V = np.array([0.55] * 5 + [5.5] * 5)
    theta = rng.normal(0.0, 1.0, 10)
    y = theta + rng.normal(0.0, np.sqrt(V))
    return TwoLevelData(y, V, np.ones((10, 1)))


@pytest.fixture
def equal_dataset_factory():
    """Random equal-variance datasets with k >= 4."""

    def make(rng: np.random.Generator, k: int | None = None, r: int = 0,
             V: float | None = None, A: float | None = None) -> TwoLevelData:
        k = int(rng.integers(4 + r, 40)) if k is None else k
        V = float(rng.uniform(0.2, 5.0)) if V is None else V
        A = float(rng.uniform(0.0, 8.0) * V) if A is None else A
        X = None
        mean = np.zeros(k)
        if r >= 1:
            X = np.column_stack([np.ones(k)] + [rng.normal(size=k) for _ in range(r - 1)])
            mean = X @ rng.normal(0.0, 2.0, r)
        y = mean + rng.normal(0.0, np.sqrt(V + A), k)
        return TwoLevelData(y, np.full(k, V), X)

    return make


@pytest.fixture
def unequal_dataset_factory():
    """Random unequal-variance datasets, optionally with covariates."""

    def make(rng: np.random.Generator, k: int | None = None, r: int = 0,
             A: float | None = None) -> TwoLevelData:
        k = int(rng.integers(5 + r, 30)) if k is None else k
        V = rng.uniform(0.2, 5.0, k)
        A = float(rng.uniform(0.0, 5.0)) if A is None else A
        X = None
        mean = np.zeros(k)
        if r >= 1:
            X = np.column_stack([np.ones(k)] + [rng.normal(size=k) for _ in range(r - 1)])
            mean = X @ rng.normal(0.0, 2.0, r)
        y = mean + rng.normal(0.0, np.sqrt(V + A))
        return TwoLevelData(y, V, X)

    return make
