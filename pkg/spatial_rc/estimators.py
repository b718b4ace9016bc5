"""
estimators.py - Least-squares linear estimators and the R² score.

Both spatial metrics reduce to the same question: how well does a linear
estimator, trained on the first 75% of a run, predict the last 25%?

    fit_ols            ->  weights + intercept (minimum-norm least squares)
    r_squared          ->  cov²(ŷ, y) / (σ²(ŷ) σ²(y))
    estimator_quality  ->  fit on the train prefix, score on the test suffix

The solver is scipy's SVD-based least squares (LAPACK gelsd) on the
intercept-augmented design matrix, never the normal equations. Delay-embedded
features are often close to collinear and the SVD gives the minimum-norm
solution instead of failing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from spatial_rc.core import split_train_test


# Relative tolerance for the residual-orthogonality check after a fit.
ORTHOGONALITY_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class LinearEstimator:
    """
    ŷ = intercept + features @ weights

    feature_spec describes how the feature columns were built, e.g.
    "u(t-0..10)" or "nodes[3, 4, 7](t)".
    """

    weights: np.ndarray
    intercept: float
    feature_spec: str = ""
    ridge: float = 0.0

    def __post_init__(self) -> None:
        weights = np.array(self.weights, dtype=np.float64, copy=True).reshape(-1)
        if not (np.all(np.isfinite(weights)) and np.isfinite(self.intercept)):
            raise ValueError("estimator weights and intercept must be finite")
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "intercept", float(self.intercept))

    def predict(self, features: np.ndarray) -> np.ndarray:
        x = _as_design(features)
        if x.shape[1] != len(self.weights):
            raise ValueError(f"estimator expects {len(self.weights)} features, got {x.shape[1]}")
        return self.intercept + x @ self.weights


def _as_design(features: np.ndarray) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError(f"features must be T × d, got shape {x.shape}")
    return x


def fit_ols(
    features: np.ndarray,
    targets: np.ndarray,
    ridge: float = 0.0,
    feature_spec: str = "",
) -> LinearEstimator:
    """
    Least-squares fit of targets ≈ c + features @ w.

    Args:
        features:     T × d matrix (a 1-D array is treated as one column).
        targets:      length-T vector.
        ridge:        optional L2 penalty on w (never on c). 0 is plain OLS.
                      With ridge > 0 any T >= 1 is accepted, including T <= d.
        feature_spec: free-text description stored on the estimator.

    Rank-deficient designs get the minimum-norm solution: the fitted values
    are still the least-squares projection, only the split of weight between
    collinear columns is fixed by the norm.
    """
    x = _as_design(features)
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    n_rows, n_feat = x.shape
    if len(y) != n_rows:
        raise ValueError(f"feature rows ({n_rows}) != target rows ({len(y)})")
    if ridge == 0 and n_rows < n_feat + 1:
        raise ValueError(f"need T >= d + 1 rows, got T={n_rows}, d={n_feat} (or set ridge > 0)")
    if n_rows < 1:
        raise ValueError("need at least one row")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("features and targets must be finite")
    if ridge < 0:
        raise ValueError(f"ridge must be >= 0, got {ridge}")

    design = np.column_stack([x, np.ones(n_rows)])
    rhs = y
    if ridge > 0:
        penalty = np.zeros((n_feat, n_feat + 1))
        penalty[:, :n_feat] = np.sqrt(ridge) * np.eye(n_feat)
        design = np.vstack([design, penalty])
        rhs = np.concatenate([y, np.zeros(n_feat)])

    # singular values below this fraction of the largest count as zero
    cond = max(design.shape) * np.finfo(np.float64).eps
    beta, _, _, _ = linalg.lstsq(design, rhs, cond=cond, lapack_driver="gelsd", check_finite=False)

    if ridge == 0:
        _check_orthogonal(design, rhs, beta)

    return LinearEstimator(weights=beta[:n_feat], intercept=beta[n_feat],
                           feature_spec=feature_spec, ridge=float(ridge))


def _check_orthogonal(design: np.ndarray, rhs: np.ndarray, beta: np.ndarray) -> None:
    """The residual of a least-squares fit must be orthogonal to every column."""
    residual = rhs - design @ beta
    scale = np.linalg.norm(design, axis=0) * max(np.linalg.norm(rhs), 1.0)
    leak = np.abs(design.T @ residual)
    if np.any(leak > ORTHOGONALITY_TOL * np.maximum(scale, 1.0)):
        print(f"[WARN] least-squares residual not orthogonal (max {leak.max():.3g})", flush=True)


def r_squared(predicted: np.ndarray, actual: np.ndarray) -> float:
    """
    Squared Pearson correlation cov²(ŷ, y) / (σ²(ŷ) σ²(y)).

    Returns 0 when either input is constant: an estimator with no variation,
    or a target with none, carries no information.
    """
    p = np.asarray(predicted, dtype=np.float64).reshape(-1)
    a = np.asarray(actual, dtype=np.float64).reshape(-1)
    if len(p) != len(a):
        raise ValueError(f"length mismatch: predicted {len(p)} vs actual {len(a)}")
    if len(p) < 2:
        raise ValueError("r_squared needs at least two samples")
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(a))):
        raise ValueError("r_squared inputs must be finite")
    if np.ptp(p) == 0.0 or np.ptp(a) == 0.0:
        return 0.0

    pc = p - p.mean()
    ac = a - a.mean()
    var_p = float(np.dot(pc, pc))
    var_a = float(np.dot(ac, ac))
    if var_p == 0.0 or var_a == 0.0:
        return 0.0
    cov = float(np.dot(pc, ac))
    return float(min(max(cov * cov / (var_p * var_a), 0.0), 1.0))


def mean_squared_error(predicted: np.ndarray, actual: np.ndarray) -> float:
    p = np.asarray(predicted, dtype=np.float64).reshape(-1)
    a = np.asarray(actual, dtype=np.float64).reshape(-1)
    if len(p) != len(a):
        raise ValueError(f"length mismatch: predicted {len(p)} vs actual {len(a)}")
    return float(np.mean((p - a) ** 2))


def estimator_quality(
    features: np.ndarray,
    targets: np.ndarray,
    train_fraction: float = 0.75,
    ridge: float = 0.0,
) -> float:
    """Fit on the first train_fraction of the rows, return held-out R²."""
    (x_train, y_train), (x_test, y_test) = split_train_test(features, targets, train_fraction)
    estimator = fit_ols(x_train, y_train, ridge=ridge)
    return r_squared(estimator.predict(x_test), y_test)
