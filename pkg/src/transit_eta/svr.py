"""Epsilon-insensitive support vector regression with an RBF kernel.

The dual problem is solved by sequential minimal optimization over the
paired box variables (one per side of the epsilon tube), always picking the
maximally KKT-violating pair. Kernel rows are computed on demand through a
small LRU row cache; fitted models keep only the support vectors.
"""

from __future__ import annotations

import time
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from .validation import as_float_matrix, check_same_length

_SV_EPS = 1e-12


def rbf_kernel(x, y, gamma: float) -> float:
    """exp(-gamma * ||x - y||^2) for two equal-length vectors."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    diff = x - y
    return float(np.exp(-gamma * (diff @ diff)))


def rbf_kernel_matrix(A, B, gamma: float) -> np.ndarray:
    """Pairwise RBF kernel between the rows of A and the rows of B."""
    A = as_float_matrix(A, "A")
    B = as_float_matrix(B, "B")
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    sq = (
        (A * A).sum(axis=1)[:, None]
        + (B * B).sum(axis=1)[None, :]
        - 2.0 * (A @ B.T)
    )
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-gamma * sq)


@dataclass
class SvrConfig:
    C: float = 100.0
    epsilon: float = 5.0
    gamma: Optional[float] = None  # None -> 1 / n_features at fit time
    tol: float = 1e-3
    max_passes: int = 1_000_000

    def __post_init__(self):
        if self.C <= 0:
            raise ValueError("C must be positive")
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if self.gamma is not None and self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_passes < 1:
            raise ValueError("max_passes must be at least 1")


@dataclass
class SvrModel:
    """Fitted model: support vectors, their dual coefficients, bias, and gamma."""

    support_vectors: np.ndarray
    dual_coef: np.ndarray
    bias: float
    gamma: float
    support_indices: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    converged: bool = True
    timed_out: bool = False
    iterations: int = 0
    final_violation: float = 0.0


class _KernelRowCache:
    """LRU cache of kernel rows against the full training set."""

    def __init__(self, X: np.ndarray, gamma: float, max_rows: int):
        self._X = X
        self._gamma = gamma
        self._sq = (X * X).sum(axis=1)
        self._max_rows = max(1, max_rows)
        self._rows: OrderedDict[int, np.ndarray] = OrderedDict()

    def row(self, i: int) -> np.ndarray:
        cached = self._rows.get(i)
        if cached is not None:
            self._rows.move_to_end(i)
            return cached
        xi = self._X[i]
        sq = self._sq + self._sq[i] - 2.0 * (self._X @ xi)
        np.maximum(sq, 0.0, out=sq)
        row = np.exp(-self._gamma * sq)
        self._rows[i] = row
        if len(self._rows) > self._max_rows:
            self._rows.popitem(last=False)
        return row


def _kkt_scores(y, u, epsilon, alpha, alpha_star, C):
    """Selection scores and masks for the maximal violating pair.

    Raising a tube variable is admissible while it is below C; lowering the
    opposite-side variable while it is above 0. The gap between the largest
    raisable score and the smallest lowerable score is the KKT violation,
    and the optimal bias must lie between the two.
    """
    sa = y - u - epsilon
    ss = y - u + epsilon
    up_a = np.where(alpha < C, sa, -np.inf)
    up_s = np.where(alpha_star > 0, ss, -np.inf)
    low_a = np.where(alpha > 0, sa, np.inf)
    low_s = np.where(alpha_star < C, ss, np.inf)
    return sa, ss, up_a, up_s, low_a, low_s


def fit_svr(
    X,
    y,
    cfg: Optional[SvrConfig] = None,
    time_budget_s: Optional[float] = None,
    cache_rows: int = 512,
) -> SvrModel:
    """Train epsilon-SVR by SMO on the maximally violating pair.

    Stops when the largest KKT violation is within ``cfg.tol``. If
    ``cfg.max_passes`` pair updates or the time budget run out first, the
    model is returned with ``converged=False`` (and ``timed_out`` set when
    the budget was the cause).
    """
    cfg = cfg or SvrConfig()
    X = as_float_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    check_same_length(X, y, ("X", "y"))
    n = len(y)
    if n < 2:
        raise ValueError(f"need at least 2 samples, got {n}")
    gamma = cfg.gamma if cfg.gamma is not None else 1.0 / X.shape[1]

    alpha = np.zeros(n)
    alpha_star = np.zeros(n)
    u = np.zeros(n)  # kernel expansion K @ (alpha - alpha_star)
    kernel = _KernelRowCache(X, gamma, cache_rows)

    deadline = None if time_budget_s is None else time.monotonic() + time_budget_s
    converged = False
    timed_out = False
    iterations = 0
    violation = np.inf

    while iterations < cfg.max_passes:
        _, _, up_a, up_s, low_a, low_s = _kkt_scores(y, u, cfg.epsilon, alpha, alpha_star, cfg.C)
        ia, is_ = int(np.argmax(up_a)), int(np.argmax(up_s))
        if up_a[ia] >= up_s[is_]:
            i, i_on_alpha, m = ia, True, up_a[ia]
        else:
            i, i_on_alpha, m = is_, False, up_s[is_]
        ja, js = int(np.argmin(low_a)), int(np.argmin(low_s))
        if low_a[ja] <= low_s[js]:
            j, j_on_alpha, M = ja, True, low_a[ja]
        else:
            j, j_on_alpha, M = js, False, low_s[js]

        violation = m - M
        if violation <= cfg.tol:
            converged = True
            break
        if i == j:
            # Same sample on both sides can only happen at the tube kink;
            # no productive step exists, treat as converged at this gap.
            converged = violation <= cfg.tol
            break
        if deadline is not None and time.monotonic() > deadline:
            timed_out = True
            break

        ki = kernel.row(i)
        kj = kernel.row(j)
        quad = ki[i] + kj[j] - 2.0 * ki[j]
        lam = violation / max(quad, 1e-12)
        lam = min(lam, cfg.C - alpha[i] if i_on_alpha else alpha_star[i])
        lam = min(lam, alpha[j] if j_on_alpha else cfg.C - alpha_star[j])
        if lam <= 0:
            break
        if i_on_alpha:
            alpha[i] += lam
        else:
            alpha_star[i] -= lam
        if j_on_alpha:
            alpha[j] -= lam
        else:
            alpha_star[j] += lam
        u += lam * (ki - kj)
        iterations += 1

    # Bias sits midway between the tightest raisable and lowerable scores.
    _, _, up_a, up_s, low_a, low_s = _kkt_scores(y, u, cfg.epsilon, alpha, alpha_star, cfg.C)
    m = max(float(np.max(up_a)), float(np.max(up_s)))
    M = min(float(np.min(low_a)), float(np.min(low_s)))
    if np.isfinite(m) and np.isfinite(M):
        bias = (m + M) / 2.0
    else:
        bias = float(np.mean(y - u))

    beta = alpha - alpha_star
    sv_mask = np.abs(beta) > _SV_EPS
    return SvrModel(
        support_vectors=X[sv_mask].copy(),
        dual_coef=beta[sv_mask].copy(),
        bias=bias,
        gamma=gamma,
        support_indices=np.flatnonzero(sv_mask),
        converged=converged,
        timed_out=timed_out,
        iterations=iterations,
        final_violation=float(violation) if np.isfinite(violation) else float("inf"),
    )


def predict_svr(model: SvrModel, x) -> float:
    """Kernel-expansion prediction for a single input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"expected a 1-D input vector, got shape {x.shape}")
    return float(predict_svr_batch(model, x.reshape(1, -1))[0])


def predict_svr_batch(model: SvrModel, X) -> np.ndarray:
    X = as_float_matrix(X)
    if len(model.dual_coef) == 0:
        return np.full(len(X), model.bias)
    if X.shape[1] != model.support_vectors.shape[1]:
        raise ValueError(
            f"dimension mismatch: {X.shape[1]} vs {model.support_vectors.shape[1]}"
        )
    K = rbf_kernel_matrix(X, model.support_vectors, model.gamma)
    return K @ model.dual_coef + model.bias


def kkt_violation(model: SvrModel, X, y, cfg: SvrConfig) -> float:
    """Largest KKT violation of the fitted dual over a training set."""
    X = as_float_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    beta = np.zeros(len(y))
    beta[model.support_indices] = model.dual_coef
    u = rbf_kernel_matrix(X, X, model.gamma) @ beta
    alpha = np.maximum(beta, 0.0)
    alpha_star = np.maximum(-beta, 0.0)
    _, _, up_a, up_s, low_a, low_s = _kkt_scores(y, u, cfg.epsilon, alpha, alpha_star, cfg.C)
    m = max(float(np.max(up_a)), float(np.max(up_s)))
    M = min(float(np.min(low_a)), float(np.min(low_s)))
    return m - M


class SupportVectorRegressor(BaseEstimator, RegressorMixin):
    """Estimator wrapper over the SMO solver."""

    def __init__(
        self,
        C: float = 100.0,
        epsilon: float = 5.0,
        gamma: Optional[float] = None,
        tol: float = 1e-3,
        max_passes: int = 1_000_000,
        time_budget_s: Optional[float] = None,
        cache_rows: int = 512,
    ):
        self.C = C
        self.epsilon = epsilon
        self.gamma = gamma
        self.tol = tol
        self.max_passes = max_passes
        self.time_budget_s = time_budget_s
        self.cache_rows = cache_rows

    def _config(self) -> SvrConfig:
        return SvrConfig(C=self.C, epsilon=self.epsilon, gamma=self.gamma,
                         tol=self.tol, max_passes=self.max_passes)

    def fit(self, X, y):
        self.model_ = fit_svr(
            X, y, self._config(), time_budget_s=self.time_budget_s,
            cache_rows=self.cache_rows,
        )
        self.support_vectors_ = self.model_.support_vectors
        self.dual_coef_ = self.model_.dual_coef
        self.intercept_ = self.model_.bias
        self.n_features_in_ = np.asarray(X).shape[1]
        return self

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "model_"):
            raise NotFittedError("estimator is not fitted")
        return predict_svr_batch(self.model_, X)
