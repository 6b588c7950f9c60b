"""Multinomial logistic regression: likelihood, derivatives and MLE fitting.

The parameter vector of a ``c``-class model over ``m`` features stacks one
weight row per non-reference class. Each row has ``m`` feature weights
followed by a bias (when ``intercept`` is set), so

    theta.reshape(c - 1, m + 1)[j] @ (x, 1)

is the logit of class ``j + 1``; class ``c`` has logit 0. Labels are the
integers ``1..c`` throughout the public API.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import DimensionError, SolverError

__all__ = [
    "ModelParams",
    "LabeledSet",
    "FitResult",
    "augment",
    "log_proba_matrix",
    "proba_matrix",
    "predict_proba",
    "log_likelihood",
    "score",
    "score_matrix",
    "hessian",
    "predict",
    "predict_batch",
    "fit_mle",
]


@dataclass(frozen=True)
class ModelParams:
    """Flattened softmax parameters with the last class as reference."""

    theta: np.ndarray
    n_classes: int
    n_features: int
    intercept: bool = True

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError(f"need at least 2 classes, got {self.n_classes}")
        if self.n_features < 0 or (self.n_features == 0 and not self.intercept):
            raise ValueError("model has no parameters")
        theta = np.array(self.theta, dtype=float).ravel()
        if theta.size != self.dim:
            raise DimensionError(
                f"theta has {theta.size} entries, expected {self.dim} "
                f"for c={self.n_classes}, m={self.n_features}"
            )
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta contains non-finite entries")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @property
    def row_size(self) -> int:
        return self.n_features + int(self.intercept)

    @property
    def dim(self) -> int:
        return (self.n_classes - 1) * self.row_size

    @property
    def weights(self) -> np.ndarray:
        """Weight matrix of shape ``(c - 1, m + intercept)``."""
        return self.theta.reshape(self.n_classes - 1, self.row_size)

    def with_theta(self, theta) -> "ModelParams":
        return ModelParams(theta, self.n_classes, self.n_features, self.intercept)

    @classmethod
    def zeros(cls, n_classes: int, n_features: int, intercept: bool = True) -> "ModelParams":
        d = (n_classes - 1) * (n_features + int(intercept))
        return cls(np.zeros(d), n_classes, n_features, intercept)


@dataclass(frozen=True)
class LabeledSet:
    """Ordered (features, label) pairs; labels are 1-based."""

    X: np.ndarray
    y: np.ndarray
    n_classes: int | None = field(default=None, compare=False)

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1) if X.size else X.reshape(0, 0)
        y = np.array(self.y, dtype=int).ravel()
        if X.ndim != 2 or X.shape[0] != y.size:
            raise DimensionError(f"{X.shape[0] if X.ndim else 0} samples but {y.size} labels")
        if not np.all(np.isfinite(X)):
            raise ValueError("features contain non-finite entries")
        if y.size and y.min() < 1:
            raise ValueError("labels must be >= 1")
        if self.n_classes is not None and y.size and y.max() > self.n_classes:
            raise ValueError(f"label {y.max()} exceeds class count {self.n_classes}")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return self.y.size

    def extend(self, X, y) -> "LabeledSet":
        X = np.asarray(X, dtype=float).reshape(-1, self.X.shape[1])
        return LabeledSet(
            np.vstack([self.X, X]), np.concatenate([self.y, np.asarray(y, dtype=int)]), self.n_classes
        )


@dataclass(frozen=True)
class FitResult:
    params: ModelParams
    converged: bool
    n_iter: int
    grad_norm: float


def _check_X(params: ModelParams, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != params.n_features:
        raise DimensionError(f"expected {params.n_features} features, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("features contain non-finite entries")
    return X


def _check_label(params: ModelParams, y) -> int:
    y = int(y)
    if not 1 <= y <= params.n_classes:
        raise ValueError(f"label {y} outside 1..{params.n_classes}")
    return y


def augment(params: ModelParams, X) -> np.ndarray:
    """Append the constant bias column when the model has an intercept."""
    X = _check_X(params, X)
    if params.intercept:
        return np.hstack([X, np.ones((X.shape[0], 1))])
    return X


def _logits(params: ModelParams, Xa: np.ndarray) -> np.ndarray:
    z = np.zeros((Xa.shape[0], params.n_classes))
    z[:, :-1] = Xa @ params.weights.T
    return z


def log_proba_matrix(params: ModelParams, X) -> np.ndarray:
    z = _logits(params, augment(params, X))
    return z - logsumexp(z, axis=1, keepdims=True)


def proba_matrix(params: ModelParams, X) -> np.ndarray:
    """Class posteriors for each row of ``X``, shape ``(N, c)``."""
    return np.exp(log_proba_matrix(params, X))


def predict_proba(params: ModelParams, x) -> np.ndarray:
    return proba_matrix(params, x)[0]


def log_likelihood(params: ModelParams, data: LabeledSet, weights=None) -> float:
    """Conditional log-likelihood ``sum_i w_i log p(y_i | x_i, theta)``."""
    if len(data) == 0:
        return 0.0
    if data.y.max() > params.n_classes:
        raise ValueError(f"label {data.y.max()} outside 1..{params.n_classes}")
    lp = log_proba_matrix(params, data.X)[np.arange(len(data)), data.y - 1]
    if weights is not None:
        lp = lp * np.asarray(weights, dtype=float)
    total = float(np.sum(lp))
    if not np.isfinite(total):
        raise SolverError("log-likelihood is not finite")
    return total


def _residual_basis(params: ModelParams, P: np.ndarray) -> np.ndarray:
    """``e_y - p`` restricted to non-reference classes, shape ``(N, c, c-1)``."""
    c = params.n_classes
    E = np.eye(c)[:, : c - 1]
    return E[None, :, :] - P[:, None, : c - 1]


def score_matrix(params: ModelParams, X) -> np.ndarray:
    """Scores ``grad log p(y | x_i, theta)`` for every row and label, shape ``(N, c, d)``."""
    Xa = augment(params, X)
    R = _residual_basis(params, proba_matrix(params, X))
    return np.einsum("nyj,na->nyja", R, Xa).reshape(Xa.shape[0], params.n_classes, params.dim)


def score(params: ModelParams, x, y) -> np.ndarray:
    y = _check_label(params, y)
    return score_matrix(params, x)[0, y - 1]


def hessian(params: ModelParams, x) -> np.ndarray:
    """Hessian of ``log p(y | x, theta)``; identical for every label ``y``.

    The softmax log-likelihood is linear in the label indicator, so the
    second derivative is ``-(diag(p) - p p^T) kron (x x^T)`` over the
    non-reference classes.
    """
    xa = augment(params, x)[0]
    p = predict_proba(params, x)[:-1]
    A = np.diag(p) - np.outer(p, p)
    return -np.kron(A, np.outer(xa, xa))


def predict(params: ModelParams, x) -> int:
    """Most probable label; ties go to the smallest class index."""
    return int(np.argmax(predict_proba(params, x))) + 1


def predict_batch(params: ModelParams, X) -> np.ndarray:
    return np.argmax(log_proba_matrix(params, X), axis=1) + 1


def _objective_parts(params, Xa, Y, w, ridge, need_hessian=True):
    """Penalized objective, gradient and (optionally) Hessian in one pass."""
    c = params.n_classes
    z = _logits(params, Xa)
    lse = logsumexp(z, axis=1, keepdims=True)
    logp = z - lse
    P = np.exp(logp)
    theta = params.theta
    value = float(np.sum(w * logp[np.arange(len(Y)), Y])) - ridge * float(theta @ theta)
    resid = (np.eye(c)[Y] - P)[:, : c - 1] * w[:, None]
    grad = (resid.T @ Xa).ravel() - 2.0 * ridge * theta
    if not need_hessian:
        return value, grad, None
    # H[(j,a),(k,b)] = -sum_n w_n (delta_jk p_nj - p_nj p_nk) x_na x_nb
    Pr = P[:, : c - 1]
    H = np.einsum("nj,nk,na,nb->jakb", Pr * w[:, None], Pr, Xa, Xa)
    diag_part = np.einsum("nj,na,nb->jab", Pr * w[:, None], Xa, Xa)
    for j in range(c - 1):
        H[j, :, j, :] -= diag_part[j]
    H = H.reshape(params.dim, params.dim) - 2.0 * ridge * np.eye(params.dim)
    return value, grad, H


def fit_mle(
    data: LabeledSet,
    init: ModelParams,
    *,
    grad_tol: float = 1e-8,
    max_iter: int = 100,
    ridge: float = 1e-8,
    weights=None,
) -> FitResult:
    """Maximize the conditional log-likelihood with damped Newton steps.

    A ridge term ``ridge * ||theta||^2`` keeps the optimum finite on
    separable data. Iteration stops once the sup-norm of the penalized
    gradient is at most ``grad_tol``; otherwise the last iterate is
    returned with ``converged=False``.

    Parameters
    ----------
    data : LabeledSet
        Training pairs, ``n >= 1``.
    init : ModelParams
        Starting point; also fixes the model dimensions.
    weights : array-like, optional
        Per-pair multiplicities (for aggregated samples).
    """
    if len(data) < 1:
        raise ValueError("fit_mle needs at least one labeled pair")
    if grad_tol <= 0 or max_iter < 1:
        raise ValueError("grad_tol must be positive and max_iter >= 1")
    if data.y.max() > init.n_classes:
        raise ValueError(f"label {data.y.max()} outside 1..{init.n_classes}")
    Xa = augment(init, data.X)
    Y = data.y - 1
    w = np.ones(len(Y)) if weights is None else np.asarray(weights, dtype=float)

    params = init
    value, grad, H = _objective_parts(params, Xa, Y, w, ridge)
    gnorm = float(np.max(np.abs(grad)))
    for it in range(max_iter):
        if gnorm <= grad_tol:
            return FitResult(params, True, it, gnorm)
        neg_H = -H
        eig = np.linalg.eigvalsh(neg_H)
        if eig[0] > 0 and eig[-1] / eig[0] <= 1e12:
            step = np.linalg.solve(neg_H, grad)
        else:
            step = grad / max(eig[-1], 1.0)
        decrement = float(grad @ step)
        if decrement <= 1e-14 * (1.0 + abs(value)):
            # Inside round-off of the optimum: take the full step unguarded.
            t = 1.0
        else:
            t = 1.0
            while True:
                trial = params.theta + t * step
                if not np.all(np.isfinite(trial)):
                    raise SolverError("non-finite iterate in line search")
                trial_value, _, _ = _objective_parts(
                    params.with_theta(trial), Xa, Y, w, ridge, need_hessian=False
                )
                if not np.isfinite(trial_value):
                    raise SolverError("NaN objective in line search")
                if trial_value >= value + 1e-4 * t * decrement:
                    break
                t *= 0.5
                if t < 1e-12:
                    return FitResult(params, False, it, gnorm)
        params = params.with_theta(params.theta + t * step)
        value, grad, H = _objective_parts(params, Xa, Y, w, ridge)
        gnorm = float(np.max(np.abs(grad)))
    return FitResult(params, gnorm <= grad_tol, max_iter, gnorm)
