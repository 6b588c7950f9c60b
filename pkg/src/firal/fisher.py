"""Monte-Carlo Fisher information, the FIR trace and the surrogate kernels."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import DimensionError, SolverError
from .model import ModelParams, proba_matrix, score_matrix

__all__ = [
    "DEFAULT_DELTA",
    "FisherMatrix",
    "ScoreKernelCache",
    "conditional_fisher_bank",
    "fisher_mc",
    "fir_trace",
    "trace_bound_check",
    "v_vector",
    "v_matrix",
    "g_kernel",
]

DEFAULT_DELTA = 0.01


@dataclass(frozen=True)
class FisherMatrix:
    """Symmetric positive (semi)definite Fisher estimate with its ridge.

    ``source`` records where the matrix came from: ``"pool"``, ``"query"``
    or ``"analytic"``.
    """

    matrix: np.ndarray
    ridge: float = 0.0
    source_size: int = 0
    source: str = "pool"

    def __post_init__(self):
        M = np.array(self.matrix, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise DimensionError(f"Fisher matrix must be square, got {M.shape}")
        if not np.all(np.isfinite(M)):
            raise ValueError("Fisher matrix has non-finite entries")
        if np.max(np.abs(M - M.T), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(M))):
            raise ValueError("Fisher matrix is not symmetric")
        if self.ridge < 0:
            raise ValueError("ridge must be >= 0")
        M = 0.5 * (M + M.T)
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0])


def _as_matrix(A) -> np.ndarray:
    return A.matrix if isinstance(A, FisherMatrix) else np.asarray(A, dtype=float)


def conditional_fisher_bank(params: ModelParams, X) -> np.ndarray:
    """Per-sample Fisher ``I(theta, x) = sum_y p(y|x) s_y s_y^T``, shape ``(N, d, d)``."""
    S = score_matrix(params, X)
    P = proba_matrix(params, X)
    return np.einsum("ny,nyd,nye->nde", P, S, S)


def fisher_mc(params: ModelParams, pool, delta: float = DEFAULT_DELTA, weights=None,
              source: str = "pool") -> FisherMatrix:
    """Average expected score outer product over ``pool`` plus ``delta * I``.

    With ``weights`` (a PMF over the rows) the average becomes the exact
    expectation under that PMF.
    """
    X = np.asarray(pool, dtype=float)
    if X.ndim == 1:
        X = X[:, None] if params.n_features == 1 else X[None, :]
    if X.shape[0] == 0:
        raise ValueError("fisher_mc needs a non-empty pool")
    if delta < 0:
        raise ValueError("delta must be >= 0")
    if weights is None:
        w = np.full(X.shape[0], 1.0 / X.shape[0])
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (X.shape[0],) or np.any(w < 0):
            raise ValueError("weights must be a non-negative vector over the pool")
        w = w / w.sum()
    S = score_matrix(params, X)
    P = proba_matrix(params, X)
    M = np.einsum("ny,nyd,nye->de", P * w[:, None], S, S)
    M = M + delta * np.eye(params.dim)
    return FisherMatrix(M, delta, X.shape[0], source)


def _cholesky(A: np.ndarray, what: str):
    try:
        return linalg.cho_factor(A, lower=True, check_finite=True)
    except linalg.LinAlgError as exc:
        raise SolverError(
            f"{what} is singular or indefinite; add a positive ridge delta to the Fisher estimate"
        ) from exc


def fir_trace(iq, ip) -> float:
    """``tr[iq^{-1} ip]`` through a Cholesky solve (no explicit inverse)."""
    A, B = _as_matrix(iq), _as_matrix(ip)
    if A.shape != B.shape:
        raise DimensionError(f"shape mismatch {A.shape} vs {B.shape}")
    factor = _cholesky(A, "query Fisher matrix")
    return float(np.trace(linalg.cho_solve(factor, B)))


def trace_bound_check(iq, ip) -> tuple[float, float]:
    """Both sides of ``tr[A^{-1}B] <= tr[A^{-1}] tr[B]`` for SPD ``A``, ``B``."""
    A, B = _as_matrix(iq), _as_matrix(ip)
    if A.shape != B.shape:
        raise DimensionError(f"shape mismatch {A.shape} vs {B.shape}")
    factor = _cholesky(A, "first matrix")
    _cholesky(B, "second matrix")
    lhs = float(np.trace(linalg.cho_solve(factor, B)))
    inv_trace = float(np.trace(linalg.cho_solve(factor, np.eye(A.shape[0]))))
    return lhs, inv_trace * float(np.trace(B))


_TINY = np.finfo(float).tiny


def v_matrix(params: ModelParams, X) -> np.ndarray:
    """``v(x, y) = grad p(y|x) / sqrt(p(y|x)) = sqrt(p) * score``, shape ``(N, c, d)``."""
    P = proba_matrix(params, X)
    if np.any(P <= _TINY):
        raise SolverError("class probability underflowed; the model is saturated at this input")
    return np.sqrt(P)[:, :, None] * score_matrix(params, X)


def v_vector(params: ModelParams, x, y) -> np.ndarray:
    y = int(y)
    if not 1 <= y <= params.n_classes:
        raise ValueError(f"label {y} outside 1..{params.n_classes}")
    return v_matrix(params, x)[0, y - 1]


def g_kernel(params: ModelParams, x, y, x_prime, q_size: int) -> float:
    """Surrogate interaction ``(1/q_size) sum_y' [v(x,y).v(x',y') / |v(x,y)|^2]^2``."""
    if q_size < 1:
        raise ValueError("q_size must be >= 1")
    v = v_vector(params, x, y)
    nv2 = float(v @ v)
    if nv2 == 0.0:
        raise SolverError("v(x, y) is zero: theta is a stationary point of p(y|x)")
    Vp = v_matrix(params, x_prime)[0]
    return float(np.sum((Vp @ v / nv2) ** 2) / q_size)


@dataclass(frozen=True)
class ScoreKernelCache:
    """``v`` vectors and class probabilities for every pool row at one ``theta``."""

    V: np.ndarray
    P: np.ndarray

    @classmethod
    def build(cls, params: ModelParams, pool) -> "ScoreKernelCache":
        V = v_matrix(params, pool)
        P = proba_matrix(params, pool)
        V.setflags(write=False)
        P.setflags(write=False)
        return cls(V, P)

    @property
    def size(self) -> int:
        return self.V.shape[0]

    def sq_norms(self) -> np.ndarray:
        return np.einsum("nyd,nyd->ny", self.V, self.V)

    def fisher(self, rows=None) -> np.ndarray:
        """Un-ridged average of ``sum_y v v^T`` over ``rows`` (default: all)."""
        V = self.V if rows is None else self.V[np.asarray(rows, dtype=int)]
        return np.einsum("nyd,nye->de", V, V) / V.shape[0]
