"""Frank-Wolfe minimization of the pool FIR over sampling weights.

Minimizes ``F(q) = sum_j s_j u_j^T (sum_i q_i B_i + delta I)^{-1} u_j`` over
the probability simplex, where ``B_i`` are per-point conditional Fisher
matrices and ``(s_j, u_j)`` the eigenpairs of the pool Fisher. ``F`` is
convex in ``q``; the solver uses pairwise (or away) steps with a
golden-section line search, and certifies its answer with the Frank-Wolfe
duality gap.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import SolverError
from .fisher import DEFAULT_DELTA, FisherMatrix

__all__ = ["SimplexResult", "fw_objective", "fw_gradient", "fw_gap", "golden_section", "solve_weights"]

_INV_PHI = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass
class SimplexResult:
    q: np.ndarray
    objective: float
    gap: float
    converged: bool
    n_iter: int
    history: list

    def to_dict(self) -> dict:
        return {
            "objective": self.objective,
            "gap": self.gap,
            "converged": self.converged,
            "n_iter": self.n_iter,
        }


def _spectral(ip) -> tuple[np.ndarray, np.ndarray]:
    M = ip.matrix if isinstance(ip, FisherMatrix) else np.asarray(ip, dtype=float)
    sigma, U = np.linalg.eigh(M)
    return sigma, U


def _check_q(bank: np.ndarray, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (bank.shape[0],):
        raise ValueError(f"weights must have length {bank.shape[0]}")
    if np.any(q < -1e-12) or abs(q.sum() - 1.0) > 1e-10:
        raise ValueError("weights are not on the probability simplex")
    return q


def _factor(bank, q, delta):
    M = np.einsum("i,ide->de", q, bank) + delta * np.eye(bank.shape[1])
    try:
        return linalg.cho_factor(M, lower=True)
    except linalg.LinAlgError as exc:
        raise SolverError("weighted Fisher matrix is singular despite the ridge") from exc


def fw_objective(bank, ip, q, delta: float = DEFAULT_DELTA) -> float:
    sigma, U = _spectral(ip)
    factor = _factor(bank, _check_q(bank, q), delta)
    W = linalg.cho_solve(factor, U)
    return float(np.sum(sigma * np.einsum("dj,dj->j", U, W)))


def fw_gradient(bank, ip, q, delta: float = DEFAULT_DELTA) -> np.ndarray:
    """``dF/dq_i = -sum_j s_j (M^{-1}u_j)^T B_i (M^{-1}u_j)``."""
    sigma, U = _spectral(ip)
    factor = _factor(bank, _check_q(bank, q), delta)
    W = linalg.cho_solve(factor, U)
    return -np.einsum("ide,dj,ej,j->i", bank, W, W, sigma)


def fw_gap(bank, ip, q, delta: float = DEFAULT_DELTA) -> float:
    """Duality gap ``max_i <-grad F(q), e_i - q>``; zero exactly at an optimum."""
    q = _check_q(bank, q)
    grad = fw_gradient(bank, ip, q, delta)
    return max(float(grad @ q - grad.min()), 0.0)


def golden_section(fun, lo: float, hi: float, tol: float = 1e-10, max_iter: int = 200):
    """Minimize a unimodal scalar function on ``[lo, hi]``."""
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = fun(d)
    x = 0.5 * (a + b)
    return x, fun(x)


def solve_weights(bank, ip, delta: float = DEFAULT_DELTA, tol: float = 1e-6,
                  max_iter: int = 2000, q0=None, pairwise: bool = True) -> SimplexResult:
    """Frank-Wolfe from the uniform PMF (or ``q0``) with pairwise or away steps.

    Parameters
    ----------
    bank : ndarray, shape (N, d, d)
        Per-point conditional Fisher matrices.
    ip : FisherMatrix or ndarray
        Target (pool) Fisher matrix.
    tol : float
        Stop once the duality gap is at most this.
    pairwise : bool
        Move mass directly from the worst support vertex to the best
        vertex (default); otherwise choose between a Frank-Wolfe step and
        an away step.

    Returns
    -------
    SimplexResult
        ``converged`` is False when ``max_iter`` ran out first; ``q`` is
        then the best iterate seen.
    """
    bank = np.asarray(bank, dtype=float)
    if bank.ndim != 3 or bank.shape[1] != bank.shape[2]:
        raise ValueError(f"bank must have shape (N, d, d), got {bank.shape}")
    n = bank.shape[0]
    sigma, U = _spectral(ip)
    if U.shape[0] != bank.shape[1]:
        raise ValueError("bank and target Fisher dimensions differ")
    q = np.full(n, 1.0 / n) if q0 is None else _check_q(bank, q0).copy()
    flat = bank.reshape(n, -1)

    def evaluate(qv, with_grad=True):
        factor = _factor(bank, qv, delta)
        W = linalg.cho_solve(factor, U)
        val = float(np.sum(sigma * np.einsum("dj,dj->j", U, W)))
        if not with_grad:
            return val, None
        return val, -(flat @ ((W * sigma) @ W.T).ravel())

    value, grad = evaluate(q)
    history = [value]
    gap = float(grad @ q - grad.min())
    it = 0
    for it in range(1, max_iter + 1):
        if gap <= tol:
            return SimplexResult(q, value, max(gap, 0.0), True, it - 1, history)
        s = int(np.argmin(grad))
        support = np.flatnonzero(q > 0)
        a = int(support[np.argmax(grad[support])])
        if pairwise:
            # Shift mass from the worst support vertex to the best vertex.
            direction = np.zeros(n)
            direction[s] += 1.0
            direction[a] -= 1.0
            step_max = q[a]
            if s == a:
                break
        else:
            fw_dir = -q.copy()
            fw_dir[s] += 1.0
            away_gap = float(grad[a] - grad @ q)
            if gap >= away_gap or q[a] >= 1.0:
                direction, step_max = fw_dir, 1.0
            else:
                direction = q.copy()
                direction[a] -= 1.0
                step_max = q[a] / (1.0 - q[a])

        # The weighted matrix is affine along the segment, so the line
        # search only touches d x d matrices.
        M0 = np.einsum("i,ide->de", q, bank) + delta * np.eye(bank.shape[1])
        dM = np.einsum("i,ide->de", direction, bank)

        # Simultaneous diagonalization turns F along the segment into the
        # scalar rational function sum_i c_i / (1 + t lam_i).
        L = np.linalg.cholesky(M0)
        Li = linalg.solve_triangular(L, np.eye(L.shape[0]), lower=True)
        lam, V = np.linalg.eigh(Li @ dM @ Li.T)
        R = V.T @ Li @ U
        coef = np.einsum("ij,j,ij->i", R, sigma, R)

        def along(t):
            den = 1.0 + t * lam
            if np.any(den <= 0.0):
                return np.inf
            return float(np.sum(coef / den))

        t, trial = golden_section(along, 0.0, step_max)
        if along(step_max) <= trial:
            t, trial = step_max, along(step_max)
        if not trial <= value:
            # No descent along this direction within line-search precision.
            break
        q = np.clip(q + t * direction, 0.0, None)
        q[q < 1e-15] = 0.0
        q /= q.sum()
        value, grad = evaluate(q)
        history.append(value)
        gap = float(grad @ q - grad.min())
    return SimplexResult(q, value, max(gap, 0.0), gap <= tol, it, history)
