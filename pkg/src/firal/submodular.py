"""Submodular surrogate of the batch FIR objective and its maximizers.

For a pool ``X_p`` and candidate query set ``X_q`` the surrogate is

    f(X_q) = sum_{x in X_p - X_q} sum_y -1 / (delta/|v(x,y)|^2 + sum_{x' in X_q} g(x, y, x'))

with ``g`` the interaction kernel of :func:`firal.fisher.g_kernel`. The
kernel carries a ``1/|X_q|`` factor; it is frozen at ``q_size`` (the batch
size of the cardinality constraint) so ``f`` is a fixed set function, which
is what makes it monotone and submodular.
"""
from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SolverError
from .fisher import DEFAULT_DELTA, ScoreKernelCache
from .model import ModelParams

__all__ = [
    "QuerySet",
    "SurrogateObjective",
    "GreedyResult",
    "SubmodularityReport",
    "f_eval",
    "greedy_maximize",
    "brute_force_max",
    "check_submodularity",
    "nemhauser_check",
    "nemhauser_factor",
]


@dataclass(frozen=True)
class QuerySet:
    """Sorted, duplicate-free indices into a pool of size ``pool_size``."""

    indices: tuple
    pool_size: int

    def __post_init__(self):
        idx = tuple(sorted(int(i) for i in self.indices))
        if len(set(idx)) != len(idx):
            raise ValueError("query set has duplicate indices")
        if idx and (idx[0] < 0 or idx[-1] >= self.pool_size):
            raise IndexError(f"query index out of range for pool of {self.pool_size}")
        object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)


class SurrogateObjective:
    """Precomputed tables for evaluating ``f`` on subsets of one pool.

    Memory is ``O((N c)^2)`` for ``N`` pool points and ``c`` classes.
    """

    def __init__(self, params: ModelParams, pool, delta: float = DEFAULT_DELTA,
                 q_size: int = 1, cache: ScoreKernelCache | None = None):
        if delta <= 0:
            raise ValueError("surrogate objective needs delta > 0 (f of the empty set is undefined otherwise)")
        if q_size < 1:
            raise ValueError("q_size must be >= 1")
        self.params = params
        self.delta = float(delta)
        self.q_size = int(q_size)
        self.cache = cache if cache is not None else ScoreKernelCache.build(params, pool)
        sq = self.cache.sq_norms()
        if np.any(sq <= 0.0):
            i, y = np.argwhere(sq <= 0.0)[0]
            raise SolverError(f"v(x, y) vanishes at pool row {i}, class {y + 1}")
        self.inv_sq_norm = 1.0 / sq
        self.base = self.delta * self.inv_sq_norm
        N, c, d = self.cache.V.shape
        flat = self.cache.V.reshape(N * c, d)
        K = ((flat @ flat.T) ** 2).reshape(N * c, N, c).sum(axis=2)
        # GT[j] holds g(x_i, y, x_j) over the flattened (i, y) grid; row-major
        # so every reduction over (i, y) runs on contiguous memory.
        G = K * (self.inv_sq_norm.reshape(N * c, 1) ** 2) / self.q_size
        self.GT = np.ascontiguousarray(G.T)

    @property
    def size(self) -> int:
        return self.base.shape[0]

    @property
    def n_classes(self) -> int:
        return self.base.shape[1]

    def g(self, i: int, y: int, j: int) -> float:
        """Kernel value ``g(x_i, y, x_j)`` with a 1-based label ``y``."""
        return float(self.GT[j, i * self.n_classes + (y - 1)])

    def _state(self, members):
        members = np.asarray(sorted(set(int(i) for i in members)), dtype=int)
        if members.size and (members[0] < 0 or members[-1] >= self.size):
            raise IndexError("query index out of range")
        outside = np.ones(self.size, dtype=bool)
        outside[members] = False
        D = self.base.ravel().copy()
        for j in members:
            D += self.GT[j]
        return members, outside, D

    def denominators(self, members) -> np.ndarray:
        return self._state(members)[2].reshape(self.base.shape)

    def _value(self, outside, D) -> float:
        mask = np.repeat(outside, self.n_classes)
        return -float(np.where(mask, 1.0 / D, 0.0).sum())

    def _after(self, outside, D, cols) -> np.ndarray:
        c = self.n_classes
        mask = np.repeat(outside, c)
        inv = 1.0 / (D[None, :] + self.GT[cols])
        after = -np.where(mask[None, :], inv, 0.0).sum(axis=1)
        own = inv.reshape(len(cols), self.size, c)[np.arange(len(cols)), cols]
        return after + own.sum(axis=1)

    def __call__(self, qset) -> float:
        return f_eval(self, qset)

    def gains(self, members) -> np.ndarray:
        """Marginal gain ``f(X_q + {j}) - f(X_q)`` for every pool index ``j``.

        Entries for indices already in ``members`` are ``-inf``.
        """
        members, outside, D = self._state(members)
        cols = np.arange(self.size)
        gain = self._after(outside, D, cols) - self._value(outside, D)
        gain[members] = -np.inf
        return gain

    def gain(self, members, j: int) -> float:
        members, outside, D = self._state(members)
        if j in members:
            raise ValueError(f"index {j} already selected")
        return float(self._after(outside, D, np.array([j]))[0] - self._value(outside, D))


def f_eval(obj: SurrogateObjective, qset) -> float:
    """Surrogate value of the query set ``qset`` (an iterable of pool indices)."""
    _, outside, D = obj._state(qset)
    return obj._value(outside, D)


@dataclass
class GreedyResult:
    order: list
    gains: list
    values: list
    evaluations: int = 0
    pool_size: int = 0

    @property
    def query_set(self) -> QuerySet:
        return QuerySet(tuple(self.order), self.pool_size)


def _lowest_argmax(a: np.ndarray) -> int:
    return int(np.flatnonzero(a == a.max())[0])


def greedy_maximize(obj: SurrogateObjective, k: int, lazy: bool = False) -> GreedyResult:
    """Greedy chain ``X^j = X^{j-1} + argmax gain``; ties go to the smallest index.

    ``lazy=True`` keeps stale gains in a heap as upper bounds and only
    re-evaluates the top; by submodularity it returns the same chain.
    """
    n = obj.size
    if not 1 <= k <= n:
        raise ValueError(f"k must be in 1..{n}, got {k}")
    members: list[int] = []
    gains: list[float] = []
    values = [f_eval(obj, [])]
    if not lazy:
        for _ in range(k):
            g = obj.gains(members)
            j = _lowest_argmax(g)
            members.append(j)
            gains.append(float(g[j]))
            values.append(f_eval(obj, members))
        return GreedyResult(members, gains, values, evaluations=k * n, pool_size=n)

    g0 = obj.gains([])
    heap = [(-float(g0[j]), j, 0) for j in range(n)]
    heapq.heapify(heap)
    evaluations = n
    for step in range(k):
        while True:
            neg, j, stamp = heapq.heappop(heap)
            if stamp == step:
                break
            fresh = obj.gain(members, j)
            evaluations += 1
            heapq.heappush(heap, (-fresh, j, step))
        members.append(j)
        gains.append(-neg)
        values.append(f_eval(obj, members))
    return GreedyResult(members, gains, values, evaluations=evaluations, pool_size=n)


def brute_force_max(obj: SurrogateObjective, k: int, budget: int = 10**6,
                    order=None) -> tuple[QuerySet, float]:
    """Exact maximizer of ``f`` over ``k``-subsets by enumeration.

    Ties resolve to the lexicographically smallest subset. ``order``
    permutes the enumeration (used to cross-check tie handling).
    """
    n = obj.size
    if not 1 <= k <= n:
        raise ValueError(f"k must be in 1..{n}, got {k}")
    if math.comb(n, k) > budget:
        raise ValueError(f"C({n},{k}) = {math.comb(n, k)} subsets exceeds the budget of {budget}")
    combos = itertools.combinations(range(n), k)
    if order is not None:
        combos = (tuple(sorted(combo)) for combo in itertools.combinations(order, k))
    best, best_val = None, -np.inf
    for combo in combos:
        val = f_eval(obj, combo)
        if val > best_val or (val == best_val and combo < best):
            best, best_val = combo, val
    return QuerySet(best, n), float(best_val)


@dataclass
class SubmodularityReport:
    trials: int
    monotone_violations: int = 0
    diminishing_violations: int = 0
    worst_gap: float = 0.0
    failures: list = field(default_factory=list)

    @property
    def violations(self) -> int:
        return self.monotone_violations + self.diminishing_violations

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "monotone_violations": self.monotone_violations,
            "diminishing_violations": self.diminishing_violations,
            "worst_gap": self.worst_gap,
        }


def check_submodularity(obj: SurrogateObjective, trials: int = 200, seed=0,
                        tol: float = 1e-9) -> SubmodularityReport:
    """Sample ``X_q <= X_q' <= X_p`` and ``xi`` outside ``X_q'``; count violations of
    ``rho(X_q; xi) >= rho(X_q'; xi)`` and ``rho(X_q; xi) >= 0``."""
    n = obj.size
    if n < 3:
        raise ValueError("submodularity check needs a pool of at least 3")
    rng = np.random.default_rng(seed)
    report = SubmodularityReport(trials)
    for _ in range(trials):
        perm = rng.permutation(n)
        xi = int(perm[0])
        big = perm[1 : 1 + rng.integers(0, n)]
        small = big[rng.random(big.size) < 0.5]
        rho_small = f_eval(obj, list(small) + [xi]) - f_eval(obj, small)
        rho_big = f_eval(obj, list(big) + [xi]) - f_eval(obj, big)
        if rho_small < -tol:
            report.monotone_violations += 1
            report.failures.append(("monotone", sorted(small.tolist()), xi, rho_small))
        if rho_small < rho_big - tol:
            report.diminishing_violations += 1
            report.failures.append(("diminishing", sorted(small.tolist()), sorted(big.tolist()), xi))
        report.worst_gap = min(report.worst_gap, rho_small, rho_small - rho_big)
    return report


def nemhauser_factor(k: int) -> float:
    return 1.0 - (1.0 - 1.0 / k) ** k


def nemhauser_check(obj: SurrogateObjective, k: int) -> dict:
    """Greedy vs exact on the adjusted function ``f - f(empty)``."""
    f0 = f_eval(obj, [])
    greedy = greedy_maximize(obj, k)
    qset, best = brute_force_max(obj, k)
    g_adj, opt_adj = greedy.values[-1] - f0, best - f0
    factor = nemhauser_factor(k)
    return {
        "greedy": list(greedy.order),
        "optimum": list(qset.indices),
        "greedy_adjusted": g_adj,
        "optimum_adjusted": opt_adj,
        "ratio": g_adj / opt_adj if opt_adj > 0 else 1.0,
        "bound": factor,
        "holds": bool(g_adj >= factor * opt_adj - 1e-12 * abs(opt_adj)),
    }
