"""Query-selection strategies: the five FIR algorithms plus two baselines.

Every pool-based selector takes the current estimate ``params``, the
candidate pool (rows of a feature matrix) and the batch size ``k`` and
returns a :class:`QueryResult` of pool indices. ``select_fukumizu``
synthesizes new covariates instead.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, ConvergenceError, SolverError
from .fisher import DEFAULT_DELTA, conditional_fisher_bank, fisher_mc
from .model import ModelParams, log_proba_matrix, proba_matrix, score_matrix
from .simplex import solve_weights
from .submodular import SurrogateObjective, greedy_maximize

__all__ = [
    "KINDS",
    "ProposalSettings",
    "StrategyConfig",
    "QueryResult",
    "expected_information",
    "entropy",
    "mixing_weight",
    "select_zhang",
    "select_settles",
    "select_hoi",
    "select_chaudhuri",
    "select_fukumizu",
    "select_entropy",
    "select_random",
    "select",
]

KINDS = ("fukumizu", "zhang", "settles", "hoi", "chaudhuri", "random", "entropy")


@dataclass(frozen=True)
class ProposalSettings:
    """Diagonal-Gaussian proposal search used by the synthetic strategy."""

    iterations: int = 200
    samples: int = 256
    learning_rate: float = 0.05
    init_mean: tuple | None = None
    init_log_std: float = 0.0
    grad_limit: float = 1e6


@dataclass(frozen=True)
class StrategyConfig:
    kind: str
    batch_size: int = 1
    delta: float = DEFAULT_DELTA
    seed: int = 0
    mixing_exponent: float = 1.0 / 6.0
    fw_tol: float = 1e-5
    fw_max_iter: int = 5000
    hoi_path: str = "exact"
    lazy: bool = True
    seed_with_labeled: bool = False
    proposal: ProposalSettings = field(default_factory=ProposalSettings)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown strategy {self.kind!r}; choose from {', '.join(KINDS)}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.delta < 0:
            raise ConfigError("delta must be >= 0")
        if self.hoi_path not in ("exact", "surrogate"):
            raise ConfigError("hoi_path must be 'exact' or 'surrogate'")
        if isinstance(self.proposal, dict):
            object.__setattr__(self, "proposal", ProposalSettings(**self.proposal))

    @classmethod
    def from_dict(cls, d: dict) -> "StrategyConfig":
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown strategy fields: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class QueryResult:
    """Chosen pool indices (or synthesized samples) and selection diagnostics."""

    indices: np.ndarray | None
    objective: float
    samples: np.ndarray | None = None
    with_replacement: bool = False
    diagnostics: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.indices) if self.indices is not None else len(self.samples)


def _pool(pool, params: ModelParams) -> np.ndarray:
    X = np.asarray(pool, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[1] != params.n_features:
        raise ValueError(f"pool has {X.shape[1]} features, model expects {params.n_features}")
    return X


def _check_k(k: int, n: int):
    if not 1 <= k <= n:
        raise ValueError(f"batch size {k} must be in 1..{n}")


def _top_k(values: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` largest values; ties go to the smaller index."""
    return np.argsort(-values, kind="stable")[:k]


def expected_information(params: ModelParams, X) -> np.ndarray:
    """``sum_y p(y|x) |grad log p(y|x)|^2`` (trace of the per-sample Fisher) per row."""
    S = score_matrix(params, X)
    P = proba_matrix(params, X)
    return np.einsum("ny,nyd,nyd->n", P, S, S)


def entropy(params: ModelParams, X) -> np.ndarray:
    logp = log_proba_matrix(params, X)
    return -np.sum(np.exp(logp) * logp, axis=1)


def mixing_weight(k: int, exponent: float = 1.0 / 6.0) -> float:
    """Weight on the optimized PMF before blending with uniform: ``1 - k^-exponent``."""
    return 1.0 - float(k) ** (-exponent)


def select_zhang(params: ModelParams, pool, k: int) -> QueryResult:
    X = _pool(pool, params)
    _check_k(k, len(X))
    info = expected_information(params, X)
    idx = _top_k(info, k)
    return QueryResult(idx, float(info[idx].sum()), diagnostics={"scores": info[idx].tolist()})


def _target_fisher(params, X, ip_pool, ip, delta) -> np.ndarray:
    if ip is not None:
        M = ip.matrix if hasattr(ip, "matrix") else np.asarray(ip, dtype=float)
        if M.shape != (params.dim, params.dim):
            raise ValueError(f"target Fisher must be {params.dim}x{params.dim}")
        return M
    return fisher_mc(params, X if ip_pool is None else _pool(ip_pool, params), delta).matrix


def _singleton_fir(bank: np.ndarray, ip: np.ndarray, delta: float) -> np.ndarray:
    d = ip.shape[0]
    M = bank + delta * np.eye(d)
    return np.trace(np.linalg.solve(M, np.broadcast_to(ip, M.shape)), axis1=1, axis2=2)


def select_settles(params: ModelParams, pool, k: int, delta: float = DEFAULT_DELTA,
                   ip_pool=None, ip=None) -> QueryResult:
    """Greedy batch where each step scores candidates in isolation.

    Every step takes the remaining candidate minimizing
    ``tr[(I(x) + delta I)^{-1} I_p]``; already chosen queries do not enter
    the score. The target Fisher is ``ip`` when given, else the ridged
    average over ``ip_pool`` (default: the candidate pool).
    """
    X = _pool(pool, params)
    _check_k(k, len(X))
    if delta <= 0:
        raise ValueError("single-sample Fisher matrices need delta > 0 to be invertible")
    ip = _target_fisher(params, X, ip_pool, ip, delta)
    scores = _singleton_fir(conditional_fisher_bank(params, X), ip, delta)
    remaining = np.ones(len(X), dtype=bool)
    chosen = []
    for _ in range(k):
        masked = np.where(remaining, scores, np.inf)
        j = int(np.argmin(masked))
        chosen.append(j)
        remaining[j] = False
    idx = np.array(chosen)
    return QueryResult(idx, float(scores[idx].sum()), diagnostics={"scores": scores[idx].tolist()})


def select_hoi(params: ModelParams, pool, k: int, delta: float = DEFAULT_DELTA, ip_pool=None,
               ip=None, labeled_X=None, path: str = "exact", lazy: bool = True,
               compare_surrogate: bool = False) -> QueryResult:
    """Greedy batch on ``tr[I(X_q + {x})^{-1} I_p]`` with the chosen set accumulated.

    ``path="exact"`` evaluates the trace directly (authoritative);
    ``path="surrogate"`` greedily maximizes the submodular surrogate instead.
    ``labeled_X`` seeds the accumulated set with already-labeled covariates
    (exact path only).
    """
    X = _pool(pool, params)
    n = len(X)
    _check_k(k, n)
    if delta <= 0:
        raise ValueError("select_hoi needs delta > 0")
    diagnostics: dict = {"path": path}
    if path == "surrogate":
        obj = SurrogateObjective(params, X, delta, q_size=k)
        res = greedy_maximize(obj, k, lazy=lazy)
        diagnostics.update(gains=res.gains, evaluations=res.evaluations)
        return QueryResult(np.array(res.order), res.values[-1], diagnostics=diagnostics)
    if path != "exact":
        raise ValueError(f"unknown path {path!r}")

    ip = _target_fisher(params, X, ip_pool, ip, delta)
    bank = conditional_fisher_bank(params, X)
    d = params.dim
    acc = np.zeros((d, d))
    count = 0
    if labeled_X is not None and len(labeled_X):
        acc = conditional_fisher_bank(params, _pool(labeled_X, params)).sum(axis=0)
        count = len(labeled_X)
    remaining = np.ones(n, dtype=bool)
    chosen, chain = [], []
    eye = delta * np.eye(d)
    for step in range(k):
        cand = np.flatnonzero(remaining)
        M = (acc[None] + bank[cand]) / (count + step + 1) + eye
        vals = np.trace(np.linalg.solve(M, np.broadcast_to(ip, M.shape)), axis1=1, axis2=2)
        pos = int(np.argmin(vals))
        j = int(cand[pos])
        chosen.append(j)
        chain.append(float(vals[pos]))
        acc = acc + bank[j]
        remaining[j] = False
    diagnostics["chain"] = chain
    if compare_surrogate:
        sur = greedy_maximize(SurrogateObjective(params, X, delta, q_size=k), k, lazy=lazy)
        diagnostics["surrogate_order"] = list(sur.order)
        diagnostics["surrogate_first_agrees"] = bool(sur.order[0] == chosen[0])
        diagnostics["surrogate_overlap"] = len(set(sur.order) & set(chosen)) / k
        diagnostics["pool_fisher_condition"] = float(np.linalg.cond(ip))
    return QueryResult(np.array(chosen), chain[-1], diagnostics=diagnostics)


def select_chaudhuri(params: ModelParams, pool, k: int, mixing_exponent: float = 1.0 / 6.0,
                     delta: float = DEFAULT_DELTA, seed=0, ip_pool=None, ip=None, tol: float = 1e-5,
                     max_iter: int = 5000) -> QueryResult:
    """Optimize sampling weights over the pool, blend with uniform, sample with replacement."""
    X = _pool(pool, params)
    n = len(X)
    if k < 1:
        raise ValueError("batch size must be >= 1")
    ip = _target_fisher(params, X, ip_pool, ip, delta)
    bank = conditional_fisher_bank(params, X)
    res = solve_weights(bank, ip, delta=delta, tol=tol, max_iter=max_iter)
    if not res.converged:
        raise ConvergenceError(
            f"Frank-Wolfe stopped after {res.n_iter} iterations with gap {res.gap:.3e} > {tol:.1e} "
            f"(objective {res.objective:.6g})"
        )
    lam = mixing_weight(k, mixing_exponent)
    mixed = lam * res.q + (1.0 - lam) / n
    mixed /= mixed.sum()
    rng = np.random.default_rng(seed)
    idx = rng.choice(n, size=k, replace=True, p=mixed)
    return QueryResult(
        idx,
        res.objective,
        with_replacement=True,
        diagnostics={"lambda": lam, "weights": res.q.tolist(), "gap": res.gap, "fw_iterations": res.n_iter},
    )


def select_fukumizu(params: ModelParams, k: int, settings: ProposalSettings | None = None,
                    seed=0) -> QueryResult:
    """Fit a diagonal-Gaussian proposal to maximize expected information, then sample ``k`` points.

    The proposal parameters (mean, log-std) follow a score-function gradient
    estimate with a mean baseline; each iteration draws ``settings.samples``
    standard-normal perturbations shared by both parameter blocks. Steps use
    the natural gradient of the Gaussian family with rewards divided by
    their sample standard deviation, which keeps a single far sample from
    throwing the mean off (the objective is unbounded along the decision
    boundary).
    """
    if k < 1:
        raise ValueError("batch size must be >= 1")
    s = settings or ProposalSettings()
    m = params.n_features
    rng = np.random.default_rng(seed)
    mean = np.zeros(m) if s.init_mean is None else np.array(s.init_mean, dtype=float)
    log_std = np.full(m, float(s.init_log_std))
    mean_path = [mean.copy()]
    step_var = np.zeros(m)
    for it in range(s.iterations):
        eps = rng.standard_normal((s.samples, m))
        std = np.exp(log_std)
        h = expected_information(params, mean + std * eps)
        centered = h - h.mean()
        grad = np.concatenate([(centered[:, None] * eps / std).mean(axis=0),
                               (centered[:, None] * (eps ** 2 - 1.0)).mean(axis=0)])
        if not np.all(np.isfinite(grad)) or np.linalg.norm(grad) > s.grad_limit:
            raise SolverError(
                f"proposal gradient estimate blew up at iteration {it} (norm {np.linalg.norm(grad):.3g}); "
                "increase the per-iteration sample budget or lower the learning rate"
            )
        spread = h.std()
        if spread == 0.0:
            break
        shaped = centered / spread
        terms_mean = std * shaped[:, None] * eps
        g_mean = terms_mean.mean(axis=0)
        g_log_std = 0.5 * (shaped[:, None] * (eps ** 2 - 1.0)).mean(axis=0)
        step_var += (s.learning_rate ** 2) * terms_mean.var(axis=0) / s.samples
        mean = mean + s.learning_rate * g_mean
        log_std = np.clip(log_std + s.learning_rate * g_log_std, -6.0, 4.0)
        mean_path.append(mean.copy())
    samples = mean + np.exp(log_std) * rng.standard_normal((k, m))
    objective = float(expected_information(params, mean + np.exp(log_std) * rng.standard_normal((s.samples, m))).mean())
    return QueryResult(
        None,
        objective,
        samples=samples,
        diagnostics={
            "mean": mean.tolist(),
            "log_std": log_std.tolist(),
            "mean_noise_std": np.sqrt(step_var).tolist(),
            "mean_path": np.array(mean_path).tolist(),
        },
    )


def select_entropy(params: ModelParams, pool, k: int) -> QueryResult:
    X = _pool(pool, params)
    _check_k(k, len(X))
    H = entropy(params, X)
    idx = _top_k(H, k)
    return QueryResult(idx, float(H[idx].sum()), diagnostics={"entropies": H[idx].tolist()})


def select_random(pool, k: int, seed=0) -> QueryResult:
    n = len(pool)
    _check_k(k, n)
    idx = np.random.default_rng(seed).choice(n, size=k, replace=False)
    return QueryResult(idx, 0.0)


def select(config: StrategyConfig, params: ModelParams, pool, *, ip_pool=None, labeled_X=None,
           seed=None) -> QueryResult:
    """Dispatch on ``config.kind``; ``seed`` overrides ``config.seed`` for stochastic kinds."""
    k = config.batch_size
    seed = config.seed if seed is None else seed
    kind = config.kind
    if kind == "zhang":
        return select_zhang(params, pool, k)
    if kind == "settles":
        return select_settles(params, pool, k, config.delta, ip_pool=ip_pool)
    if kind == "hoi":
        return select_hoi(
            params, pool, k, config.delta, ip_pool=ip_pool,
            labeled_X=labeled_X if config.seed_with_labeled else None,
            path=config.hoi_path, lazy=config.lazy,
        )
    if kind == "chaudhuri":
        return select_chaudhuri(
            params, pool, k, config.mixing_exponent, config.delta, seed=seed, ip_pool=ip_pool,
            tol=config.fw_tol, max_iter=config.fw_max_iter,
        )
    if kind == "fukumizu":
        return select_fukumizu(params, k, config.proposal, seed=seed)
    if kind == "entropy":
        return select_entropy(params, pool, k)
    return select_random(pool, k, seed=seed)
