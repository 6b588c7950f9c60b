"""Seeded certificate runs for the surrogate objective and the trace inequality."""
from __future__ import annotations

import numpy as np

from .fisher import trace_bound_check
from .model import ModelParams
from .submodular import SurrogateObjective, check_submodularity, nemhauser_check, nemhauser_factor

__all__ = ["random_instance", "random_spd", "submodularity_certificate", "nemhauser_certificate",
           "trace_certificate", "CERTIFICATES"]


def random_instance(seed, pool_size: int, n_classes: int = 3, n_features: int = 2,
                    theta_scale: float = 1.0, delta: float = 0.01, q_size: int = 1) -> SurrogateObjective:
    rng = np.random.default_rng(seed)
    d = (n_classes - 1) * (n_features + 1)
    params = ModelParams(theta_scale * rng.standard_normal(d), n_classes, n_features)
    pool = rng.standard_normal((pool_size, n_features))
    return SurrogateObjective(params, pool, delta, q_size=q_size)


def random_spd(rng: np.random.Generator, d: int) -> np.ndarray:
    A = rng.standard_normal((d, d))
    return A @ A.T + 1e-3 * np.eye(d)


def submodularity_certificate(seed=0, pool_size: int = 30, trials: int = 200, tol: float = 1e-9) -> dict:
    obj = random_instance([seed, 0], pool_size, q_size=3)
    report = check_submodularity(obj, trials=trials, seed=seed, tol=tol)
    return {"pool_size": pool_size, **report.to_dict(), "passed": report.violations == 0}


def nemhauser_certificate(seed=0, instances: int = 50, max_pool: int = 12, k: int = 3) -> dict:
    rows = []
    for i in range(instances):
        n = int(np.random.default_rng([seed, 1, i]).integers(k + 1, max_pool + 1))
        obj = random_instance([seed, 2, i], n, q_size=k)
        res = nemhauser_check(obj, k)
        rows.append({"pool_size": n, "ratio": res["ratio"], "holds": res["holds"]})
    return {
        "instances": instances,
        "k": k,
        "bound": nemhauser_factor(k),
        "min_ratio": min(r["ratio"] for r in rows),
        "failures": sum(not r["holds"] for r in rows),
        "passed": all(r["holds"] for r in rows),
    }


def trace_certificate(seed=0, pairs: int = 500, max_dim: int = 6, rel_tol: float = 1e-9) -> dict:
    rng = np.random.default_rng(seed)
    worst = -np.inf
    failures = 0
    for _ in range(pairs):
        d = int(rng.integers(1, max_dim + 1))
        lhs, rhs = trace_bound_check(random_spd(rng, d), random_spd(rng, d))
        excess = (lhs - rhs) / abs(rhs)
        worst = max(worst, excess)
        failures += excess > rel_tol
    return {"pairs": pairs, "max_relative_excess": float(worst), "failures": int(failures), "passed": failures == 0}


CERTIFICATES = {
    "submodularity": submodularity_certificate,
    "nemhauser": nemhauser_certificate,
    "trace": trace_certificate,
}
