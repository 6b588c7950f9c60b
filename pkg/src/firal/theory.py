"""Monte-Carlo checks of the large-sample behaviour of the softmax MLE and the FIR.

Every simulation spec uses finitely supported covariate marginals, so the
Fisher matrices used as targets are exact sums. Labeled samples of size
``n`` are drawn as multinomial counts over the (support point, label)
cells, which is equivalent to drawing ``n`` i.i.d. pairs; each replicate
``r`` draws from its own stream ``default_rng([seed, n, r])``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fisher import fir_trace, fisher_mc
from .model import LabeledSet, ModelParams, fit_mle, log_proba_matrix, proba_matrix, score_matrix

__all__ = [
    "SimSpec",
    "Check",
    "ValidationReport",
    "FitBatch",
    "exact_fisher",
    "simulate_fits",
    "validate_mle_normality",
    "validate_llr_case1",
    "validate_llr_case2_chisq",
    "validate_fir_bound",
    "diagnose_replacement",
    "validate_training_llr",
    "replacement_factor",
    "four_point_spec",
    "zero_score_spec",
    "SHIPPED_SPECS",
    "VALIDATORS",
]


@dataclass(frozen=True)
class SimSpec:
    """Ground truth and sampling design for one family of simulations.

    ``support`` holds the covariate atoms; ``q`` is the training marginal
    and ``p`` the test marginal, both PMFs over ``support``.
    """

    theta0: ModelParams
    support: np.ndarray
    q: np.ndarray
    p: np.ndarray
    n_list: tuple = (200, 5000)
    reps: int = 1000
    seed: int = 0

    def __post_init__(self):
        S = np.array(self.support, dtype=float)
        if S.ndim == 1:
            S = S[:, None]
        if S.shape[1] != self.theta0.n_features:
            raise ValueError("support dimension does not match the model")
        for name in ("q", "p"):
            v = np.array(getattr(self, name), dtype=float)
            if v.shape != (S.shape[0],) or np.any(v < 0) or abs(v.sum() - 1.0) > 1e-12:
                raise ValueError(f"{name} must be a PMF over the {S.shape[0]} support points")
            object.__setattr__(self, name, v)
        n_list = tuple(int(n) for n in self.n_list)
        if not n_list or any(b <= a for a, b in zip(n_list, n_list[1:])) or n_list[0] < 1:
            raise ValueError("n_list must be strictly increasing positive sizes")
        if self.reps < 100:
            raise ValueError("reps must be >= 100")
        object.__setattr__(self, "support", S)
        object.__setattr__(self, "n_list", n_list)

    def with_(self, **changes) -> "SimSpec":
        fields = dict(theta0=self.theta0, support=self.support, q=self.q, p=self.p,
                      n_list=self.n_list, reps=self.reps, seed=self.seed)
        fields.update(changes)
        return SimSpec(**fields)

    def to_dict(self) -> dict:
        return {
            "theta0": self.theta0.theta.tolist(),
            "n_classes": self.theta0.n_classes,
            "n_features": self.theta0.n_features,
            "intercept": self.theta0.intercept,
            "support": self.support.tolist(),
            "q": self.q.tolist(),
            "p": self.p.tolist(),
            "n_list": list(self.n_list),
            "reps": self.reps,
            "seed": self.seed,
        }


@dataclass
class Check:
    """One compared quantity. ``passed`` is None for report-only diagnostics."""

    name: str
    estimate: float
    target: float
    tolerance: float | None
    passed: bool | None
    std_error: float | None = None
    note: str = ""

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class ValidationReport:
    name: str
    checks: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.passed is not None)

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "checks": [c.to_dict() for c in self.checks],
            "extras": self.extras,
        }


def _relative(estimate: float, target: float) -> float:
    return abs(estimate - target) / abs(target)


def _var_se(a: np.ndarray) -> float:
    """Standard error of the sample variance along axis 0."""
    c = a - a.mean(axis=0)
    m2 = np.mean(c ** 2, axis=0)
    m4 = np.mean(c ** 4, axis=0)
    return float(np.sqrt(np.maximum(m4 - m2 ** 2, 0.0) / len(a)))


def _skewness(a: np.ndarray) -> float:
    c = a - a.mean()
    return float(np.mean(c ** 3) / np.mean(c ** 2) ** 1.5)


def exact_fisher(params: ModelParams, support, pmf) -> np.ndarray:
    """Un-ridged Fisher information under a finite covariate PMF."""
    return fisher_mc(params, support, delta=0.0, weights=pmf, source="analytic").matrix


def _cells(spec: SimSpec):
    """All (support point, label) pairs and their sampling probabilities under ``q``."""
    c = spec.theta0.n_classes
    K = spec.support.shape[0]
    X = np.repeat(spec.support, c, axis=0)
    y = np.tile(np.arange(1, c + 1), K)
    probs = (spec.q[:, None] * proba_matrix(spec.theta0, spec.support)).ravel()
    return LabeledSet(X, y, c), probs / probs.sum()


@dataclass
class FitBatch:
    """MLEs of ``reps`` independent size-``n`` datasets."""

    n: int
    thetas: np.ndarray
    converged: np.ndarray
    train_llr: np.ndarray

    @property
    def failure_rate(self) -> float:
        return float(1.0 - self.converged.mean())

    @property
    def good(self) -> np.ndarray:
        return self.thetas[self.converged]


def simulate_fits(spec: SimSpec, n: int, reps: int | None = None, start: int = 0) -> FitBatch:
    """Fit the MLE on ``reps`` datasets of size ``n`` drawn from ``q(x) p(y|x, theta0)``.

    ``train_llr`` is ``l(theta_hat; L_n) - l(theta0; L_n)`` per replicate.
    """
    reps = spec.reps if reps is None else reps
    cells, probs = _cells(spec)
    base_lp = log_proba_matrix(spec.theta0, cells.X)[np.arange(len(cells)), cells.y - 1]
    thetas = np.empty((reps, spec.theta0.dim))
    ok = np.empty(reps, dtype=bool)
    llr = np.empty(reps)
    for r in range(reps):
        rng = np.random.default_rng([spec.seed, n, start + r])
        counts = rng.multinomial(n, probs).astype(float)
        res = fit_mle(cells, spec.theta0, weights=counts)
        thetas[r] = res.params.theta
        ok[r] = res.converged
        lp = log_proba_matrix(res.params, cells.X)[np.arange(len(cells)), cells.y - 1]
        llr[r] = float(counts @ (lp - base_lp))
    return FitBatch(n, thetas, ok, llr)


def _stability_check(batch: FitBatch) -> Check:
    rate = batch.failure_rate
    return Check(f"nonconverged_fraction_n{batch.n}", rate, 0.0, 0.01, rate <= 0.01,
                 note="non-converged replicates are dropped")


def _pair_llr(params_list, theta0: ModelParams, X, y) -> np.ndarray:
    """``l(theta_hat_r; x, y) - l(theta0; x, y)`` for every replicate and pair, shape ``(R, P)``."""
    base = log_proba_matrix(theta0, X)[np.arange(len(y)), y - 1]
    out = np.empty((len(params_list), len(y)))
    for r, th in enumerate(params_list):
        lp = log_proba_matrix(theta0.with_theta(th), X)[np.arange(len(y)), y - 1]
        out[r] = lp - base
    return out


def validate_mle_normality(spec: SimSpec, tol: float = 0.15) -> ValidationReport:
    """Empirical covariance of ``sqrt(n)(theta_hat - theta0)`` against ``I_q(theta0)^-1``."""
    target = np.linalg.inv(exact_fisher(spec.theta0, spec.support, spec.q))
    report = ValidationReport("mle_normality", extras={"target": target.tolist(), "per_n": {}})
    errors = {}
    for n in spec.n_list:
        batch = simulate_fits(spec, n)
        Z = np.sqrt(n) * (batch.good - spec.theta0.theta)
        cov = np.cov(Z, rowvar=False).reshape(spec.theta0.dim, spec.theta0.dim)
        err = float(np.linalg.norm(cov - target) / np.linalg.norm(target))
        errors[n] = err
        mean = Z.mean(axis=0)
        se = float(np.sqrt(np.trace(cov) / len(Z)))
        report.extras["per_n"][str(n)] = {
            "relative_frobenius_error": err,
            "covariance": cov.tolist(),
            "mean": mean.tolist(),
            "mean_std_error": se,
        }
        report.checks.append(_stability_check(batch))
    n_max = spec.n_list[-1]
    last = report.extras["per_n"][str(n_max)]
    report.checks.append(Check("cov_relative_frobenius_error", errors[n_max], 0.0, tol, errors[n_max] < tol))
    mean_norm = float(np.linalg.norm(last["mean"]))
    report.checks.append(
        Check("mean_norm", mean_norm, 0.0, 3.0 * last["mean_std_error"],
              mean_norm < 3.0 * last["mean_std_error"], std_error=last["mean_std_error"])
    )
    if len(spec.n_list) > 1:
        first = errors[spec.n_list[0]]
        report.checks.append(
            Check("error_shrinks_with_n", errors[n_max], first, None, errors[n_max] < first,
                  note=f"error at n={spec.n_list[0]} vs n={n_max}")
        )
    return report


def _check_probe(spec: SimSpec, x, y):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    s = score_matrix(spec.theta0, x)[0, int(y) - 1]
    if np.allclose(s, 0.0, atol=1e-14):
        raise ValueError("probe pair has a zero score at theta0")
    return x, s


def validate_llr_case1(spec: SimSpec, x, y, tol: float = 0.15) -> ValidationReport:
    """Variance of ``sqrt(n) * LLR`` at one probe pair against ``s^T I_q^-1 s``."""
    x, s = _check_probe(spec, x, y)
    iq = exact_fisher(spec.theta0, spec.support, spec.q)
    target = float(s @ np.linalg.solve(iq, s))
    report = ValidationReport("llr_case1", extras={"target": target, "per_n": {}})
    yv = np.array([int(y)])
    stats = {}
    for n in spec.n_list:
        batch = simulate_fits(spec, n)
        T = np.sqrt(n) * _pair_llr(batch.good, spec.theta0, x, yv)[:, 0]
        stats[n] = T
        report.extras["per_n"][str(n)] = {
            "variance": float(T.var(ddof=1)),
            "variance_std_error": _var_se(T),
            "mean": float(T.mean()),
            "skewness": _skewness(T),
        }
        report.checks.append(_stability_check(batch))
    n_max = spec.n_list[-1]
    last = report.extras["per_n"][str(n_max)]
    report.checks.append(
        Check("variance", last["variance"], target, tol, _relative(last["variance"], target) < tol,
              std_error=last["variance_std_error"])
    )
    mean_se = float(np.sqrt(last["variance"] / len(stats[n_max])))
    report.checks.append(
        Check("mean", last["mean"], 0.0, 3.0 * mean_se, abs(last["mean"]) < 3.0 * mean_se, std_error=mean_se)
    )
    if len(spec.n_list) > 1:
        sk0 = abs(report.extras["per_n"][str(spec.n_list[0])]["skewness"])
        report.checks.append(
            Check("skewness_shrinks", abs(last["skewness"]), sk0, None, None,
                  note="normality trend; reported only")
        )
    return report


def _sqrtm_spd(S: np.ndarray) -> np.ndarray:
    w, U = np.linalg.eigh(S)
    if w[0] <= 0:
        raise ValueError("covariance must be positive definite")
    return (U * np.sqrt(w)) @ U.T


def validate_llr_case2_chisq(sigma, H, samples: int = 10**6, seed=0, tol: float = 0.05) -> ValidationReport:
    """Simulated ``Var[z^T H z / 2]`` for ``z ~ N(0, sigma)`` against ``||S H S||_F^2 / 2`` with ``S = sigma^(1/2)``."""
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    if sigma.shape != H.shape or sigma.shape[0] != sigma.shape[1]:
        raise ValueError("sigma and H must be square matrices of the same size")
    if not np.allclose(H, H.T):
        raise ValueError("H must be symmetric")
    if np.linalg.matrix_rank(H) < H.shape[0]:
        raise ValueError("H must be non-singular")
    root = _sqrtm_spd(sigma)
    M = root @ H @ root
    target_var = 0.5 * float(np.sum(M * M))
    target_mean = 0.5 * float(np.trace(M))
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((samples, sigma.shape[0])) @ root
    T = 0.5 * np.einsum("ni,ij,nj->n", Z, H, Z)
    var = float(T.var(ddof=1))
    mean = float(T.mean())
    mean_se = float(T.std(ddof=1) / np.sqrt(samples))
    report = ValidationReport("llr_case2_chisq", extras={"samples": samples})
    report.checks.append(Check("variance", var, target_var, tol, _relative(var, target_var) < tol,
                               std_error=_var_se(T)))
    report.checks.append(Check("mean", mean, target_mean, 5.0 * mean_se,
                               abs(mean - target_mean) < 5.0 * mean_se, std_error=mean_se))
    return report


def _zero_score_mass(spec: SimSpec, pmf: np.ndarray) -> float:
    S = score_matrix(spec.theta0, spec.support)
    P = proba_matrix(spec.theta0, spec.support)
    zero = np.all(np.abs(S) <= 1e-14, axis=2)
    return float(np.sum(pmf[:, None] * P * zero))


def validate_fir_bound(spec: SimSpec, n: int | None = None, reps: int | None = None,
                       tol: float = 0.10, equality_tol: float = 0.20) -> ValidationReport:
    """Expected (over the test joint) variance of ``sqrt(n) * LLR`` against the FIR.

    The outer expectation over test pairs is an exact sum over the finite
    support; the inner variance comes from ``reps`` independent fits.
    """
    n = spec.n_list[-1] if n is None else n
    c = spec.theta0.n_classes
    iq = exact_fisher(spec.theta0, spec.support, spec.q)
    ip = exact_fisher(spec.theta0, spec.support, spec.p)
    rhs = fir_trace(iq, ip)
    batch = simulate_fits(spec, n, reps)
    X = np.repeat(spec.support, c, axis=0)
    y = np.tile(np.arange(1, c + 1), spec.support.shape[0])
    T = np.sqrt(n) * _pair_llr(batch.good, spec.theta0, X, y)
    w = (spec.p[:, None] * proba_matrix(spec.theta0, spec.support)).ravel()
    lhs = float(w @ T.var(axis=0, ddof=1))
    # Standard error from the replicate-level decomposition of the weighted variance.
    C = T - T.mean(axis=0)
    per_rep = (C ** 2) @ w
    lhs_se = float(per_rep.std(ddof=1) / np.sqrt(len(per_rep)))
    p0 = _zero_score_mass(spec, spec.p)
    report = ValidationReport(
        "fir_bound",
        extras={"n": n, "reps": len(T), "zero_score_mass": p0, "rhs_without_zero_mass": (1.0 - p0) * rhs},
    )
    report.checks.append(_stability_check(batch))
    report.checks.append(Check("upper_bound", lhs, rhs, tol, lhs <= rhs * (1.0 + tol), std_error=lhs_se))
    if p0 == 0.0:
        report.checks.append(
            Check("equality", lhs, rhs, equality_tol, _relative(lhs, rhs) < equality_tol, std_error=lhs_se)
        )
    else:
        report.checks.append(
            Check("gap_ratio", lhs / rhs, 1.0 - p0, None, None, std_error=lhs_se / rhs,
                  note="LHS/RHS against the 1 - P(zero-score) ratio; reported only")
        )
    return report


def replacement_factor(beta: float) -> float:
    if beta < 10:
        raise ValueError("beta must be >= 10")
    return (beta + 1.0) / (beta - 1.0)


def diagnose_replacement(spec: SimSpec, n_primes=(50, 200, 1000), beta: float = 10.0,
                         reps: int | None = None, theta_hat=None) -> ValidationReport:
    """Frequency with which ``FIR(theta0) <= factor(beta) * FIR(theta_hat_n')`` over replicates.

    ``theta_hat`` (a parameter vector) replaces the fitted estimates when given.
    """
    factor = replacement_factor(beta)
    fir0 = fir_trace(exact_fisher(spec.theta0, spec.support, spec.q),
                     exact_fisher(spec.theta0, spec.support, spec.p))
    report = ValidationReport("replacement", extras={"factor": factor, "fir_theta0": fir0, "frequency": {}})
    for n in n_primes:
        if theta_hat is not None:
            thetas = np.atleast_2d(np.asarray(theta_hat, dtype=float))
        else:
            thetas = simulate_fits(spec, n, reps).good
        hits = 0
        for th in thetas:
            est = spec.theta0.with_theta(th)
            fir_hat = fir_trace(exact_fisher(est, spec.support, spec.q), exact_fisher(est, spec.support, spec.p))
            hits += fir0 <= factor * fir_hat
        freq = hits / len(thetas)
        report.extras["frequency"][str(n)] = freq
        report.checks.append(Check(f"frequency_n{n}", freq, 1.0, None, None, note="diagnostic"))
    return report


def validate_training_llr(spec: SimSpec, n: int | None = None, reps: int | None = None) -> ValidationReport:
    """Training-set LLR moments against the half chi-square with 1 and with ``d`` degrees of freedom."""
    n = spec.n_list[-1] if n is None else n
    batch = simulate_fits(spec, n, reps)
    L = batch.train_llr[batch.converged]
    d = spec.theta0.dim
    mean, var = float(L.mean()), float(L.var(ddof=1))
    mean_se = float(L.std(ddof=1) / np.sqrt(len(L)))
    var_se = _var_se(L)
    report = ValidationReport(
        "training_llr",
        extras={"n": n, "dim": d, "min": float(L.min()), "all_nonnegative": bool(L.min() >= -1e-9)},
    )
    report.checks.append(Check("mean_vs_half_chi2_1", mean, 0.5, None, None, std_error=mean_se))
    report.checks.append(Check("variance_vs_half_chi2_1", var, 0.5, None, None, std_error=var_se))
    report.checks.append(Check("mean_vs_half_chi2_d", mean, d / 2.0, None, None, std_error=mean_se))
    report.checks.append(Check("variance_vs_half_chi2_d", var, d / 2.0, None, None, std_error=var_se))
    return report


def four_point_spec(reps: int = 1000, seed: int = 0, n_list=(200, 5000)) -> SimSpec:
    """Binary model ``theta0 = (1, 0)`` on the atoms -2, -1, 1, 2; uniform ``q``, centre-heavy ``p``."""
    return SimSpec(
        theta0=ModelParams([1.0, 0.0], 2, 1),
        support=np.array([-2.0, -1.0, 1.0, 2.0]),
        q=np.full(4, 0.25),
        p=np.array([0.1, 0.4, 0.4, 0.1]),
        n_list=n_list,
        reps=reps,
        seed=seed,
    )


def zero_score_spec(reps: int = 1000, seed: int = 0, n_list=(2000,), zero_mass: float = 0.5) -> SimSpec:
    """One-parameter binary model without bias; the atom ``x = 0`` has a zero score for both labels."""
    rest = (1.0 - zero_mass) / 4.0
    return SimSpec(
        theta0=ModelParams([1.0], 2, 1, intercept=False),
        support=np.array([-2.0, -1.0, 0.0, 1.0, 2.0]),
        q=np.full(5, 0.2),
        p=np.array([rest, rest, zero_mass, rest, rest]),
        n_list=n_list,
        reps=reps,
        seed=seed,
    )


SHIPPED_SPECS = {"four_point": four_point_spec, "zero_score": zero_score_spec}


def _run_case2(spec: SimSpec) -> ValidationReport:
    d = spec.theta0.dim
    return validate_llr_case2_chisq(np.eye(d), np.eye(d), seed=spec.seed)


def _run_case1(spec: SimSpec) -> ValidationReport:
    # Probe with the largest score norm on the support.
    S = score_matrix(spec.theta0, spec.support)
    i, y = np.unravel_index(np.argmax(np.linalg.norm(S, axis=2)), S.shape[:2])
    return validate_llr_case1(spec, spec.support[i], y + 1)


VALIDATORS = {
    "mle_normality": validate_mle_normality,
    "llr_case1": _run_case1,
    "llr_case2": _run_case2,
    "fir_bound": validate_fir_bound,
    "replacement": diagnose_replacement,
    "training_llr": validate_training_llr,
}
