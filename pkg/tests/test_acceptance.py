"""Acceptance criteria 1-13, one pass/fail line each.

Run under pytest (lines appear in the terminal summary) or directly with
``python3 tests/test_acceptance.py``.
"""
import functools
import json
import math
import sys
import tempfile
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import central_diff, random_params, record_acceptance  # noqa: E402
from firal.checks import nemhauser_certificate, submodularity_certificate, trace_certificate  # noqa: E402
from firal.fisher import conditional_fisher_bank, fir_trace, fisher_mc, g_kernel, trace_bound_check, v_vector  # noqa: E402
from firal.harness import BENCH_PLAN, load_config, run_active_learning, run_bench_plan, write_record  # noqa: E402
from firal.model import (  # noqa: E402
    LabeledSet,
    ModelParams,
    fit_mle,
    hessian,
    log_likelihood,
    predict_batch,
    predict_proba,
    score,
)
from firal.simplex import fw_gap, fw_gradient, fw_objective, solve_weights  # noqa: E402
from firal.strategies import expected_information, mixing_weight  # noqa: E402
from firal.submodular import SurrogateObjective  # noqa: E402
from firal.theory import (  # noqa: E402
    _run_case1,
    four_point_spec,
    replacement_factor,
    validate_fir_bound,
    validate_llr_case2_chisq,
    validate_mle_normality,
)

ROOT = Path(__file__).resolve().parent.parent
CONFIG = ROOT / "configs" / "synthetic_hoi.json"


def criterion_1():
    t0 = time.perf_counter()
    rep = validate_fir_bound(four_point_spec(reps=500), n=2000, reps=500)
    elapsed = time.perf_counter() - t0
    up, eq = rep.check("upper_bound"), rep.check("equality")
    ok = up.estimate <= up.target * 1.10 and abs(eq.estimate - eq.target) / eq.target < 0.20 and elapsed < 300
    return ok, (f"LHS {up.estimate:.4f} (se {up.std_error:.4f}) vs RHS {up.target:.4f}, "
                f"ratio {up.estimate / up.target:.3f}, {elapsed:.1f} s")


def criterion_2():
    rep = validate_mle_normality(four_point_spec(reps=1000, n_list=(5000,)))
    err = rep.check("cov_relative_frobenius_error").estimate
    return err < 0.15, f"relative Frobenius error {err:.4f} at n=5000, R=1000"


def criterion_3():
    rep = _run_case1(four_point_spec(reps=1000, n_list=(5000,)))
    c = rep.check("variance")
    rel = abs(c.estimate - c.target) / c.target
    return rel < 0.15, f"variance {c.estimate:.4f} vs target {c.target:.4f} (relative {rel:.3f})"


def _case2_pairs():
    pairs = [(np.eye(1), np.eye(1))]
    for seed in range(4):
        rng = np.random.default_rng([5, seed])
        d = int(rng.integers(2, 5))
        A = rng.standard_normal((d, d))
        B = rng.standard_normal((d, d))
        pairs.append((A @ A.T + 0.5 * np.eye(d), B + B.T + 3 * d * np.eye(d)))
    return pairs


def criterion_4():
    rels = []
    for i, (sigma, H) in enumerate(_case2_pairs()):
        c = validate_llr_case2_chisq(sigma, H, samples=10**6, seed=i).check("variance")
        rels.append(abs(c.estimate - c.target) / c.target)
    exact_half = validate_llr_case2_chisq(np.eye(1), np.eye(1), samples=10).check("variance").target == 0.5
    return max(rels) < 0.05 and exact_half, "relative errors " + ", ".join(f"{r:.4f}" for r in rels)


def criterion_5():
    res = submodularity_certificate()
    return res["passed"], (f"{res['monotone_violations']} monotone and {res['diminishing_violations']} "
                           f"diminishing-returns violations in {res['trials']} triples")


def criterion_6():
    res = nemhauser_certificate()
    return res["passed"], f"min ratio {res['min_ratio']:.4f} vs bound {res['bound']:.4f}, {res['failures']} failures"


def criterion_7():
    res = trace_certificate()
    return res["passed"], f"max relative excess {res['max_relative_excess']:.2e} over {res['pairs']} pairs"


def _three_point_instance():
    rng = np.random.default_rng(8)
    params = ModelParams(rng.standard_normal(2), 2, 1)
    X = rng.standard_normal((3, 1)) * 2
    return conditional_fisher_bank(params, X), fisher_mc(params, X, 0.0)


def _grid_oracle(bank, ip):
    best, arg = np.inf, None
    g = np.linspace(0.0, 1.0, 200)
    for a in g:
        for b in g[g <= 1.0 - a + 1e-15]:
            q = np.array([a, b, max(1.0 - a - b, 0.0)])
            q /= q.sum()
            val = fw_objective(bank, ip, q)
            if val < best:
                best, arg = val, q
    return best, arg


def criterion_8():
    bank, ip = _three_point_instance()
    res = solve_weights(bank, ip)
    best, arg = _grid_oracle(bank, ip)
    grid_gap = fw_gap(bank, ip, arg)
    ok = abs(res.objective - best) <= 1e-3 and res.gap <= 1e-4 and grid_gap < 1e-3
    return ok, f"objective {res.objective:.6f} vs grid {best:.6f}, gap {res.gap:.1e}, gap at grid optimum {grid_gap:.1e}"


def criterion_9():
    rng = np.random.default_rng(9)
    worst_score = 0.0
    for _ in range(100):
        p = random_params(rng)
        x = rng.standard_normal(2)
        y = int(rng.integers(1, 4))
        data = LabeledSet([x], [y])
        fd = central_diff(lambda t: log_likelihood(p.with_theta(t), data), p.theta, 1e-5)
        s = score(p, x, y)
        worst_score = max(worst_score, np.linalg.norm(s - fd) / np.linalg.norm(s))
    bank, ip = _three_point_instance()
    worst_grad = 0.0
    for _ in range(100):
        q = rng.dirichlet(np.ones(3))
        g = fw_gradient(bank, ip, q)
        d = bank.shape[1]

        def F(qv):
            return np.trace(np.linalg.solve(np.einsum("i,ide->de", qv, bank) + 0.01 * np.eye(d), ip.matrix))

        fd = central_diff(F, q, 1e-6)
        worst_grad = max(worst_grad, np.linalg.norm(g - fd) / np.linalg.norm(g))
    return worst_score < 1e-6 and worst_grad < 1e-5, f"score {worst_score:.1e}, dF/dq {worst_grad:.1e}"


def _naive_surrogate(params, pool, delta, q_size, members):
    total = 0.0
    for i, x in enumerate(pool):
        if i in members:
            continue
        for y in range(1, params.n_classes + 1):
            v = v_vector(params, x, y)
            total -= 1.0 / (delta / (v @ v) + sum(g_kernel(params, x, y, pool[j], q_size) for j in members))
    return total


def _exact_checks():
    """Closed-form examples: (name, computed, expected, tolerance)."""
    zero2 = ModelParams.zeros(2, 1)
    rng = np.random.default_rng(0)
    X7 = rng.standard_normal((7, 2))
    fit = fit_mle(LabeledSet([[0.0], [0.0]], [1, 2]), ModelParams([0.3, -0.2], 2, 1), grad_tol=1e-12)
    pool5 = np.array([[-1.0], [0.5], [1.0], [2.0], [-0.3]])
    yield "loglik uniform", log_likelihood(ModelParams.zeros(3, 2), LabeledSet(X7, rng.integers(1, 4, 7))), \
        -7 * math.log(3), 1e-10
    yield "loglik empty", log_likelihood(zero2, LabeledSet(np.zeros((0, 1)), [])), 0.0, 1e-10
    yield "loglik binary", log_likelihood(ModelParams([1.0, 0.0], 2, 1), LabeledSet([[1.0]], [1])), -0.313262, 1e-6
    yield "proba uniform", predict_proba(ModelParams.zeros(4, 2), [1.0, 2.0]), np.full(4, 0.25), 1e-10
    yield "proba saturated", predict_proba(ModelParams([50.0, 0.0], 2, 1), [1.0]), [1.0, 0.0], 1e-10
    yield "softmax", predict_proba(ModelParams([1.0, 0.0, 0.0, 0.0], 3, 1), [1.0]), \
        [0.576117, 0.211942, 0.211942], 1e-6
    yield "score binary", score(zero2, [1.0], 1), [0.5, 0.5], 1e-10
    yield "hessian binary", hessian(zero2, [1.0]), -0.25 * np.ones((2, 2)), 1e-10
    yield "fit symmetric", fit.params.theta, [0.0, 0.0], 1e-10
    yield "fisher binary", fisher_mc(zero2, [[1.0]], 0.0).matrix, 0.25 * np.ones((2, 2)), 1e-10
    A = random_params(rng).theta[:4].reshape(2, 2)
    A = A @ A.T + np.eye(2)
    yield "fir identity", fir_trace(A, A), 2.0, 1e-10
    yield "fir scaling", fir_trace(2 * A, A), 1.0, 1e-10
    yield "trace bound I", trace_bound_check(np.eye(2), np.eye(2)), (2.0, 4.0), 1e-10
    yield "trace bound diag", trace_bound_check(np.eye(2), np.diag([1.0, 3.0])), (4.0, 8.0), 1e-10
    # |v|^2 = p |s|^2 = 1/2 * (1/4 + 1/4); each of the two components carries 1/8
    yield "v norm", [v_vector(zero2, [1.0], y) @ v_vector(zero2, [1.0], y) for y in (1, 2)], [0.25, 0.25], 1e-10
    yield "g self", g_kernel(zero2, [1.0], 1, [1.0], 1), 2.0, 1e-10
    obj = SurrogateObjective(zero2, pool5, 0.01, q_size=1)
    yield "surrogate naive", obj([0]), _naive_surrogate(zero2, pool5, 0.01, 1, [0]), 1e-10
    yield "surrogate full pool", obj(range(5)), 0.0, 1e-10
    yield "zhang at zero", expected_information(zero2, pool5), 0.25 * (pool5[:, 0] ** 2 + 1), 1e-10
    yield "mixing k=64", mixing_weight(64), 0.5, 1e-10
    yield "mixing k=1", mixing_weight(1), 0.0, 1e-10
    chi2 = validate_llr_case2_chisq(np.eye(2), np.diag([1.0, 2.0]), samples=10)
    yield "chi2 target diag", chi2.check("variance").target, 2.5, 1e-10
    yield "replacement factor", replacement_factor(10), 11 / 9, 1e-10


def criterion_10():
    failed = []
    total = 0
    for name, got, want, tol in _exact_checks():
        total += 1
        if not np.allclose(np.asarray(got, float), np.asarray(want, float), rtol=0, atol=tol):
            failed.append(name)
    return not failed, f"{total - len(failed)}/{total} closed-form examples" + (f", failed: {failed}" if failed else "")


@functools.lru_cache(maxsize=1)
def _bench():
    return run_bench_plan(BENCH_PLAN, reps=3, seed=0)


def criterion_11():
    rep = _bench()
    exp = rep.pool_exponents["zhang@k=10"]
    ok = abs(exp - 1.0) <= 0.3 and all(rep.monotone.values()) and rep.elapsed < 600
    bad = [k for k, v in rep.monotone.items() if not v]
    return ok, (f"zhang exponent {exp:.3f}, non-monotone: {bad or 'none'}, {rep.elapsed:.0f} s")


def criterion_12():
    cfg = load_config(CONFIG)
    with tempfile.TemporaryDirectory() as tmp:
        for name in ("a", "b"):
            write_record(run_active_learning(cfg), Path(tmp) / name)
        same = all((Path(tmp) / "a" / f).read_bytes() == (Path(tmp) / "b" / f).read_bytes()
                   for f in ("record.json", "curve.csv"))
    return same, "record.json and curve.csv byte-identical across two runs"


def _labels_to_reach(rec, target):
    for entry in [rec.initial] + rec.iterations:
        if entry["accuracy"] >= target:
            return entry["n_labeled"]
    return math.inf


def learning_curve_table(seeds=range(10)):
    rows = []
    for seed in seeds:
        base = load_config(CONFIG)
        base.seed = seed
        base.data = {**base.data, "seed": seed}
        runs = {}
        for kind in ("hoi", "settles", "random"):
            cfg = replace(base, strategy=replace(base.strategy, kind=kind))
            runs[kind] = run_active_learning(cfg)
        ds = base.build_dataset()
        # 95% of the accuracy of the true model on the same held-out set
        target = 0.95 * float(np.mean(predict_batch(ds.theta0, ds.heldout.X) == ds.heldout.y))
        rows.append({"seed": seed, "target": target,
                     **{k: _labels_to_reach(r, target) for k, r in runs.items()}})
    return rows


def criterion_13():
    rows = learning_curve_table()
    wins = {k: sum(r[k] <= r["random"] for r in rows) for k in ("hoi", "settles")}
    log = "; ".join(f"seed {r['seed']}: hoi {r['hoi']}, settles {r['settles']}, random {r['random']}" for r in rows)
    ok = all(w >= 7 for w in wins.values())
    return ok, f"hoi {wins['hoi']}/10, settles {wins['settles']}/10 seeds at or below random ({log})"


CRITERIA = {i: globals()[f"criterion_{i}"] for i in range(1, 14)}
SOFT = {13}


def _line(i, ok, detail):
    tag = "PASS" if ok else "FAIL"
    if i in SOFT:
        tag += " (reported, not gated)"
    return f"criterion {i:>2}: {tag}: {detail}"


@pytest.mark.slow
@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number):
    ok, detail = CRITERIA[number]()
    line = _line(number, ok, detail)
    record_acceptance(line)
    print(line)
    if number not in SOFT:
        assert ok, line


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="greedy batch cost grows sub-linearly in k with running Fisher sums")
def test_hoi_superlinear_in_batch_size():
    rep = _bench()
    exps = {k: v for k, v in rep.k_exponents.items() if k.startswith("hoi@")}
    print(json.dumps(exps))
    assert all(e > 1.0 for e in exps.values())


if __name__ == "__main__":
    results = [CRITERIA[i]() for i in sorted(CRITERIA)]
    for i, (ok, detail) in zip(sorted(CRITERIA), results):
        print(_line(i, ok, detail))
    sys.exit(0 if all(ok for i, (ok, _) in zip(sorted(CRITERIA), results) if i not in SOFT) else 1)
