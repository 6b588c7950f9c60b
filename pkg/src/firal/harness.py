"""Active-learning loop, synthetic data, labeling oracle, IO and benchmarks."""
from __future__ import annotations

import csv
import json
import time
import timeit
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .fisher import fir_trace, fisher_mc
from .model import LabeledSet, ModelParams, fit_mle, predict_batch, proba_matrix
from .strategies import StrategyConfig, select

__all__ = [
    "SCHEMA",
    "MixtureComponent",
    "SyntheticSpec",
    "Oracle",
    "TableOracle",
    "Dataset",
    "ExperimentConfig",
    "ExperimentRecord",
    "gen_synthetic",
    "load_csv",
    "write_csv",
    "load_config",
    "run_active_learning",
    "write_record",
    "BenchRow",
    "BenchReport",
    "bench_strategies",
    "scaling_exponent",
    "BENCH_PLAN",
    "run_bench_plan",
]

SCHEMA = "v1"


def _child_seed(*key) -> int:
    return int(np.random.SeedSequence([int(k) for k in key]).generate_state(1)[0])


@dataclass(frozen=True)
class MixtureComponent:
    weight: float
    mean: tuple
    std: tuple


@dataclass(frozen=True)
class SyntheticSpec:
    """Gaussian-mixture covariates labeled by a softmax model ``theta0``.

    ``theta0=None`` draws the parameters from ``N(0, theta_scale^2)`` with
    the generator seed. The default marginal is a single standard normal.
    """

    n_classes: int = 2
    n_features: int = 2
    theta0: tuple | None = None
    theta_scale: float = 2.0
    components: tuple = ()
    pool_size: int = 500
    heldout_size: int = 1000
    seed: int = 0

    def __post_init__(self):
        comps = tuple(c if isinstance(c, MixtureComponent) else MixtureComponent(**c) for c in self.components)
        if not comps:
            comps = (MixtureComponent(1.0, (0.0,) * self.n_features, (1.0,) * self.n_features),)
        for c in comps:
            if len(c.mean) != self.n_features or len(c.std) != self.n_features:
                raise ConfigError("mixture component dimension does not match n_features")
            if c.weight <= 0:
                raise ConfigError("mixture weights must be positive")
            if any(s <= 0 for s in c.std):
                raise ConfigError("mixture component has a zero or negative standard deviation")
        object.__setattr__(self, "components", comps)
        if self.pool_size < 1 or self.heldout_size < 1:
            raise ConfigError("pool_size and heldout_size must be >= 1")

    def params(self) -> ModelParams:
        d = (self.n_classes - 1) * (self.n_features + 1)
        if self.theta0 is None:
            theta = self.theta_scale * np.random.default_rng([self.seed, 1]).standard_normal(d)
        else:
            theta = np.asarray(self.theta0, dtype=float)
        return ModelParams(theta, self.n_classes, self.n_features)

    def sample_x(self, size: int, rng: np.random.Generator) -> np.ndarray:
        w = np.array([c.weight for c in self.components])
        which = rng.choice(len(w), size=size, p=w / w.sum())
        mean = np.array([c.mean for c in self.components])[which]
        std = np.array([c.std for c in self.components])[which]
        return mean + std * rng.standard_normal((size, self.n_features))


class Oracle:
    """Draws labels from ``p(y | x, theta0)`` with its own seeded stream."""

    def __init__(self, theta0: ModelParams, seed=0):
        self.theta0 = theta0
        self.rng = np.random.default_rng(seed)

    @property
    def can_label_new_points(self) -> bool:
        return True

    def label(self, X, ids=None) -> np.ndarray:
        P = proba_matrix(self.theta0, X)
        u = self.rng.random(P.shape[0])
        cdf = np.cumsum(P, axis=1)
        cdf[:, -1] = 1.0
        return (cdf < u[:, None]).sum(axis=1) + 1


class TableOracle:
    """Reveals stored labels by pool index (for CSV datasets)."""

    def __init__(self, labels):
        self.labels = np.asarray(labels, dtype=int)

    @property
    def can_label_new_points(self) -> bool:
        return False

    def label(self, X, ids=None) -> np.ndarray:
        if ids is None:
            raise ConfigError("a stored-label oracle cannot label synthesized points")
        return self.labels[np.asarray(ids, dtype=int)]


@dataclass
class Dataset:
    """Unlabeled pool, its oracle and a disjoint labeled held-out set.

    ``pool_ids`` and ``heldout_ids`` are global row identifiers used for
    the hygiene assertion.
    """

    pool: np.ndarray
    oracle: object
    heldout: LabeledSet
    n_classes: int
    pool_ids: np.ndarray
    heldout_ids: np.ndarray
    theta0: ModelParams | None = None


def gen_synthetic(spec: SyntheticSpec) -> Dataset:
    theta0 = spec.params()
    rng = np.random.default_rng([spec.seed, 2])
    X = spec.sample_x(spec.pool_size + spec.heldout_size, rng)
    pool, held = X[: spec.pool_size], X[spec.pool_size :]
    held_y = Oracle(theta0, [spec.seed, 3]).label(held)
    return Dataset(
        pool=pool,
        oracle=Oracle(theta0, [spec.seed, 4]),
        heldout=LabeledSet(held, held_y, spec.n_classes),
        n_classes=spec.n_classes,
        pool_ids=np.arange(spec.pool_size),
        heldout_ids=np.arange(spec.pool_size, spec.pool_size + spec.heldout_size),
        theta0=theta0,
    )


def load_csv(path, n_classes: int | None = None):
    """Read ``f1..fm[,label]`` rows. Returns an ndarray pool, or a LabeledSet when labels exist."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        has_label = bool(header) and header[-1] == "label"
        feats = header[:-1] if has_label else header
        if not feats or feats != [f"f{i}" for i in range(1, len(feats) + 1)]:
            raise ValueError(f"{path}: header must be f1..fm with an optional trailing label column")
        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}")
            try:
                vals = [float(v) for v in row[: len(feats)]]
            except ValueError:
                raise ValueError(f"{path}: row {lineno} has a non-numeric feature") from None
            if not all(np.isfinite(vals)):
                raise ValueError(f"{path}: row {lineno} has a non-finite feature")
            rows.append(vals)
            if has_label:
                try:
                    lab = int(row[-1])
                except ValueError:
                    raise ValueError(f"{path}: row {lineno} has a non-integer label") from None
                if lab < 1 or (n_classes is not None and lab > n_classes):
                    hi = n_classes if n_classes is not None else "c"
                    raise ValueError(f"{path}: row {lineno} label {lab} outside 1..{hi}")
                labels.append(lab)
    X = np.array(rows, dtype=float).reshape(-1, len(feats))
    if has_label:
        return LabeledSet(X, np.array(labels, dtype=int), n_classes)
    return X


def write_csv(path, X, y=None):
    X = np.asarray(X, dtype=float)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"f{i}" for i in range(1, X.shape[1] + 1)] + (["label"] if y is not None else []))
        for i, row in enumerate(X):
            w.writerow([repr(float(v)) for v in row] + ([int(y[i])] if y is not None else []))


@dataclass
class ExperimentConfig:
    """One active-learning run. Serialized as JSON with ``"schema": "v1"``.

    ``data`` is either ``{"kind": "synthetic", ...SyntheticSpec fields}`` or
    ``{"kind": "csv", "pool": path, "heldout": path, "n_classes": c}`` where
    both CSV files carry labels (the pool labels act as the oracle).
    """

    data: dict
    strategy: StrategyConfig
    n_initial: int = 10
    iterations: int = 20
    ip_pool: str = "original"
    warm_start: bool = True
    grad_tol: float = 1e-8
    max_fit_iter: int = 100
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.strategy, dict):
            self.strategy = StrategyConfig.from_dict(self.strategy)
        if self.n_initial < 1:
            raise ConfigError("n_initial must be >= 1")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.ip_pool not in ("original", "remaining"):
            raise ConfigError("ip_pool must be 'original' or 'remaining'")
        kind = self.data.get("kind")
        if kind not in ("synthetic", "csv"):
            raise ConfigError("data.kind must be 'synthetic' or 'csv'")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        schema = d.pop("schema", None)
        if schema != SCHEMA:
            raise ConfigError(f"unsupported config schema {schema!r}; expected {SCHEMA!r}")
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        if "strategy" not in d or "data" not in d:
            raise ConfigError("config needs 'data' and 'strategy'")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["strategy"] = self.strategy.to_dict()
        return {"schema": SCHEMA, **d}

    def build_dataset(self, base_dir=None) -> Dataset:
        data = dict(self.data)
        kind = data.pop("kind")
        if kind == "synthetic":
            try:
                return gen_synthetic(SyntheticSpec(**data))
            except TypeError as exc:
                raise ConfigError(f"bad synthetic spec: {exc}") from None
        base = Path(base_dir) if base_dir is not None else Path(".")
        c = data.get("n_classes")
        if c is None:
            raise ConfigError("csv data needs n_classes")
        pool = load_csv(base / data["pool"], c)
        held = load_csv(base / data["heldout"], c)
        if not isinstance(pool, LabeledSet) or not isinstance(held, LabeledSet):
            raise ConfigError("csv pool and heldout files must carry a label column")
        n = len(pool)
        return Dataset(np.asarray(pool.X), TableOracle(pool.y), held, int(c),
                       np.arange(n), np.arange(n, n + len(held)))


def load_config(path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return ExperimentConfig.from_dict(raw)


@dataclass
class ExperimentRecord:
    config: dict
    initial: dict
    iterations: list = field(default_factory=list)
    times: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"schema": SCHEMA, "config": self.config, "initial": self.initial, "iterations": self.iterations}

    def curve(self) -> list:
        rows = [(0, self.initial["n_labeled"], self.initial["fir"], self.initial["accuracy"])]
        for it in self.iterations:
            rows.append((it["iteration"], it["n_labeled"], it["fir"], it["accuracy"]))
        return rows


def _accuracy(params: ModelParams, held: LabeledSet) -> float:
    return float(np.mean(predict_batch(params, held.X) == held.y))


def run_active_learning(config: ExperimentConfig, dataset: Dataset | None = None, base_dir=None) -> ExperimentRecord:
    """Initial fit, then ``iterations`` rounds of select, label, append and re-fit."""
    ds = dataset if dataset is not None else config.build_dataset(base_dir)
    strat = config.strategy
    n_pool = len(ds.pool)
    need = config.n_initial + config.iterations * strat.batch_size
    if strat.kind != "fukumizu" and need > n_pool:
        raise ConfigError(f"pool of {n_pool} cannot supply {need} labels")
    if strat.kind == "fukumizu" and not ds.oracle.can_label_new_points:
        raise ConfigError("the synthetic-query strategy needs an oracle that labels new points")
    if len(np.intersect1d(ds.pool_ids, ds.heldout_ids)):
        raise AssertionError("held-out rows overlap the pool")
    if ds.heldout.X.shape[1] != ds.pool.shape[1]:
        raise ConfigError("held-out and pool feature counts differ")

    c, m = ds.n_classes, ds.pool.shape[1]
    delta = strat.delta
    rng = np.random.default_rng([config.seed, 0])
    available = np.ones(n_pool, dtype=bool)
    init_idx = np.sort(rng.choice(n_pool, size=config.n_initial, replace=False))
    available[init_idx] = False
    labeled = LabeledSet(ds.pool[init_idx], ds.oracle.label(ds.pool[init_idx], init_idx), c)
    zero = ModelParams.zeros(c, m)

    def refit(start: ModelParams) -> ModelParams:
        res = fit_mle(labeled, start, grad_tol=config.grad_tol, max_iter=config.max_fit_iter)
        return res.params

    def fir(params: ModelParams, ip_rows: np.ndarray) -> float:
        # The held-out rows never enter the pool Fisher estimate.
        assert not len(np.intersect1d(ds.pool_ids[ip_rows], ds.heldout_ids))
        iq = fisher_mc(params, labeled.X, delta, source="query")
        ip = fisher_mc(params, ds.pool[ip_rows], delta)
        return fir_trace(iq, ip)

    def ip_rows() -> np.ndarray:
        return np.arange(n_pool) if config.ip_pool == "original" else np.flatnonzero(available)

    def fir_true() -> float | None:
        return None if ds.theta0 is None else fir(ds.theta0, ip_rows())

    params = refit(zero)
    record = ExperimentRecord(
        config=config.to_dict(),
        initial={
            "queries": init_idx.tolist(),
            "labels": labeled.y.tolist(),
            "theta": params.theta.tolist(),
            "fir": fir(params, ip_rows()),
            "fir_true": fir_true(),
            "accuracy": _accuracy(params, ds.heldout),
            "n_labeled": len(labeled),
        },
    )
    for it in range(1, config.iterations + 1):
        t0 = time.perf_counter()
        cand = np.flatnonzero(available)
        rows = ip_rows()
        result = select(strat, params, ds.pool[cand], ip_pool=ds.pool[rows], labeled_X=labeled.X,
                        seed=_child_seed(config.seed, it))
        if result.samples is not None:
            Xq, ids = result.samples, None
            query_ids = None
        else:
            ids = cand[np.asarray(result.indices, dtype=int)]
            Xq = ds.pool[ids]
            query_ids = ids.tolist()
            available[ids] = False
        yq = ds.oracle.label(Xq, ids)
        labeled = labeled.extend(Xq, yq)
        params = refit(params if config.warm_start else zero)
        entry = {
            "iteration": it,
            "queries": query_ids,
            "samples": Xq.tolist() if query_ids is None else None,
            "labels": np.asarray(yq).tolist(),
            "objective": result.objective,
            "theta": params.theta.tolist(),
            "fir": fir(params, ip_rows()),
            "fir_true": fir_true(),
            "accuracy": _accuracy(params, ds.heldout),
            "n_labeled": len(labeled),
        }
        record.iterations.append(entry)
        record.times.append(time.perf_counter() - t0)
    return record


def write_record(record: ExperimentRecord, out_dir) -> dict:
    """Write ``record.json`` and ``curve.csv`` (deterministic) plus ``timings.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"record": out / "record.json", "curve": out / "curve.csv", "timings": out / "timings.json"}
    paths["record"].write_text(json.dumps(record.to_dict(), indent=1) + "\n", encoding="utf-8")
    with paths["curve"].open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "n_labeled", "fir", "accuracy"])
        for row in record.curve():
            w.writerow([row[0], row[1], repr(row[2]), repr(row[3])])
    paths["timings"].write_text(json.dumps({"seconds_per_iteration": record.times}) + "\n", encoding="utf-8")
    return paths


@dataclass
class BenchRow:
    strategy: str
    pool_size: int
    k: int
    median: float
    times: list


@dataclass
class BenchReport:
    rows: list
    pool_exponents: dict
    k_exponents: dict
    monotone: dict
    elapsed: float

    def to_dict(self) -> dict:
        return {
            "rows": [asdict(r) for r in self.rows],
            "pool_exponents": self.pool_exponents,
            "k_exponents": self.k_exponents,
            "monotone": self.monotone,
            "elapsed": self.elapsed,
        }

    def table(self) -> str:
        lines = [f"{'strategy':<16}{'pool':>8}{'k':>6}{'median_s':>14}"]
        for r in self.rows:
            lines.append(f"{r.strategy:<16}{r.pool_size:>8}{r.k:>6}{r.median:>14.6f}")
        lines.append("")
        for key, e in self.pool_exponents.items():
            lines.append(f"pool exponent {key}: {e:.3f}")
        for key, e in self.k_exponents.items():
            lines.append(f"k exponent {key}: {e:.3f}")
        return "\n".join(lines)


def scaling_exponent(sizes, times) -> float:
    """Least-squares slope of ``log time`` against ``log size``."""
    return float(np.polyfit(np.log(np.asarray(sizes, float)), np.log(np.asarray(times, float)), 1)[0])


# "hoi_surrogate" times the greedy surrogate path of the batch greedy strategy.
BENCH_KINDS = ("entropy", "zhang", "settles", "hoi", "hoi_surrogate", "chaudhuri")


def _bench_call(kind: str, params: ModelParams, X: np.ndarray, k: int, seed: int):
    if kind == "hoi_surrogate":
        cfg = StrategyConfig("hoi", batch_size=k, hoi_path="surrogate", lazy=False)
    else:
        cfg = StrategyConfig(kind, batch_size=k, fw_tol=1e-4)
    return lambda: select(cfg, params, X, seed=seed)


def bench_strategies(strategies, pool_sizes, ks, reps: int = 3, n_classes: int = 3, n_features: int = 2,
                     seed: int = 0, min_time: float = 0.05) -> BenchReport:
    """Median wall time of each strategy over a grid of pool sizes and batch sizes.

    Each cell is timed ``reps`` times; a timing is the mean over enough
    calls to last at least ``min_time`` seconds.
    """
    start = time.perf_counter()
    spec = SyntheticSpec(n_classes=n_classes, n_features=n_features, pool_size=max(pool_sizes),
                         heldout_size=1, theta_scale=0.5, seed=seed)
    params = spec.params()
    X_all = spec.sample_x(max(pool_sizes), np.random.default_rng([seed, 5]))
    rows = []
    for kind in strategies:
        if kind not in BENCH_KINDS:
            raise ConfigError(f"cannot benchmark {kind!r}; choose from {', '.join(BENCH_KINDS)}")
        for n in pool_sizes:
            for k in ks:
                if k > n:
                    continue
                fn = _bench_call(kind, params, X_all[:n], k, seed)
                fn()
                timer = timeit.Timer(fn)
                number = 1
                while True:
                    t = timer.timeit(number)
                    if t >= min_time or number >= 1 << 20:
                        break
                    number *= 2
                times = [timer.timeit(number) / number for _ in range(reps)]
                rows.append(BenchRow(kind, n, k, float(np.median(times)), times))
    pool_exp, k_exp, monotone = {}, {}, {}
    for kind in strategies:
        sel = [r for r in rows if r.strategy == kind]
        mono = True
        for k in sorted({r.k for r in sel}):
            cells = sorted((r.pool_size, r.median) for r in sel if r.k == k)
            if len(cells) > 1:
                pool_exp[f"{kind}@k={k}"] = scaling_exponent(*zip(*cells))
                mono &= all(b[1] > a[1] for a, b in zip(cells, cells[1:]))
        for n in sorted({r.pool_size for r in sel}):
            cells = sorted((r.k, r.median) for r in sel if r.pool_size == n)
            if len(cells) > 1:
                k_exp[f"{kind}@pool={n}"] = scaling_exponent(*zip(*cells))
        monotone[kind] = bool(mono)
    return BenchReport(rows, pool_exp, k_exp, monotone, time.perf_counter() - start)


# Default benchmark plan: one group per model size, chosen so every cell
# fits in memory and the whole plan runs in a few minutes.
BENCH_PLAN = (
    {"strategies": ["zhang", "entropy"], "pool_sizes": [1000, 2000, 4000, 8000], "ks": [10],
     "n_classes": 4, "n_features": 20},
    {"strategies": ["settles", "hoi"], "pool_sizes": [500, 1000, 2000, 4000], "ks": [4, 16, 64],
     "n_classes": 3, "n_features": 2},
    {"strategies": ["hoi_surrogate"], "pool_sizes": [100, 200, 400, 800], "ks": [4, 16, 64],
     "n_classes": 3, "n_features": 2},
    {"strategies": ["chaudhuri"], "pool_sizes": [100, 200, 400, 800], "ks": [10],
     "n_classes": 3, "n_features": 2},
)


def run_bench_plan(plan=BENCH_PLAN, reps: int = 3, seed: int = 0) -> BenchReport:
    """Run every group of ``plan`` and merge the reports."""
    start = time.perf_counter()
    merged = BenchReport([], {}, {}, {}, 0.0)
    for group in plan:
        rep = bench_strategies(reps=reps, seed=seed, **group)
        merged.rows += rep.rows
        merged.pool_exponents.update(rep.pool_exponents)
        merged.k_exponents.update(rep.k_exponents)
        merged.monotone.update(rep.monotone)
    merged.elapsed = time.perf_counter() - start
    return merged
