"""Metrics, gap diagnostics, grid search and the seeded experiment runner.

Conventions that are ours rather than inherited (documented here and in the
README): SNR is var(predictions)/MSE, and the Monte-Carlo gap estimate
subtracts the within-point sampling variance over m so that squaring the
inner means does not bias the estimate upward.
"""

from __future__ import annotations

import itertools
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .collider import MeanCenteringSpec, general_fit, hpkrr_fit, pkrr_fit, project_regressor
from .config import ExperimentConfig, config_to_dict
from .datagen import (
    GeneralScales,
    LatentOracle,
    SimDataset,
    fixture_indicator_collider,
    make_sigma,
    simulate,
    simulate_general,
)
from .kernels import ColliderKernel, GaussianKernel, median_sqdist
from .numerics import FactorizationError, RngStream, cholesky_psd, solve_regularized
from .regressors import ForestParams, ForestSpec, KrrSpec, OlsSpec


# ---------------------------------------------------------------------------
# Metrics


@dataclass(frozen=True)
class Metrics:
    mse: float
    snr: float
    correlation: float


def compute_metrics(predictions, targets) -> Metrics:
    """MSE, SNR = var(predictions)/MSE, and Pearson correlation.

    A perfect fit yields an infinite SNR sentinel; constant predictions get
    correlation 0.0 (no linear association); constant targets are an error.
    """
    predictions = np.asarray(predictions, dtype=float).ravel()
    targets = np.asarray(targets, dtype=float).ravel()
    if predictions.shape != targets.shape:
        raise ValueError("prediction and target lengths disagree")
    if predictions.size < 2:
        raise ValueError("need at least two points")
    t_var = float(targets.var())
    if t_var == 0.0:
        raise ValueError("targets have zero variance; correlation undefined")
    mse = float(np.mean((predictions - targets) ** 2))
    p_var = float(predictions.var())
    snr = math.inf if mse == 0.0 else p_var / mse
    corr = 0.0 if p_var == 0.0 else float(np.corrcoef(predictions, targets)[0, 1])
    return Metrics(mse=mse, snr=snr, correlation=corr)


# ---------------------------------------------------------------------------
# Monte-Carlo generalisation-gap estimates


@dataclass(frozen=True)
class DeltaEstimate:
    delta_hat: float
    standard_error: float
    m: int
    n_test: int


def _gap_contributions(h, oracle: LatentOracle, offsets, m: int, n_test: int, rng: RngStream) -> np.ndarray:
    """Per-row (mean^2 - var/m) contributions with batched h evaluation."""
    if n_test < 1 or m < 1:
        raise ValueError("need at least one outer point and one inner draw")
    if oracle.n_rows < n_test:
        raise ValueError(f"split {oracle.split_name!r} has {oracle.n_rows} rows < n_test={n_test}")
    contribs = np.empty(n_test)
    chunk = max(1, 50_000 // m)
    for start in range(0, n_test, chunk):
        rows = np.arange(start, min(start + chunk, n_test))
        pts = oracle.draws_batch(rows, m, rng)
        values = np.asarray(h(pts), dtype=float).reshape(rows.size, m)
        means = values.mean(axis=1)
        var = values.var(axis=1, ddof=1) if m > 1 else np.zeros(rows.size)
        centered = means - (offsets[rows] if offsets is not None else 0.0)
        contribs[rows] = centered**2 - var / m
    return contribs


def delta_mc(h, dataset: SimDataset, m: int, n_test: int, rng: RngStream, split: str = "oracle_test") -> DeltaEstimate:
    """Estimate the gap closed by the exact projection of h.

    Averages squared oracle conditional expectations of h over the split's
    first ``n_test`` rows, m inner draws each, with the within-point variance
    bias correction.  The standard error comes from the outer-point spread.
    """
    oracle = LatentOracle(dataset, split)
    contribs = _gap_contributions(h, oracle, None, m, n_test, rng)
    se = float(contribs.std(ddof=1) / math.sqrt(n_test)) if n_test > 1 else 0.0
    return DeltaEstimate(delta_hat=float(contribs.mean()), standard_error=se, m=m, n_test=n_test)


def delta_mc_general(
    h,
    f0_hat,
    dataset: SimDataset,
    m: int,
    n_test: int,
    rng: RngStream,
    split: str = "oracle_test",
) -> DeltaEstimate:
    """General-boundary gap estimate: E[(E[h | x2, x3] - f0_hat(x3))^2]."""
    oracle = LatentOracle(dataset, split)
    x3 = dataset.split(split).x3
    if x3 is None:
        raise ValueError("general gap estimate needs an x3 block")
    offsets = np.asarray(f0_hat(x3[:n_test]), dtype=float)
    contribs = _gap_contributions(h, oracle, offsets, m, n_test, rng)
    se = float(contribs.std(ddof=1) / math.sqrt(n_test)) if n_test > 1 else 0.0
    return DeltaEstimate(delta_hat=float(contribs.mean()), standard_error=se, m=m, n_test=n_test)


def gap_lower_bound(
    dataset: SimDataset,
    kernel: ColliderKernel,
    lam: float,
    eta: float,
    m: int,
    rng: RngStream,
    n_outer: int = 200,
    split: str = "oracle_test",
) -> float:
    """Diagnostic lower bound on the expected gap of the ridge fit.

    Computes eta * Q / (sqrt(n) M + lam/sqrt(n))^2 with M = sup k(x, x), n the
    labeled sample size, and Q a nested Monte-Carlo estimate of the mean
    squared conditional expectation of the kernel section,
    E_{X,X'}[ E[k(X, .) | conditioning block of X']^2 ].
    """
    if eta < 0:
        raise ValueError("the conditional-variance floor cannot be negative")
    if eta == 0.0:
        return 0.0
    oracle = LatentOracle(dataset, split)
    n_rows = oracle.n_rows
    if n_rows < 2:
        raise ValueError("need at least two oracle rows")
    n = dataset.split("train").n
    arg_rows = rng.integers(0, n_rows, size=n_outer)
    cond_rows = rng.integers(0, n_rows, size=n_outer)
    points = dataset.split(split).x
    contribs = np.empty(n_outer)
    for i in range(n_outer):
        draws = oracle.draws(int(cond_rows[i]), m, rng)
        vals = kernel.gram(points[arg_rows[i]][None, :], draws)[0]
        mean = vals.mean()
        var = vals.var(ddof=1) if m > 1 else 0.0
        contribs[i] = mean * mean - var / m
    q = float(contribs.mean())
    denom = (math.sqrt(n) * kernel.diag_value + lam / math.sqrt(n)) ** 2
    return eta * max(q, 0.0) / denom


# ---------------------------------------------------------------------------
# Wilcoxon signed-rank test


def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def wilcoxon_signed_rank(a, b) -> float:
    """Two-tailed Wilcoxon signed-rank p-value for paired samples.

    Zero differences are dropped; if none remain the sentinel 1.0 is returned
    (no evidence either way).  Up to n = 25 the null distribution is exact
    (enumeration over sign assignments via convolution); above that a normal
    approximation with tie and continuity corrections is used.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError("paired samples must have equal length")
    d = a - b
    d = d[d != 0]
    n = d.size
    if n == 0:
        return 1.0
    if n < 5:
        raise ValueError(f"need at least 5 nonzero differences, got {n}")
    ranks = _midranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    if n <= 25:
        # Doubled ranks are integers even with midranks; counts stay exact in
        # float64 because 2^25 < 2^53.
        doubled = np.rint(2.0 * ranks).astype(int)
        total = int(doubled.sum())
        counts = np.zeros(total + 1)
        counts[0] = 1.0
        for r in doubled:
            counts[r:] += counts[: counts.size - r].copy()
        w2 = int(round(2.0 * w_plus))
        denom = 2.0**n
        p_le = counts[: w2 + 1].sum() / denom
        p_ge = counts[w2:].sum() / denom
        return float(min(1.0, 2.0 * min(p_le, p_ge)))
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    tie_term = float(((tie_counts**3 - tie_counts) / 48.0).sum())
    sd = math.sqrt(n * (n + 1) * (2 * n + 1) / 24.0 - tie_term)
    centered = w_plus - mean
    z = (centered - 0.5 * np.sign(centered)) / sd
    return float(min(1.0, math.erfc(abs(z) / math.sqrt(2.0))))


# ---------------------------------------------------------------------------
# Grid search


@dataclass(frozen=True)
class GridSpec:
    """Per-hyperparameter value lists plus an optional fold count.

    ``folds=None`` selects by MSE on a held-out validation split; otherwise
    contiguous k-fold cross-validation on the labeled data is used.
    """

    values: tuple[tuple[str, tuple], ...]
    folds: int | None = None

    @classmethod
    def of(cls, folds: int | None = None, **value_lists) -> "GridSpec":
        values = tuple((name, tuple(vals)) for name, vals in value_lists.items())
        for name, vals in values:
            if not vals:
                raise ValueError(f"empty grid for {name!r}")
        return cls(values=values, folds=folds)

    def candidates(self):
        names = [name for name, _ in self.values]
        for combo in itertools.product(*(vals for _, vals in self.values)):
            yield dict(zip(names, combo))


_PREFER_SMALL = frozenset({"max_depth"})
_TIEBREAK_FIRST = ("lam", "gamma")


def _tiebreak_key(params: dict) -> tuple:
    """Total order among equal-MSE candidates: prefer more regularization.

    Larger lam, then larger gamma, then larger remaining scales win; depth is
    the exception (smaller wins, None meaning unlimited loses to any number).
    """
    names = [k for k in _TIEBREAK_FIRST if k in params]
    names += sorted(k for k in params if k not in _TIEBREAK_FIRST)
    key = []
    for name in names:
        v = params[name]
        v = math.inf if v is None else float(v)
        key.append(v if name in _PREFER_SMALL else -v)
    return tuple(key)


@dataclass
class GridSearchResult:
    params: dict
    mse: float
    model: object
    n_failed: int = 0


def grid_search_cv(fit_candidate, grid: GridSpec, x, y, unlabeled_x, x_val=None, y_val=None) -> GridSearchResult:
    """Exhaustive search; selection by validation (or k-fold) MSE.

    ``fit_candidate(params, x, y, unlabeled_x)`` must return a fitted model
    with ``predict``.  Candidates that fail to fit are skipped and counted;
    if all fail the search raises.  The tie-break makes the selection
    invariant to grid ordering.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    best = None
    n_failed = 0
    for params in grid.candidates():
        try:
            if grid.folds is None:
                if x_val is None or y_val is None:
                    raise ValueError("validation split required when folds is None")
                model = fit_candidate(params, x, y, unlabeled_x)
                mse = float(np.mean((model.predict(x_val) - np.asarray(y_val).ravel()) ** 2))
            else:
                fold_ids = np.arange(x.shape[0]) % grid.folds
                fold_mses = []
                for f in range(grid.folds):
                    hold = fold_ids == f
                    m = fit_candidate(params, x[~hold], y[~hold], unlabeled_x)
                    fold_mses.append(float(np.mean((m.predict(x[hold]) - y[hold]) ** 2)))
                mse = float(np.mean(fold_mses))
                model = fit_candidate(params, x, y, unlabeled_x)
        except (FactorizationError, np.linalg.LinAlgError):
            n_failed += 1
            continue
        key = (mse,) + _tiebreak_key(params)
        if best is None or key < best[0]:
            best = (key, params, mse, model)
    if best is None:
        raise FactorizationError("every grid candidate failed to fit")
    _, params, mse, model = best
    return GridSearchResult(params=params, mse=mse, model=model, n_failed=n_failed)


# ---------------------------------------------------------------------------
# Experiment runner


@dataclass
class SeedResult:
    seed: int
    model: str
    mse: float | None = None
    snr: float | None = None
    correlation: float | None = None
    delta: DeltaEstimate | None = None
    wall_ms: float | None = None
    params: dict = field(default_factory=dict)
    error: str | None = None


class HarnessError(RuntimeError):
    """Every seed failed numerically."""


def _build_dataset(config: ExperimentConfig, seed: int) -> SimDataset:
    gen = config.generator
    rng = RngStream(seed).substream(0)
    if gen.kind == "simple":
        spec = make_sigma(gen.d1, gen.d2, rng.substream(0))
        return simulate(spec, gen.sigma_noise, gen.sizes(), rng.substream(1))
    if gen.kind == "general":
        scales = GeneralScales(noise_x1=gen.sigma_noise)
        return simulate_general(gen.d1, gen.d2, gen.d3, scales, rng, gen.sizes())
    if gen.kind == "indicator":
        s = gen.sizes()
        return fixture_indicator_collider(
            s.train, rng, semi=s.semi, validation=s.validation, test=s.test, oracle_test=s.oracle_test
        )
    raise ValueError(f"unknown generator kind {gen.kind!r}")


def _predictor(model):
    return lambda points: model.predict(points)


class _SeedRun:
    """One seed of the experiment: dataset, tuned models, result rows."""

    def __init__(self, config: ExperimentConfig, seed: int):
        self.config = config
        self.seed = seed
        self.results: list[SeedResult] = []
        self.models: dict[str, object] = {}
        self.params: dict[str, dict] = {}

    def fail(self, model_name: str, exc: Exception) -> None:
        self.results.append(
            SeedResult(seed=self.seed, model=model_name, error=f"{type(exc).__name__}: {exc}")
        )

    def run(self) -> list[SeedResult]:
        # The workload is thousands of small factorizations; BLAS threading
        # only adds wake-up latency here, and cross-seed parallelism already
        # uses the cores.  Limit pools for the duration of the seed.
        with threadpool_limits(limits=1):
            return self._run()

    def _run(self) -> list[SeedResult]:
        config, seed = self.config, self.seed
        try:
            ds = _build_dataset(config, seed)
        except Exception as exc:
            self.fail("<dataset>", exc)
            return self.results
        self.ds = ds

        gen = config.generator
        # Block widths come from the dataset itself (the indicator fixture is
        # always 1+1 regardless of the configured dimensions).
        self.d1 = ds.meta["d1"]
        self.d2 = ds.meta["d2"]
        self.d3 = ds.meta.get("d3", 0)
        self.cond_dim = self.d2 + self.d3
        train = ds.split("train")
        self.x, self.y = train.x, train.y
        semi = ds.split("semi")
        self.unlabeled = semi.x if semi.n else None
        self.x_val, self.y_val = ds.split("validation").x, ds.split("validation").y
        self.test = ds.split("test")
        self.model_rng = RngStream(seed).substream(1)
        self.oracle_rng = RngStream(seed).substream(2)

        mc = config.models
        self.theta1_grid = tuple(m * median_sqdist(self.x[:, : self.d1]) for m in mc.theta_multipliers)
        self.theta2_grid = tuple(m * median_sqdist(self.x[:, self.d1 :]) for m in mc.theta_multipliers)

        enabled = list(config.models.enabled)
        general_names = [n for n in enabled if n.startswith("general-")]
        needs_krr = bool({"krr", "p-krr", "hp-krr"} & set(enabled) or general_names)

        if needs_krr:
            self.evaluate("krr", self.tune_krr, record="krr" in enabled)
        if "p-krr" in enabled:
            self.evaluate("p-krr", self.tune_pkrr, requires=("krr",))
        if "hp-krr" in enabled:
            self.evaluate("hp-krr", self.tune_hpkrr)
        if {"rf", "p-rf"} & set(enabled):
            self.evaluate("rf", self.tune_rf, record="rf" in enabled)
        if "p-rf" in enabled:
            self.evaluate("p-rf", self.fit_prf, requires=("rf",))
        for name in general_names:
            if gen.kind != "general":
                self.fail(name, ValueError("general models need the general generator kind"))
                continue
            method = name.removeprefix("general-")
            self.evaluate(name, lambda m=method: self.tune_general(m), requires=("krr",))

        oc = config.oracle
        n_test = min(oc.n_test, ds.split("oracle_test").n)
        for delta_name, base in (("delta-krr", "krr"), ("delta-rf", "rf")):
            if base not in enabled or base not in self.models:
                continue
            try:
                delta = self.delta_of(base, oc.m, n_test)
            except Exception as exc:
                self.fail(delta_name, exc)
                continue
            self.results.append(SeedResult(seed=seed, model=delta_name, delta=delta))
        return self.results

    def evaluate(self, name: str, tuner, record: bool = True, requires: tuple = ()) -> None:
        missing = [r for r in requires if r not in self.models]
        if missing:
            self.fail(name, RuntimeError(f"prerequisite model {missing[0]!r} failed to fit"))
            return
        t0 = time.perf_counter()
        try:
            model, params = tuner()
        except Exception as exc:
            self.fail(name, exc)
            return
        self.models[name] = model
        self.params[name] = params
        if not record:
            return
        wall = 1000.0 * (time.perf_counter() - t0)
        metrics = compute_metrics(model.predict(self.test.x), self.test.y)
        self.results.append(
            SeedResult(
                seed=self.seed,
                model=name,
                mse=metrics.mse,
                snr=metrics.snr,
                correlation=metrics.correlation,
                wall_ms=wall,
                params=params,
            )
        )

    # -- model tuners ------------------------------------------------------

    def make_kernel(self, theta1: float, theta2: float) -> ColliderKernel:
        return ColliderKernel(GaussianKernel(theta1), GaussianKernel(theta2), self.d1, self.cond_dim)

    def tune_krr(self):
        mc = self.config.models

        def candidate(params, cx, cy, _unlabeled):
            spec = MeanCenteringSpec(KrrSpec(self.make_kernel(params["theta1"], params["theta2"]), params["lam"]))
            return spec.fit(cx, cy)

        grid = GridSpec.of(theta1=self.theta1_grid, theta2=self.theta2_grid, lam=mc.lambda_grid)
        res = grid_search_cv(candidate, grid, self.x, self.y, None, self.x_val, self.y_val)
        return res.model, res.params

    def tune_pkrr(self):
        mc = self.config.models
        base = self.params["krr"]
        kernel = self.make_kernel(base["theta1"], base["theta2"])

        def candidate(params, cx, cy, cu):
            return pkrr_fit(cx, cy, cu, kernel, base["lam"], params["gamma"])

        res = grid_search_cv(candidate, GridSpec.of(gamma=mc.gamma_grid), self.x, self.y, self.unlabeled, self.x_val, self.y_val)
        return res.model, {**base, **res.params}

    def tune_hpkrr(self):
        mc = self.config.models
        return _tune_hpkrr_cached(
            self.x, self.y, self.unlabeled, self.x_val, self.y_val,
            self.make_kernel, self.theta1_grid, self.theta2_grid, mc.lambda_grid, mc.gamma_grid,
        )

    def tune_rf(self):
        mc = self.config.models

        def candidate(params, cx, cy, _unlabeled):
            spec = MeanCenteringSpec(ForestSpec(ForestParams(**params), self.model_rng.substream(0)))
            return spec.fit(cx, cy)

        grid = GridSpec.of(
            n_estimators=mc.rf_n_estimators,
            max_depth=mc.rf_max_depth,
            min_samples_split=mc.rf_min_samples_split,
            min_samples_leaf=mc.rf_min_samples_leaf,
        )
        res = grid_search_cv(candidate, grid, self.x, self.y, None, self.x_val, self.y_val)
        return res.model, res.params

    def fit_prf(self):
        params = self.params["rf"]
        spec = ForestSpec(ForestParams(**params), self.model_rng.substream(0))
        model = project_regressor(spec, OlsSpec(), self.x, self.y, self.unlabeled, self.d1)
        return model, dict(params)

    def tune_general(self, method: str):
        mc = self.config.models
        base = self.params["krr"]
        kernel = self.make_kernel(base["theta1"], base["theta2"])
        f0_spec = self.tuned_f0_spec()

        def candidate(params, cx, cy, cu):
            return general_fit(
                cx, cy, self.d1, self.d2, self.d3, cu, kernel, base["lam"], params["gamma"],
                method=method, f0_spec=f0_spec,
            )

        res = grid_search_cv(candidate, GridSpec.of(gamma=mc.gamma_grid), self.x, self.y, self.unlabeled, self.x_val, self.y_val)
        return res.model, {**base, **res.params}

    def tuned_f0_spec(self) -> KrrSpec:
        if not hasattr(self, "_f0_spec"):
            mc = self.config.models
            x3 = self.x[:, self.d1 + self.d2 :]
            x3_val = self.x_val[:, self.d1 + self.d2 :]

            def candidate(params, cx, cy, _unlabeled):
                return MeanCenteringSpec(KrrSpec(GaussianKernel(params["theta3"]), params["lam"])).fit(cx, cy)

            grid = GridSpec.of(
                theta3=tuple(m * median_sqdist(x3) for m in mc.theta_multipliers),
                lam=mc.lambda_grid,
            )
            res = grid_search_cv(candidate, grid, x3, self.y, None, x3_val, self.y_val)
            self._f0_spec = KrrSpec(GaussianKernel(res.params["theta3"]), res.params["lam"])
        return self._f0_spec

    def delta_of(self, base: str, m: int, n_test: int) -> DeltaEstimate:
        h = _predictor(self.models[base])
        rng = self.oracle_rng.substream(0 if base == "krr" else 1)
        if self.config.generator.kind == "general":
            f0 = MeanCenteringSpec(self.tuned_f0_spec()).fit(self.x[:, self.d1 + self.d2 :], self.y)
            return delta_mc_general(h, _predictor(f0), self.ds, m, n_test, rng)
        return delta_mc(h, self.ds, m, n_test, rng)


def _tune_hpkrr_cached(x, y, unlabeled, x_val, y_val, make_kernel, theta1s, theta2s, lams, gammas):
    """Joint (theta1, theta2, gamma, lam) search with block-level caching.

    The projected Gram factorizes into theta1-only blocks (offset first
    factor), (theta2, gamma)-only blocks (embedding weights), and a cheap
    per-lam solve, so the loops nest to reuse each block.  Selection
    semantics match grid_search_cv's tie-break; the winner is refit through
    hpkrr_fit so the returned model follows the ordinary path.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    y_val = np.asarray(y_val, dtype=float).ravel()
    x_val = np.asarray(x_val, dtype=float)
    mean = float(y.mean())
    y_c = y - mean
    anchors = x if unlabeled is None else np.vstack([x, np.asarray(unlabeled, dtype=float)])
    probe = make_kernel(theta1s[0], theta2s[0])
    d1 = probe.d1
    x1, x2 = x[:, :d1], x[:, d1:]
    v1, v2 = x_val[:, :d1], x_val[:, d1:]
    anchors1, anchors2 = anchors[:, :d1], anchors[:, d1:]

    # theta1-only blocks: offset-kernel Grams of the children factor
    first_factor = {}
    for theta1 in theta1s:
        child = GaussianKernel(theta1)
        first_factor[theta1] = (
            child.gram(x1, x1) + 1.0,
            child.gram(anchors1, x1) + 1.0,
            child.gram(anchors1, v1) + 1.0,
            child.gram(x1, v1) + 1.0,
            child.gram(anchors1, anchors1) + 1.0,
        )

    best = None
    for theta2 in theta2s:
        ell = GaussianKernel(theta2)
        big_l = ell.gram(anchors2, anchors2)
        ell_tt = ell.gram(x2, x2)
        ell_tv = ell.gram(x2, v2)
        ell_anchor_t = ell.gram(anchors2, x2)
        ell_anchor_v = ell.gram(anchors2, v2)
        eye = np.eye(big_l.shape[0])
        for gamma in gammas:
            try:
                chol = cholesky_psd(big_l + gamma * eye)
            except FactorizationError:
                continue
            w_t = chol.solve(ell_anchor_t)
            w_v = chol.solve(ell_anchor_v)
            for theta1 in theta1s:
                r_tt, r_at, r_av, r_tv, r_aa = first_factor[theta1]
                core_tt = r_tt - w_t.T @ r_at - r_at.T @ w_t + w_t.T @ r_aa @ w_t
                big_kp = ell_tt * core_tt
                big_kp = 0.5 * (big_kp + big_kp.T)
                core_tv = r_tv - w_t.T @ r_av - r_at.T @ w_v + w_t.T @ r_aa @ w_v
                k_val = ell_tv * core_tv
                for lam in lams:
                    try:
                        beta = solve_regularized(big_kp, lam, y_c)
                    except FactorizationError:
                        continue
                    pred = beta @ k_val + mean
                    mse = float(np.mean((pred - y_val) ** 2))
                    params = {"theta1": theta1, "theta2": theta2, "gamma": gamma, "lam": lam}
                    key = (mse,) + _tiebreak_key(params)
                    if best is None or key < best[0]:
                        best = (key, params)
    if best is None:
        raise FactorizationError("every grid candidate failed to fit")
    params = best[1]
    kernel = make_kernel(params["theta1"], params["theta2"])
    model = hpkrr_fit(x, y, unlabeled, kernel, params["lam"], params["gamma"])
    return model, params


def _seed_worker(args):
    config, seed = args
    return _SeedRun(config, seed).run()


def run_experiment(config: ExperimentConfig) -> tuple[list[SeedResult], dict]:
    """Run all seeds, aggregate, and test pairwise test-MSE differences.

    Per seed: generate a dataset, tune every enabled model on the validation
    split, evaluate on test, and Monte-Carlo the gap columns for the two
    baselines.  Failures are recorded per (seed, model) and the run
    continues; if nothing at all succeeds a HarnessError is raised.
    """
    seeds = list(config.seeds)
    jobs = config.effective_jobs()
    if jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_seed_worker, [(config, s) for s in seeds]))
    else:
        chunks = [_SeedRun(config, s).run() for s in seeds]
    results = [r for chunk in chunks for r in chunk]
    if results and all(r.error is not None for r in results):
        raise HarnessError("all seeds failed numerically")
    return results, summarize_results(results, config)


def summarize_results(results: list[SeedResult], config: ExperimentConfig | None = None) -> dict:
    """Mean/std per model and metric, plus the pairwise Wilcoxon MSE matrix."""
    model_names = sorted({r.model for r in results if r.mse is not None})
    per_model: dict[str, dict] = {}
    mse_by_model: dict[str, dict[int, float]] = {}
    for name in model_names:
        rows = [r for r in results if r.model == name and r.mse is not None]
        per_model[name] = {
            "n_seeds": len(rows),
            "mse": _mean_std([r.mse for r in rows]),
            "snr": _mean_std([r.snr for r in rows if math.isfinite(r.snr)]),
            "correlation": _mean_std([r.correlation for r in rows]),
            "wall_ms": _mean_std([r.wall_ms for r in rows if r.wall_ms is not None]),
        }
        mse_by_model[name] = {r.seed: r.mse for r in rows}

    deltas = {}
    for name in sorted({r.model for r in results if r.delta is not None}):
        rows = [r for r in results if r.model == name and r.delta is not None]
        deltas[name] = _mean_std([r.delta.delta_hat for r in rows])
        deltas[name]["mean_se"] = float(np.mean([r.delta.standard_error for r in rows]))

    wilcoxon: dict = {"order": model_names, "p": []}
    for i, a in enumerate(model_names):
        row = []
        for b in model_names[:i]:
            shared = sorted(set(mse_by_model[a]) & set(mse_by_model[b]))
            p = None
            if len(shared) >= 5:
                try:
                    p = wilcoxon_signed_rank(
                        [mse_by_model[a][s] for s in shared], [mse_by_model[b][s] for s in shared]
                    )
                except ValueError:
                    p = None
            row.append(p)
        wilcoxon["p"].append(row)

    failures = [{"seed": r.seed, "model": r.model, "error": r.error} for r in results if r.error is not None]
    summary = {
        "version": __version__,
        "models": per_model,
        "delta": deltas,
        "wilcoxon_mse": wilcoxon,
        "failures": failures,
        "n_failed": len(failures),
    }
    if config is not None:
        summary["config"] = config_to_dict(config)
    return summary


def _mean_std(values) -> dict:
    values = [float(v) for v in values]
    if not values:
        return {"mean": None, "std": None}
    arr = np.asarray(values)
    return {"mean": float(arr.mean()), "std": float(arr.std(ddof=1)) if arr.size > 1 else 0.0}


_ABLATION_AXES = {"n_train": "train", "n_semi": "semi", "d2": "d2"}


def run_ablation(config: ExperimentConfig, axis: str, values) -> list[tuple[int, list[SeedResult], dict]]:
    """Re-run the experiment sweeping one generator field."""
    if axis not in _ABLATION_AXES:
        raise ValueError(f"unknown ablation axis {axis!r}; pick one of {sorted(_ABLATION_AXES)}")
    field_name = _ABLATION_AXES[axis]
    out = []
    for value in values:
        value = int(value)
        if value < 0 or (axis != "n_semi" and value < 1):
            raise ValueError(f"ablation values must be positive, got {value}")
        gen = replace(config.generator, **{field_name: value})
        results, summary = run_experiment(replace(config, generator=gen))
        out.append((value, results, summary))
    return out


def spearman_rho(a, b) -> float:
    """Spearman rank correlation (midranks for ties)."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    ra, rb = _midranks(a), _midranks(b)
    ra -= ra.mean()
    rb -= rb.mean()
    denom = math.sqrt(float(ra @ ra) * float(rb @ rb))
    if denom == 0.0:
        return 0.0
    return float((ra @ rb) / denom)
