"""Synthetic studies: data generation, boundary diagnostics, Monte Carlo MSE
comparisons and the cost-frontier RMSE workflow."""

from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import functools
import logging
import math
import time
from importlib import resources
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .estimators import FitError, fit
from .io import format_float, read_dataset, write_dataset
from .model import VARIANTS, Dataset, EstimatorConfig, InvalidInput, PwlModel
from .rng import SplitMix64, derive
from .solver import SolverSettings
from .tuning import CvError, Grid, config_template, default_grid, reference_vector_ols, tune

log = logging.getLogger(__name__)

REPORT_SCHEMA = "cvxreg-report/1"
MSE_COLUMNS = ("estimator", "n", "d", "snr", "replication", "mse")

# Seed of the 100,000-draw Monte Carlo estimate of Var[f0(x)]; fixed so that a
# given (function, d, design) always gets the same noise level.
VARIANCE_SEED = 20240101
VARIANCE_DRAWS = 100_000

EVEN_LOW, EVEN_HIGH = 0.2, 1.0
UNIFORM_LOW, UNIFORM_HIGH = 1.0, 10.0


# --------------------------------------------------------------------------
# Test functions


@dataclasses.dataclass(frozen=True)
class TruthFunction:
    """A known convex regression function with its gradient."""

    name: str
    d: int

    def __call__(self, X) -> np.ndarray:
        return self.value(X)

    def value(self, X) -> np.ndarray:
        X = self._check(X)
        if self.name == "TypeA":
            g = np.cbrt(np.prod(X, axis=1))
            return 0.1 * X.sum(axis=1) + 0.3 * g
        if self.name == "TypeB":
            return np.prod(X ** (0.8 / self.d), axis=1)
        if self.name == "TypeI":
            return np.sum(X ** 2, axis=1)
        if self.name == "TypeII":
            return np.sum((X - 0.2) ** 2, axis=1)
        return 1.0 / X[:, 0]

    def gradient(self, X) -> np.ndarray:
        X = self._check(X)
        if self.name == "TypeA":
            g = np.cbrt(np.prod(X, axis=1))
            return 0.1 + 0.1 * g[:, None] / X
        if self.name == "TypeB":
            return self.value(X)[:, None] * (0.8 / self.d) / X
        if self.name == "TypeI":
            return 2.0 * X
        if self.name == "TypeII":
            return 2.0 * (X - 0.2)
        return -1.0 / X ** 2

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, self.d) if self.d > 1 else X[:, None]
        if X.shape[1] != self.d:
            raise InvalidInput(f"{self.name} expects d={self.d}, got {X.shape[1]} columns")
        return X


FUNCTIONS = ("TypeA", "TypeB", "TypeI", "TypeII", "Inverse1D")
DESIGNS = ("uniform", "even")


@dataclasses.dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for one synthetic dataset.

    Give exactly one of ``snr`` (noise variance ``Var[f0(x)] / snr``) and
    ``sigma`` (noise standard deviation). ``design`` defaults to ``"even"``
    for Inverse1D and ``"uniform"`` (on [1, 10]^d) otherwise.
    """

    function: str
    n: int
    d: int = 1
    snr: Optional[float] = None
    sigma: Optional[float] = None
    design: Optional[str] = None
    seed: int = 0

    def __post_init__(self):
        if self.function not in FUNCTIONS:
            raise InvalidInput(f"unknown function {self.function!r}; use one of {FUNCTIONS}")
        if self.function == "TypeA" and self.d != 3:
            raise InvalidInput("TypeA requires d = 3")
        if self.function == "Inverse1D" and self.d != 1:
            raise InvalidInput("Inverse1D requires d = 1")
        if not (isinstance(self.n, (int, np.integer)) and self.n >= 1):
            raise InvalidInput(f"n must be a positive integer, got {self.n!r}")
        if not (isinstance(self.d, (int, np.integer)) and self.d >= 1):
            raise InvalidInput(f"d must be a positive integer, got {self.d!r}")
        if (self.snr is None) == (self.sigma is None):
            raise InvalidInput("give exactly one of snr and sigma")
        if self.snr is not None and not (math.isfinite(self.snr) and self.snr > 0):
            raise InvalidInput(f"snr must be positive, got {self.snr}")
        if self.sigma is not None and not (math.isfinite(self.sigma) and self.sigma >= 0):
            raise InvalidInput(f"sigma must be non-negative, got {self.sigma}")
        design = self.design or ("even" if self.function == "Inverse1D" else "uniform")
        if design not in DESIGNS:
            raise InvalidInput(f"unknown design {design!r}; use one of {DESIGNS}")
        if design == "even" and self.d != 1:
            raise InvalidInput("the evenly spaced design is one-dimensional")
        object.__setattr__(self, "design", design)

    @property
    def truth(self) -> TruthFunction:
        return TruthFunction(self.function, int(self.d))


def even_design(n: int) -> np.ndarray:
    """Midpoints of n equal cells of [0.2, 1]: ``0.2 + 0.8 i/n - 0.4/n``."""
    i = np.arange(1, n + 1)
    return EVEN_LOW + (EVEN_HIGH - EVEN_LOW) * i / n - (EVEN_HIGH - EVEN_LOW) / (2 * n)


def sample_design(design: str, m: int, d: int, rng: SplitMix64) -> np.ndarray:
    """m random covariate vectors from the design's distribution.

    For the evenly spaced design this is uniform on [0.2, 1].
    """
    if design == "even":
        return rng.uniform((m, 1), EVEN_LOW, EVEN_HIGH)
    return rng.uniform((m, d), UNIFORM_LOW, UNIFORM_HIGH)


@functools.lru_cache(maxsize=None)
def signal_variance(function: str, d: int, design: str) -> float:
    """Monte Carlo estimate of ``Var[f0(x)]`` under the design distribution."""
    key = FUNCTIONS.index(function) * 1000 + d
    rng = SplitMix64(derive(VARIANCE_SEED, key, DESIGNS.index(design)))
    X = sample_design(design, VARIANCE_DRAWS, d, rng)
    return float(np.var(TruthFunction(function, d).value(X), ddof=1))


def noise_sigma(spec: SyntheticSpec) -> float:
    if spec.sigma is not None:
        return float(spec.sigma)
    return math.sqrt(signal_variance(spec.function, int(spec.d), spec.design) / spec.snr)


def generate(spec: SyntheticSpec) -> tuple[Dataset, TruthFunction]:
    """Draw ``y = f0(x) + N(0, sigma^2)`` noise according to ``spec``.

    The stream ``SplitMix64(spec.seed)`` supplies the n*d design uniforms
    (row-major; none for the evenly spaced design) and then the n normals.
    """
    rng = SplitMix64(spec.seed)
    truth = spec.truth
    if spec.design == "even":
        x = even_design(spec.n)[:, None]
    else:
        x = sample_design(spec.design, spec.n, spec.d, rng)
    sigma = noise_sigma(spec)
    y = truth.value(x) + sigma * rng.normal(spec.n)
    return Dataset(x, y), truth


# --------------------------------------------------------------------------
# Reports


def confidence_interval(values, level: float = 0.95) -> tuple[float, float]:
    """Mean and Student-t half-width ``t_{(1+level)/2, m-1} sd / sqrt(m)``."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size < 2:
        raise InvalidInput(f"a confidence interval needs at least 2 values, got {v.size}")
    if not np.isfinite(v).all():
        raise InvalidInput("confidence interval values must be finite")
    m = v.size
    sd = float(np.std(v, ddof=1))
    t = float(stats.t.ppf(0.5 + level / 2, m - 1))
    return float(v.mean()), t * sd / math.sqrt(m)


@dataclasses.dataclass
class Cell:
    """Per-replication values of one metric under one setting.

    Failed replications hold NaN and are listed in ``errors``.
    """

    labels: dict
    values: list
    errors: dict = dataclasses.field(default_factory=dict)

    @property
    def ok(self) -> np.ndarray:
        v = np.asarray(self.values, dtype=float)
        return v[np.isfinite(v)]

    def summary(self) -> dict:
        ok = self.ok
        row = {**self.labels, "replications": len(self.values), "completed": int(ok.size),
               "mean": float(ok.mean()) if ok.size else None, "half_width": None,
               "ci_available": ok.size >= 2, "partial": ok.size < len(self.values)}
        if ok.size >= 2:
            row["half_width"] = confidence_interval(ok)[1]
        return row


@dataclasses.dataclass
class ExperimentReport:
    """Replication-level metrics with 95% confidence intervals."""

    name: str
    config: dict
    cells: list
    runtime: float = 0.0
    extra: dict = dataclasses.field(default_factory=dict)
    rows: list = dataclasses.field(default_factory=list)

    @property
    def partial(self) -> bool:
        return any(c.errors for c in self.cells)

    def cell(self, **labels) -> Cell:
        hits = [c for c in self.cells if all(c.labels.get(k) == v for k, v in labels.items())]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} cells match {labels}")
        return hits[0]

    def summary(self) -> list[dict]:
        return [c.summary() for c in self.cells]

    def to_dict(self) -> dict:
        def clean(v):
            return None if isinstance(v, float) and not math.isfinite(v) else v
        return {
            "schema": REPORT_SCHEMA,
            "name": self.name,
            "config": self.config,
            "runtime_seconds": self.runtime,
            "partial": self.partial,
            "summary": self.summary(),
            "cells": [{"labels": c.labels, "values": [clean(float(v)) for v in c.values],
                       "errors": {str(k): e for k, e in c.errors.items()}}
                      for c in self.cells],
            **self.extra,
        }


def write_long_csv(rows: Sequence[dict], sink, columns=MSE_COLUMNS) -> None:
    """Long-format rows, one per (cell, replication); floats at full precision."""
    own = not hasattr(sink, "write")
    fh = open(sink, "w", newline="", encoding="utf-8") if own else sink
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([format_float(r[c]) if isinstance(r[c], float) else r[c] for c in columns])
    finally:
        if own:
            fh.close()


def _map(func, tasks, jobs: int):
    """Ordered map, in worker processes when ``jobs > 1``."""
    if jobs <= 1 or len(tasks) <= 1:
        return [func(t) for t in tasks]
    with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(func, tasks))


# --------------------------------------------------------------------------
# Boundary diagnostic


def _boundary_replication(task):
    n, rep, seed, sigma, config, settings = task
    spec = SyntheticSpec("Inverse1D", n, 1, sigma=sigma, seed=derive(seed, n, rep))
    data, truth = generate(spec)
    try:
        model = fit(data, config, settings=settings)
    except (FitError, InvalidInput) as exc:
        return None, None, str(exc)
    f_err = float(np.max(np.abs(model.values - truth.value(data.x))))
    g_err = float(np.max(np.abs(model.betas - truth.gradient(data.x))))
    return f_err, g_err, None


def boundary_diagnostic(n: int, replications: int, config: Optional[EstimatorConfig] = None, *,
                        seed: int = 0, sigma: float = 1.0, jobs: int = 1,
                        settings: Optional[SolverSettings] = None) -> ExperimentReport:
    """Max errors of the fitted values and subgradients at the design points.

    Data follow ``y = 1/x + N(0, sigma^2)`` on the evenly spaced design in
    [0.2, 1]. Per replication the report records
    ``max_i |f_i - f0(x_i)|`` and ``max_i |beta_i - f0'(x_i)|``; CR is fitted
    unless ``config`` says otherwise.
    """
    if replications < 1:
        raise InvalidInput("replications must be >= 1")
    config = config or EstimatorConfig.cr()
    t0 = time.perf_counter()
    tasks = [(n, r, seed, sigma, config, settings) for r in range(replications)]
    out = _map(_boundary_replication, tasks, jobs)
    cells = []
    for k, metric in enumerate(("function_error", "subgradient_error")):
        vals = [np.nan if o[2] else o[k] for o in out]
        errs = {r: o[2] for r, o in enumerate(out) if o[2]}
        cells.append(Cell({"metric": metric, "n": n, "estimator": config.variant}, vals, errs))
    echo = {"n": n, "replications": replications, "seed": seed, "sigma": sigma,
            "estimator": config.to_dict(), "monotone": config.monotone}
    return ExperimentReport("boundary", echo, cells, time.perf_counter() - t0)


def merge_reports(name: str, reports: Sequence[ExperimentReport], config: dict) -> ExperimentReport:
    cells = [c for r in reports for c in r.cells]
    return ExperimentReport(name, config, cells, sum(r.runtime for r in reports))


# --------------------------------------------------------------------------
# Monte Carlo study


@dataclasses.dataclass(frozen=True)
class McConfig:
    """Settings of a Monte Carlo MSE comparison.

    ``grids`` overrides the candidate set of a variant, e.g.
    ``{"PCR": (0.0,)}``. With ``freeze_tuning`` the parameters chosen in the
    first replication of each setting are reused by the others.
    """

    function: str
    n: tuple
    d: tuple
    snr: tuple
    replications: int
    estimators: tuple = VARIANTS
    profile: str = "paper6"
    grids: Optional[dict] = None
    folds: int = 5
    eval_points: int = 1000
    freeze_tuning: bool = False

    def __post_init__(self):
        for name in ("n", "d", "snr", "estimators"):
            val = getattr(self, name)
            val = tuple(val) if isinstance(val, (list, tuple, np.ndarray)) else (val,)
            if not val:
                raise InvalidInput(f"{name} list is empty")
            object.__setattr__(self, name, val)
        est = tuple(e.upper() for e in self.estimators)
        bad = [e for e in est if e not in VARIANTS]
        if bad:
            raise InvalidInput(f"unknown estimator {bad[0]!r}; use one of {VARIANTS}")
        object.__setattr__(self, "estimators", est)
        if self.replications < 1:
            raise InvalidInput("replications must be >= 1")
        if self.eval_points < 1:
            raise InvalidInput("eval_points must be >= 1")
        grids = {k.upper(): tuple(float(v) for v in vals) for k, vals in (self.grids or {}).items()}
        object.__setattr__(self, "grids", grids)
        for n in self.n:
            for d in self.d:
                # fail early on invalid combinations
                SyntheticSpec(self.function, int(n), int(d), snr=float(self.snr[0]))
                if n < self.folds:
                    raise InvalidInput(f"n={n} is smaller than the number of folds")

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["grids"] = {k: list(v) for k, v in self.grids.items()}
        for name in ("n", "d", "snr", "estimators"):
            out[name] = list(out[name])
        return out


def _grid_for(cfg: McConfig, variant: str, cr_betas, b0) -> Grid:
    if variant in cfg.grids:
        name = default_grid(variant, "paper7").name
        return Grid(name, cfg.grids[variant])
    return default_grid(variant, cfg.profile, cr_subgradients=cr_betas, b0=b0)


def _mc_replication(task):
    """MSE of every estimator in one replication.

    2n points are split into training and validation halves. CR on the
    training half supplies the subgradients for the WRCR percentiles and the
    L0 grid; b0 is the least-squares slope on the validation half, which also
    drives the cross-validation. Final fits use the training half.
    """
    cfg, n, d, snr, rep, seed, frozen, settings = task
    rseed = derive(seed, n, d, int(round(snr * 1e6)), rep)
    spec = SyntheticSpec(cfg.function, 2 * n, d, snr=snr, seed=rseed)
    data, truth = generate(spec)
    train, valid = data.subset(np.arange(n)), data.subset(np.arange(n, 2 * n))
    X_eval = sample_design(spec.design, cfg.eval_points, d, SplitMix64(derive(rseed, 1)))
    f_eval = truth.value(X_eval)

    mse, chosen, errors = {}, {}, {}
    try:
        cr = fit(train, EstimatorConfig.cr(), settings=settings)
    except (FitError, InvalidInput) as exc:
        return {e: np.nan for e in cfg.estimators}, {}, {e: f"CR fit: {exc}" for e in cfg.estimators}
    b0 = reference_vector_ols(valid, ridge=True)
    for variant in cfg.estimators:
        try:
            if variant == "CR":
                model = cr
            else:
                if frozen is not None:
                    value = frozen[variant]
                    config = _config_for(variant, value, cr.betas, b0)
                else:
                    grid = _grid_for(cfg, variant, cr.betas, b0)
                    config, res = tune(valid, variant, grid, seed=derive(rseed, 2),
                                       k=cfg.folds, b0=b0, cr_subgradients=cr.betas,
                                       settings=settings)
                    value = res.best
                chosen[variant] = value
                model = fit(train, config, settings=settings)
            resid = model.predict(X_eval) - f_eval
            mse[variant] = float(np.mean(resid ** 2))
        except (FitError, CvError, InvalidInput) as exc:
            mse[variant] = np.nan
            errors[variant] = str(exc)
    return mse, chosen, errors


def _config_for(variant, value, cr_betas, b0):
    return config_template(variant, b0=b0, cr_subgradients=cr_betas)(value)


def mc_study(cfg: McConfig, *, seed: int = 0, jobs: int = 1,
             settings: Optional[SolverSettings] = None) -> ExperimentReport:
    """Monte Carlo comparison of estimator MSEs against the true function.

    Each replication owns the stream ``derive(seed, n, d, snr, replication)``,
    so the report does not depend on ``jobs``. The report's ``rows`` hold the
    long-format table (estimator, n, d, snr, replication, mse).
    """
    t0 = time.perf_counter()
    cells, rows, tuned = [], [], []
    for n in cfg.n:
        for d in cfg.d:
            for snr in cfg.snr:
                n, d, snr = int(n), int(d), float(snr)
                frozen = None
                first = []
                if cfg.freeze_tuning:
                    first = [_mc_replication((cfg, n, d, snr, 0, seed, None, settings))]
                    frozen = first[0][1]
                    if any(v not in frozen for v in cfg.estimators if v != "CR"):
                        frozen = None  # tuning failed; fall back to per-replication tuning
                tasks = [(cfg, n, d, snr, r, seed, frozen, settings)
                         for r in range(len(first), cfg.replications)]
                out = first + _map(_mc_replication, tasks, jobs)
                for variant in cfg.estimators:
                    vals = [o[0][variant] for o in out]
                    errs = {r: o[2][variant] for r, o in enumerate(out) if variant in o[2]}
                    cells.append(Cell({"estimator": variant, "n": n, "d": d, "snr": snr},
                                      vals, errs))
                    for r, v in enumerate(vals):
                        rows.append({"estimator": variant, "n": n, "d": d, "snr": snr,
                                     "replication": r, "mse": v})
                for r, o in enumerate(out):
                    tuned.append({"n": n, "d": d, "snr": snr, "replication": r, **o[1]})
    echo = {**cfg.to_dict(), "seed": seed}
    return ExperimentReport("mc_study", echo, cells, time.perf_counter() - t0,
                            {"tuned_parameters": tuned}, rows)


# --------------------------------------------------------------------------
# Cost frontier


FIXTURE_SEED = 7
FIXTURE_FILE = "frontier_fixture.csv"
FIXTURE_FIRMS = 10
FIXTURE_YEARS = tuple(range(2010, 2023))
TRAIN_YEARS = 9


def fixture_cost(X) -> np.ndarray:
    """Convex, non-decreasing cost used to generate the frontier fixture."""
    X = np.asarray(X, dtype=float)
    w = np.array([2.0, 0.5, 30.0, 9.0])
    return X @ w + 0.02 * (X @ np.array([1.0, 1.0, 4.0, 2.0])) ** 2


def make_frontier_fixture(seed: int = FIXTURE_SEED) -> Dataset:
    """Panel of firms over 13 years with growing outputs.

    Firm scales are uniform on [1, 10], each of the four outputs gets a firm
    share uniform on [0.5, 1.5] times a per-output base level, outputs grow by
    a firm-specific rate uniform on [0, 6%] a year with 5% multiplicative
    jitter, and costs carry N(0, 5^2) noise.
    """
    rng = SplitMix64(seed)
    F, T = FIXTURE_FIRMS, len(FIXTURE_YEARS)
    scale = rng.uniform(F, 1.0, 10.0)
    share = rng.uniform((F, 4), 0.5, 1.5) * np.array([4.0, 10.0, 0.5, 1.0])
    growth = rng.uniform(F, 0.0, 0.06)
    x, tags = [], []
    for f in range(F):
        for t, year in enumerate(FIXTURE_YEARS):
            jitter = 1.0 + 0.05 * (rng.uniform(4) - 0.5) * 2
            x.append(scale[f] * share[f] * (1 + growth[f]) ** t * jitter)
            tags.append(f"F{f + 1:02d}-{year}")
    x = np.array(x)
    y = fixture_cost(x) + 5.0 * rng.normal(len(x))
    return Dataset(x, y, ("x1", "x2", "x3", "x4"), tuple(tags))


def load_frontier_fixture() -> Dataset:
    """The shipped fixture, identical to ``make_frontier_fixture()``."""
    with resources.files("cvxreg").joinpath("data", FIXTURE_FILE).open("r", encoding="utf-8") as fh:
        return read_dataset(fh)


def write_frontier_fixture(path) -> None:
    write_dataset(make_frontier_fixture(), path)


def temporal_split(data: Dataset, train_years: int = TRAIN_YEARS) -> tuple[Dataset, Dataset]:
    """Split tagged panel data (tags ``<firm>-<year>``) at the given year count."""
    if data.tags is None:
        raise InvalidInput("temporal split needs tags of the form <firm>-<year>")
    try:
        years = np.array([int(t.rsplit("-", 1)[1]) for t in data.tags])
    except (IndexError, ValueError):
        raise InvalidInput("tags must look like <firm>-<year>") from None
    distinct = np.unique(years)
    if not 0 < train_years < distinct.size:
        raise InvalidInput(f"need 0 < train_years < {distinct.size}, got {train_years}")
    cut = distinct[train_years - 1]
    return data.subset(np.flatnonzero(years <= cut)), data.subset(np.flatnonzero(years > cut))


SUMMARY_STATS = ("mean", "sd", "min", "p10", "p50", "p90", "max")


def subgradient_summary(betas, columns=None) -> dict:
    """Mean, sample sd, min, 10/50/90th percentiles and max per coordinate."""
    B = np.asarray(betas, dtype=float)
    B = B[:, None] if B.ndim == 1 else B
    columns = columns or [f"x{k + 1}" for k in range(B.shape[1])]
    out = {}
    for k, col in enumerate(columns):
        b = B[:, k]
        p10, p50, p90 = np.percentile(b, [10, 50, 90], method="linear")
        out[col] = {"mean": float(b.mean()), "sd": float(b.std(ddof=1)) if b.size > 1 else 0.0,
                    "min": float(b.min()), "p10": float(p10), "p50": float(p50),
                    "p90": float(p90), "max": float(b.max())}
    return out


def frontier_workflow(train: Dataset, test: Dataset, config: EstimatorConfig, *,
                      settings: Optional[SolverSettings] = None) -> dict:
    """Fit on ``train``; in-sample and out-of-sample RMSE plus a subgradient summary."""
    if train.d != test.d:
        raise InvalidInput(f"train has d={train.d} but test has d={test.d}")
    if not config.monotone:
        raise InvalidInput("the frontier workflow fits non-decreasing costs; set monotone")
    model = fit(train, config, settings=settings)
    in_rmse = float(np.sqrt(np.mean((train.y - model.values) ** 2)))
    out_rmse = float(np.sqrt(np.mean((test.y - model.predict(test.x)) ** 2)))
    return {"in_rmse": in_rmse, "out_rmse": out_rmse,
            "subgradient_summary": subgradient_summary(model.betas, train.columns),
            "model": model}


def frontier_study(data: Optional[Dataset] = None, *, estimators=VARIANTS, seed: int = 0,
                   profile: str = "paper7", folds: int = 5, train_years: int = TRAIN_YEARS,
                   settings: Optional[SolverSettings] = None) -> ExperimentReport:
    """The full frontier pipeline on tagged panel data (the shipped fixture by default).

    Monotone CR on the training years gives the subgradient summary; its
    per-coordinate medians become b0 and its subgradients feed the WRCR
    percentile bounds. Every other parameter is picked by k-fold CV on the
    training years.
    """
    t0 = time.perf_counter()
    data = data if data is not None else load_frontier_fixture()
    train, test = temporal_split(data, train_years)
    estimators = tuple(e.upper() for e in estimators)
    cr_res = frontier_workflow(train, test, EstimatorConfig.cr(monotone=True), settings=settings)
    cr_betas = cr_res["model"].betas
    b0 = np.median(cr_betas, axis=0)
    table, cells = [], []
    for variant in estimators:
        if variant == "CR":
            res, param = cr_res, None
        else:
            grid = default_grid(variant, profile, cr_subgradients=cr_betas, b0=b0)
            config, cv = tune(train, variant, grid, seed=derive(seed, VARIANTS.index(variant)),
                              k=folds, b0=b0, cr_subgradients=cr_betas, monotone=True,
                              settings=settings)
            res, param = frontier_workflow(train, test, config, settings=settings), cv.best
        ratio = res["out_rmse"] / res["in_rmse"] if res["in_rmse"] > 0 else math.inf
        table.append({"estimator": variant, "parameter": param, "in_rmse": res["in_rmse"],
                      "out_rmse": res["out_rmse"], "ratio": ratio})
        for metric in ("in_rmse", "out_rmse"):
            cells.append(Cell({"estimator": variant, "metric": metric}, [res[metric]]))
    echo = {"estimators": list(estimators), "seed": seed, "profile": profile, "folds": folds,
            "train_years": train_years, "n_train": train.n, "n_test": test.n}
    extra = {"rmse_table": table, "b0": b0.tolist(),
             "cr_subgradient_summary": cr_res["subgradient_summary"]}
    return ExperimentReport("frontier", echo, cells, time.perf_counter() - t0, extra)


# --------------------------------------------------------------------------
# Presets


PRESETS = {
    "boundary": {"n": [100, 200, 400], "reps": 30, "estimators": ["cr"], "sigma": 1.0},
    "table2": {"function": "TypeA", "n": [50, 100, 200], "d": [3], "snr": [3.0], "reps": 20,
               "estimators": [v.lower() for v in VARIANTS]},
    "typeB-sweep": {"function": "TypeB", "n": [100], "d": [2, 4, 6, 8, 10], "snr": [3.0],
                    "reps": 20, "estimators": ["pcr", "lcr", "alcr", "wrcr"]},
    "snr-sweep": {"function": "TypeB", "n": [100], "d": [3], "snr": [1.0, 1.5, 2.0, 2.5, 3.0],
                  "reps": 20, "estimators": ["pcr", "lcr", "alcr", "wrcr"]},
    "frontier-fixture": {"estimators": [v.lower() for v in VARIANTS]},
}
