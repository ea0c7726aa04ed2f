"""Cross-validated tuning and data-driven reference vectors and bounds."""

from __future__ import annotations

import dataclasses
import logging
from typing import Callable, Optional, Sequence

import numpy as np

from .estimators import FitError, fit
from .model import Dataset, EstimatorConfig, InvalidInput
from .rng import SplitMix64
from .solver import SolverSettings

log = logging.getLogger(__name__)

CV_SCHEMA = "cvxreg-cv/1"

# Candidate sets. "paper6" is the simulation protocol, "paper7" the frontier one.
Q_GRID = tuple(round(0.01 * k, 2) for k in range(1, 50))
L_GRID_6 = tuple(np.linspace(0.1, 5.0, 50))
LAMBDA_GRID_6 = tuple(np.linspace(0.1, 5.0, 50))
GRID_7 = tuple(np.linspace(1.0, 500.0, 50))
PROFILES = ("paper6", "paper7")
# fold fits only feed held-out predictions, which do not need the extra
# accuracy of the final iterations and the active-set polish
CV_SETTINGS = SolverSettings(extra_iters=0, polish=False)


class CvError(RuntimeError):
    """A fold fit failed during cross-validation."""

    def __init__(self, message, fold: int, candidate: float):
        super().__init__(message)
        self.fold = fold
        self.candidate = candidate


@dataclasses.dataclass(frozen=True)
class Grid:
    name: str
    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise InvalidInput(f"grid {self.name!r} is empty")
        if not np.isfinite(vals).all():
            raise InvalidInput(f"grid {self.name!r} has non-finite values")
        diffs = np.diff(vals)
        if np.any(diffs <= 0):
            k = int(np.flatnonzero(diffs <= 0)[0])
            what = "repeats" if diffs[k] == 0 else "decreases at"
            raise InvalidInput(f"grid {self.name!r} must be strictly increasing; "
                               f"it {what} {vals[k + 1]!r} (position {k + 1})")
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.values)

    def to_dict(self):
        return {"name": self.name, "values": list(self.values)}


@dataclasses.dataclass(frozen=True)
class CvResult:
    parameter: str
    best: float
    curve: tuple[tuple[float, float], ...]
    folds: int
    seed: int
    fold_sizes: tuple[int, ...]

    @property
    def best_score(self) -> float:
        return min(s for _, s in self.curve)

    def to_dict(self) -> dict:
        return {
            "schema": CV_SCHEMA,
            "parameter": self.parameter,
            "grid": [c for c, _ in self.curve],
            "scores": [s for _, s in self.curve],
            "best": self.best,
            "folds": self.folds,
            "fold_sizes": list(self.fold_sizes),
            "seed": self.seed,
        }


def kfold_split(n: int, k: int, seed: int = 0) -> list[np.ndarray]:
    """Partition ``range(n)`` into ``k`` folds after a SplitMix64 shuffle.

    The first ``n % k`` folds get one extra point. Indices within a fold are
    sorted.
    """
    if not (isinstance(k, (int, np.integer)) and isinstance(n, (int, np.integer))):
        raise InvalidInput("n and k must be integers")
    if k < 2 or k > n:
        raise InvalidInput(f"need 2 <= k <= n, got k={k}, n={n}")
    perm = SplitMix64(seed).permutation(n)
    sizes = [n // k + (1 if f < n % k else 0) for f in range(k)]
    bounds = np.cumsum([0] + sizes)
    return [np.sort(perm[bounds[f]:bounds[f + 1]]) for f in range(k)]


def cross_validate(data: Dataset, template: Callable[[float], EstimatorConfig], grid: Grid,
                   k: int = 5, seed: int = 0, *, settings: Optional[SolverSettings] = None,
                   fit_kwargs: Optional[dict] = None) -> CvResult:
    """k-fold CV score ``(1/k) sum_folds sum_heldout (y - fhat(x))^2`` per candidate.

    ``template`` maps a candidate value to a full configuration. The best
    candidate has the smallest score, ties going to the smallest candidate.
    Without explicit ``settings`` the fold fits use ``CV_SETTINGS``.
    """
    settings = settings or CV_SETTINGS
    folds = kfold_split(data.n, k, seed)
    everything = np.arange(data.n)
    train = [np.setdiff1d(everything, f) for f in folds]
    fit_kwargs = fit_kwargs or {}
    curve = []
    for cand in grid.values:
        try:
            cfg = template(cand)
        except InvalidInput as exc:
            raise CvError(f"candidate {grid.name}={cand!r}: {exc}", -1, cand) from exc
        total = 0.0
        for f, (tr, te) in enumerate(zip(train, folds)):
            try:
                model = fit(data.subset(tr), cfg, settings=settings, **fit_kwargs)
            except FitError as exc:
                raise CvError(f"fold {f}, candidate {grid.name}={cand!r}: {exc}", f, cand) from exc
            resid = data.y[te] - model.predict(data.x[te])
            total += float(resid @ resid)
        curve.append((cand, total / k))
        log.debug("cv %s=%.6g score %.6g", grid.name, cand, total / k)
    scores = np.array([s for _, s in curve])
    best = curve[int(np.argmin(scores))][0]  # argmin returns the first minimum
    return CvResult(grid.name, best, tuple(curve), k, int(seed), tuple(len(f) for f in folds))


def reference_vector_ols(data: Dataset, ridge: bool = False) -> np.ndarray:
    """Slope of the least-squares fit of y on (1, x)."""
    X = np.column_stack([np.ones(data.n), data.x])
    if np.linalg.matrix_rank(X) < X.shape[1]:
        if not ridge:
            raise InvalidInput("design with intercept is rank deficient; "
                               "pass ridge=True for a 1e-8 ridge fallback")
        xc = data.x - data.x.mean(axis=0)
        yc = data.y - data.y.mean()
        return np.linalg.solve(xc.T @ xc + 1e-8 * np.eye(data.d), xc.T @ yc)
    coef, *_ = np.linalg.lstsq(X, data.y, rcond=None)
    return coef[1:]


def percentile_bounds(betas, q: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-coordinate q-th and (1-q)-th percentiles (linear interpolation)."""
    B = np.asarray(betas, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    if B.shape[0] < 1:
        raise InvalidInput("percentile_bounds needs at least one subgradient")
    if not 0 <= q < 0.5:
        raise InvalidInput(f"q must lie in [0, 0.5), got {q}")
    lo = np.percentile(B, 100 * q, axis=0, method="linear")
    hi = np.percentile(B, 100 * (1 - q), axis=0, method="linear")
    return lo, np.maximum(hi, lo)


def default_grid(variant: str, profile: str = "paper6", *, cr_subgradients=None,
                 b0=None) -> Grid:
    """The candidate set used to tune ``variant`` under ``profile``.

    The L0 grid of the simulation profile spans ``[0, max_i ||beta_i - b0||]``
    and so needs the CR subgradients and ``b0``.
    """
    v = variant.upper()
    if profile not in PROFILES:
        raise InvalidInput(f"unknown grid profile {profile!r}; use one of {PROFILES}")
    if v == "WRCR":
        return Grid("q", Q_GRID)
    if profile == "paper7":
        name = {"PCR": "lambda", "LCR": "L", "ALCR": "L0"}.get(v)
        if name is None:
            raise InvalidInput(f"{v} has no tuning parameter")
        return Grid(name, GRID_7)
    if v == "PCR":
        return Grid("lambda", LAMBDA_GRID_6)
    if v == "LCR":
        return Grid("L", L_GRID_6)
    if v == "ALCR":
        if cr_subgradients is None or b0 is None:
            raise InvalidInput("the L0 grid needs CR subgradients and b0")
        B = np.asarray(cr_subgradients, dtype=float)
        B = B[:, None] if B.ndim == 1 else B
        top = float(np.max(np.linalg.norm(B - np.asarray(b0, dtype=float)[None, :], axis=1)))
        if top <= 0:
            return Grid("L0", (0.0,))
        return Grid("L0", tuple(np.linspace(0.0, top, 50)))
    raise InvalidInput(f"{v} has no tuning parameter")


def config_template(variant: str, *, b0=None, cr_subgradients=None,
                    monotone: bool = False) -> Callable[[float], EstimatorConfig]:
    """Map a tuning value to a configuration for ``variant``.

    WRCR candidates are percentile levels q; its bounds come from the CR
    subgradients.
    """
    v = variant.upper()
    if v == "PCR":
        return lambda lam: EstimatorConfig.pcr(lam, monotone=monotone)
    if v == "LCR":
        return lambda L: EstimatorConfig.lcr(L, monotone=monotone)
    if v == "ALCR":
        if b0 is None:
            raise InvalidInput("ALCR tuning needs b0")
        b0 = np.asarray(b0, dtype=float)
        return lambda L0: EstimatorConfig.alcr(b0, L0, monotone=monotone)
    if v == "WRCR":
        if cr_subgradients is None:
            raise InvalidInput("WRCR tuning needs CR subgradients")
        B = np.asarray(cr_subgradients, dtype=float)

        def make(q):
            lo, hi = percentile_bounds(B, q)
            if monotone:
                hi = np.maximum(hi, 0.0)
            return EstimatorConfig.wrcr(lo, hi, monotone=monotone)
        return make
    raise InvalidInput(f"{v} has no tuning parameter")


def tune(data: Dataset, variant: str, grid: Grid, *, seed: int = 0, k: int = 5,
         b0=None, cr_subgradients=None, monotone: bool = False,
         settings: Optional[SolverSettings] = None) -> tuple[EstimatorConfig, CvResult]:
    """Cross-validate ``variant`` on ``data`` and return the chosen configuration."""
    template = config_template(variant, b0=b0, cr_subgradients=cr_subgradients,
                               monotone=monotone)
    res = cross_validate(data, template, grid, k=k, seed=seed, settings=settings)
    return template(res.best), res

