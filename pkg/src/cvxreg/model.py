"""Datasets, estimator configurations and fitted max-affine models."""

from __future__ import annotations

import dataclasses
from typing import Optional, Sequence

import numpy as np

TOL_FEAS = 1e-6

VARIANTS = ("CR", "PCR", "LCR", "ALCR", "WRCR")


class InvalidInput(ValueError):
    """Rejected input: bad shapes, non-finite values or inconsistent parameters."""


class ConvexityViolation(InvalidInput):
    def __init__(self, i: int, j: int, amount: float):
        super().__init__(f"pieces ({i}, {j}) violate pairwise convexity by {amount:.3e}")
        self.pair = (i, j)
        self.amount = amount


def _as_matrix(x, name) -> np.ndarray:
    a = np.array(x, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise InvalidInput(f"{name} must be a matrix, got shape {a.shape}")
    return a


@dataclasses.dataclass(frozen=True, eq=False)
class Dataset:
    x: np.ndarray
    y: np.ndarray
    columns: Optional[tuple[str, ...]] = None
    tags: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        x = _as_matrix(self.x, "x")
        y = np.array(self.y, dtype=float).ravel()
        n, d = x.shape
        if n < 1 or d < 1:
            raise InvalidInput(f"dataset needs n >= 1 and d >= 1, got n={n}, d={d}")
        if y.size != n:
            raise InvalidInput(f"x has {n} rows but y has {y.size} entries")
        if not (np.isfinite(x).all() and np.isfinite(y).all()):
            raise InvalidInput("dataset contains non-finite values")
        if self.columns is not None and len(self.columns) != d:
            raise InvalidInput(f"{len(self.columns)} column names for d={d}")
        if self.tags is not None and len(self.tags) != n:
            raise InvalidInput(f"{len(self.tags)} row tags for n={n}")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if self.columns is not None:
            object.__setattr__(self, "columns", tuple(self.columns))
        if self.tags is not None:
            object.__setattr__(self, "tags", tuple(self.tags))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        tags = None if self.tags is None else tuple(self.tags[i] for i in idx)
        return Dataset(self.x[idx], self.y[idx], self.columns, tags)


@dataclasses.dataclass(frozen=True, eq=False)
class EstimatorConfig:
    """Which program to fit and its parameters.

    Use the ``cr``/``pcr``/``lcr``/``alcr``/``wrcr`` constructors rather than
    filling fields by hand. ``min_norm_refinement`` defaults to on for CR
    and for PCR with a zero penalty, which is the same program.
    """

    variant: str = "CR"
    lam: Optional[float] = None
    L: Optional[float] = None
    b0: Optional[np.ndarray] = None
    L0: Optional[float] = None
    l0: Optional[np.ndarray] = None
    u0: Optional[np.ndarray] = None
    monotone: bool = False
    min_norm_refinement: Optional[bool] = None

    def __post_init__(self):
        v = self.variant.upper()
        if v not in VARIANTS:
            raise InvalidInput(f"unknown variant {self.variant!r}")
        object.__setattr__(self, "variant", v)
        if self.min_norm_refinement is None:
            object.__setattr__(self, "min_norm_refinement",
                               v == "CR" or (v == "PCR" and self.lam == 0))
        for name in ("b0", "l0", "u0"):
            val = getattr(self, name)
            if val is not None:
                arr = np.array(val, dtype=float).ravel()
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)
        if v == "PCR":
            if self.lam is None or not np.isfinite(self.lam) or self.lam < 0:
                raise InvalidInput(f"PCR needs lambda >= 0, got {self.lam}")
        elif v == "LCR":
            if self.L is None or not np.isfinite(self.L) or self.L <= 0:
                raise InvalidInput(f"LCR needs L > 0, got {self.L}")
        elif v == "ALCR":
            if self.b0 is None or self.L0 is None:
                raise InvalidInput("ALCR needs b0 and L0")
            if not np.isfinite(self.L0) or self.L0 < 0:
                raise InvalidInput(f"ALCR needs L0 >= 0, got {self.L0}")
            if not np.isfinite(self.b0).all():
                raise InvalidInput("ALCR b0 must be finite")
        elif v == "WRCR":
            if self.l0 is None or self.u0 is None:
                raise InvalidInput("WRCR needs l0 and u0")
            if self.l0.shape != self.u0.shape:
                raise InvalidInput("WRCR l0 and u0 differ in length")
            if np.isnan(self.l0).any() or np.isnan(self.u0).any():
                raise InvalidInput("WRCR bounds contain NaN")
            if np.any(self.l0 > self.u0):
                k = int(np.flatnonzero(self.l0 > self.u0)[0])
                raise InvalidInput(f"WRCR needs l0 <= u0; coordinate {k} has "
                                   f"l0={self.l0[k]} > u0={self.u0[k]}")
            if self.monotone and np.any(self.u0 < 0):
                raise InvalidInput("monotone WRCR needs u0 >= 0")

    @classmethod
    def cr(cls, monotone=False, **kw):
        return cls("CR", monotone=monotone, **kw)

    @classmethod
    def pcr(cls, lam, monotone=False, **kw):
        return cls("PCR", lam=float(lam), monotone=monotone, **kw)

    @classmethod
    def lcr(cls, L, monotone=False, **kw):
        return cls("LCR", L=float(L), monotone=monotone, **kw)

    @classmethod
    def alcr(cls, b0, L0, monotone=False, **kw):
        return cls("ALCR", b0=b0, L0=float(L0), monotone=monotone, **kw)

    @classmethod
    def wrcr(cls, l0, u0, monotone=False, **kw):
        return cls("WRCR", l0=l0, u0=u0, monotone=monotone, **kw)

    def check_dim(self, d: int) -> None:
        for name in ("b0", "l0", "u0"):
            val = getattr(self, name)
            if val is not None and val.size != d:
                raise InvalidInput(f"{name} has length {val.size}, data has d={d}")

    def params(self) -> dict:
        """The variant's parameters as plain JSON-friendly values."""
        out = {}
        for name in ("lam", "L", "L0"):
            if getattr(self, name) is not None:
                out["lambda" if name == "lam" else name] = getattr(self, name)
        for name in ("b0", "l0", "u0"):
            if getattr(self, name) is not None:
                out[name] = getattr(self, name).tolist()
        return out

    def to_dict(self) -> dict:
        return {"name": self.variant, **self.params()}

    @classmethod
    def from_dict(cls, doc: dict, monotone=False, min_norm_refinement=None) -> "EstimatorConfig":
        doc = dict(doc)
        name = doc.pop("name")
        if "lambda" in doc:
            doc["lam"] = doc.pop("lambda")
        return cls(name, monotone=monotone, min_norm_refinement=min_norm_refinement, **doc)

    def beta_box(self, d: int) -> tuple[np.ndarray, np.ndarray]:
        """Componentwise bounds on every subgradient implied by the config."""
        lo = np.full(d, -np.inf)
        hi = np.full(d, np.inf)
        if self.variant == "WRCR":
            lo, hi = self.l0.copy(), self.u0.copy()
        if self.monotone:
            lo = np.maximum(lo, 0.0)
        return lo, hi

    def beta_ball(self, d: int) -> Optional[tuple[np.ndarray, float]]:
        """(center, radius) of the norm ball on each subgradient, if any."""
        if self.variant == "LCR":
            return np.zeros(d), float(self.L)
        if self.variant == "ALCR":
            return np.asarray(self.b0, dtype=float), float(self.L0)
        return None


@dataclasses.dataclass(frozen=True)
class AffinePiece:
    value: float
    beta: np.ndarray
    anchor: np.ndarray

    @property
    def intercept(self) -> float:
        """alpha in the intercept form ``alpha + beta'x``."""
        return float(self.value - self.beta @ self.anchor)


@dataclasses.dataclass(frozen=True, eq=False)
class PwlModel:
    """Max-affine function ``max_i values[i] + betas[i]'(x - anchors[i])``."""

    values: np.ndarray
    betas: np.ndarray
    anchors: np.ndarray
    config: EstimatorConfig = dataclasses.field(default_factory=EstimatorConfig)
    fit_stats: dict = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        values = np.array(self.values, dtype=float).ravel()
        betas = _as_matrix(self.betas, "betas")
        anchors = _as_matrix(self.anchors, "anchors")
        if betas.shape != anchors.shape or betas.shape[0] != values.size or values.size == 0:
            raise InvalidInput(f"inconsistent piece shapes: values {values.shape}, "
                               f"betas {betas.shape}, anchors {anchors.shape}")
        if not (np.isfinite(values).all() and np.isfinite(betas).all()
                and np.isfinite(anchors).all()):
            raise InvalidInput("model contains non-finite entries")
        for a in (values, betas, anchors):
            a.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "anchors", anchors)
        object.__setattr__(self, "_offsets", values - np.einsum("ij,ij->i", betas, anchors))

    @classmethod
    def from_pieces(cls, pieces: Sequence[AffinePiece], config=None, fit_stats=None):
        return cls(np.array([p.value for p in pieces]),
                   np.array([np.atleast_1d(p.beta) for p in pieces], dtype=float),
                   np.array([np.atleast_1d(p.anchor) for p in pieces], dtype=float),
                   config or EstimatorConfig(), dict(fit_stats or {}))

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def d(self) -> int:
        return self.betas.shape[1]

    @property
    def pieces(self) -> list[AffinePiece]:
        return [AffinePiece(float(v), b, a) for v, b, a in zip(self.values, self.betas, self.anchors)]

    @property
    def intercepts(self) -> np.ndarray:
        return self._offsets.copy()

    def _scores(self, X):
        return X @ self.betas.T + self._offsets[None, :]

    def predict(self, X, chunk: int = 2048) -> np.ndarray:
        X = self._check(X)
        out = np.empty(X.shape[0])
        for s in range(0, X.shape[0], chunk):
            out[s:s + chunk] = self._scores(X[s:s + chunk]).max(axis=1)
        return out

    def active_piece(self, X, chunk: int = 2048) -> np.ndarray:
        X = self._check(X)
        out = np.empty(X.shape[0], dtype=int)
        for s in range(0, X.shape[0], chunk):
            out[s:s + chunk] = self._scores(X[s:s + chunk]).argmax(axis=1)
        return out

    def _check(self, X):
        X = np.array(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :] if X.size == self.d else X[:, None]
        if X.ndim != 2 or X.shape[1] != self.d:
            raise InvalidInput(f"query has dimension {X.shape[-1]}, model has d={self.d}")
        if not np.isfinite(X).all():
            raise InvalidInput("query contains non-finite values")
        return X

    def _violations(self, rows: slice) -> np.ndarray:
        # V[i, j] = value_i + beta_i'(x_j - x_i) - value_j for i in rows
        return (self.betas[rows] @ self.anchors.T + self._offsets[rows, None]
                - self.values[None, :])

    def max_violation(self) -> tuple[float, tuple[int, int]]:
        """Worst pairwise convexity violation at the anchors and where it occurs."""
        worst, where = 0.0, (-1, -1)
        for s in range(0, self.n, 512):
            V = self._violations(slice(s, s + 512))
            k = int(np.argmax(V))
            if V.flat[k] > worst:
                worst, where = float(V.flat[k]), (s + k // self.n, k % self.n)
        return worst, where

    def check(self, tol: float = TOL_FEAS) -> None:
        """Raise if any invariant of the fitted model fails by more than ``tol``."""
        for s in range(0, self.n, 512):
            V = self._violations(slice(s, s + 512))
            bad = np.argwhere(V > tol)
            if bad.size:
                i, j = map(int, bad[0])
                raise ConvexityViolation(s + i, j, float(V[i, j]))
        cfg = self.config
        lo, hi = cfg.beta_box(self.d)
        if np.any(self.betas < lo - tol) or np.any(self.betas > hi + tol):
            i = int(np.argwhere((self.betas < lo - tol) | (self.betas > hi + tol))[0][0])
            raise InvalidInput(f"piece {i} has a subgradient outside its bounds")
        ball = cfg.beta_ball(self.d)
        if ball is not None:
            norms = np.linalg.norm(self.betas - ball[0], axis=1)
            if np.any(norms > ball[1] + tol):
                i = int(np.argmax(norms > ball[1] + tol))
                raise InvalidInput(f"piece {i} has subgradient norm {norms[i]:.6g} "
                                   f"beyond {ball[1]:.6g}")


def evaluate(model: PwlModel, query) -> float:
    q = np.asarray(query, dtype=float).ravel()
    if q.size != model.d:
        raise InvalidInput(f"query has dimension {q.size}, model has d={model.d}")
    return float(model.predict(q[None, :])[0])


def subgradient_at(model: PwlModel, query) -> np.ndarray:
    """Subgradient of the piece attaining the max; ties go to the lowest index."""
    q = np.asarray(query, dtype=float).ravel()
    if q.size != model.d:
        raise InvalidInput(f"query has dimension {q.size}, model has d={model.d}")
    return model.betas[model.active_piece(q[None, :])[0]].copy()
