"""Shape-constrained least-squares programs and their fitted models.

Variables are ordered ``f_1..f_n`` followed by ``beta_1(1..d), ..., beta_n(1..d)``.
Each ordered pair ``i != j`` contributes the row
``f_i - f_j + beta_i'(x_j - x_i) <= 0``.
"""

from __future__ import annotations

import dataclasses
import logging
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy import optimize
from scipy.spatial import cKDTree

from .model import TOL_FEAS, Dataset, EstimatorConfig, InvalidInput, PwlModel
from .solver import (QuadraticConicProgram, SecondOrderCone, Solution, SolverSettings,
                     solve, solve_with_constraint_generation)

log = logging.getLogger(__name__)

DENSE_THRESHOLD = 300
# relative slack of the minimum-norm program, and the residual up to which a
# stalled minimum-norm solve is still accepted
MIN_NORM_SLACK = 1e-8
MIN_NORM_ACCEPT = 1e-6
KNN_PAIRS = 10


class FitError(RuntimeError):
    """The solver did not certify optimality."""

    def __init__(self, message: str, solution: Optional[Solution] = None):
        super().__init__(message)
        self.solution = solution


def all_pairs(n: int) -> tuple[np.ndarray, np.ndarray]:
    I, J = np.divmod(np.arange(n * n), n)
    keep = I != J
    return I[keep], J[keep]


def _pair_rows(x, I, J, f_col, beta_col, num_vars):
    """Sparse rows ``f_i - f_j + beta_i'(x_j - x_i)`` for the given pairs.

    ``f_col`` is None when the function values are constants (they then go to
    the right-hand side).
    """
    m = I.size
    d = x.shape[1]
    r = np.arange(m)
    rows = [np.repeat(r, d)]
    cols = [(beta_col + I[:, None] * d + np.arange(d)[None, :]).ravel()]
    vals = [(x[J] - x[I]).ravel()]
    if f_col is not None:
        rows += [r, r]
        cols += [f_col + I, f_col + J]
        vals += [np.ones(m), -np.ones(m)]
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(m, num_vars))


def _beta_constraints(config: EstimatorConfig, n: int, d: int, offset: int, num_vars: int):
    lo = np.full(num_vars, -np.inf)
    hi = np.full(num_vars, np.inf)
    blo, bhi = config.beta_box(d)
    lo[offset:offset + n * d] = np.tile(blo, n)
    hi[offset:offset + n * d] = np.tile(bhi, n)
    cones = []
    ball = config.beta_ball(d)
    if ball is not None:
        center, radius = ball
        cones = [SecondOrderCone(offset + i * d + np.arange(d), center, radius) for i in range(n)]
    return lo, hi, cones


def _base_problem(data: Dataset, config: EstimatorConfig) -> QuadraticConicProgram:
    n, d = data.n, data.d
    N = n + n * d
    pdiag = np.zeros(N)
    pdiag[:n] = 2.0 / n
    if config.variant == "PCR":
        pdiag[n:] = 2.0 * config.lam / n
    q = np.zeros(N)
    q[:n] = -2.0 * data.y / n
    lo, hi, cones = _beta_constraints(config, n, d, n, N)
    # each row touches one subgradient block only, so the solver can eliminate them
    return QuadraticConicProgram(P=sp.diags(pdiag, format="csr"), q=q, A=None, b=None,
                                 lo=lo, hi=hi, soc=cones,
                                 blocks=n + np.arange(n * d).reshape(n, d))


def build_problem(data: Dataset, config: EstimatorConfig) -> QuadraticConicProgram:
    """The full program with one convexity row per ordered pair.

    Objective ``(1/n) sum (y_i - f_i)^2`` (+ ``(lambda/n) sum ||beta_i||^2`` for
    PCR), written as ``1/2 z'Pz + q'z`` without the constant ``(1/n) sum y_i^2``.
    """
    config.check_dim(data.d)
    base = _base_problem(data, config)
    I, J = all_pairs(data.n)
    A = _pair_rows(data.x, I, J, 0, data.n, base.num_vars)
    return base.with_rows(A, np.zeros(I.size))


class ConvexityCuts:
    """Lazy source of the pairwise convexity rows.

    With ``fitted`` given, the function values are constants and only the
    subgradient block is variable (the minimum-norm problem); ``slack`` then
    relaxes every right-hand side.
    """

    def __init__(self, x: np.ndarray, base: QuadraticConicProgram, *, fitted=None,
                 slack: float = 0.0, initial: str = "auto"):
        self.x = np.asarray(x, dtype=float)
        self.n, self.d = self.x.shape
        self.base = base
        self.fitted = None if fitted is None else np.asarray(fitted, dtype=float)
        self.slack = slack
        self.initial = initial
        self.f_col = None if fitted is not None else 0
        self.beta_col = 0 if fitted is not None else self.n

    def base_problem(self):
        return self.base

    def initial_keys(self):
        n = self.n
        if self.initial == "empty" or n < 2:
            return np.zeros(0, dtype=np.int64)
        if self.d == 1 and self.initial in ("auto", "chain"):
            o = np.argsort(self.x[:, 0], kind="stable")
            a, b = o[:-1], o[1:]
        else:
            k = min(KNN_PAIRS, n - 1)
            _, nbr = cKDTree(self.x).query(self.x, k=k + 1)
            a = np.repeat(np.arange(n), k)
            b = nbr[:, 1:].ravel()
            ok = a != b
            a, b = a[ok], b[ok]
        return np.unique(np.concatenate([a * n + b, b * n + a]).astype(np.int64))

    def rows(self, keys):
        I, J = np.divmod(np.asarray(keys, dtype=np.int64), self.n)
        A = _pair_rows(self.x, I, J, self.f_col, self.beta_col, self.base.num_vars)
        if self.fitted is None:
            b = np.zeros(I.size)
        else:
            b = self.fitted[J] - self.fitted[I] + self.slack
        return A, b

    def violations(self, z, rows: slice):
        n, d = self.n, self.d
        f = self.fitted if self.fitted is not None else z[:n]
        B = z[self.beta_col:self.beta_col + n * d].reshape(n, d)
        Bi = B[rows]
        V = Bi @ self.x.T - np.einsum("ij,ij->i", Bi, self.x[rows])[:, None]
        V += f[rows, None] - f[None, :]
        idx = np.arange(n)[rows]
        V[np.arange(idx.size), idx] = -np.inf
        return V

    def most_violated(self, z, limit, tol):
        n = self.n
        keys, vals = [], []
        worst = 0.0
        for s in range(0, n, 512):
            V = self.violations(z, slice(s, s + 512))
            worst = max(worst, float(V.max()))
            flat = V.ravel()
            cand = np.flatnonzero(flat > tol)
            if cand.size > limit:
                cand = cand[np.argpartition(-flat[cand], limit - 1)[:limit]]
            rr, cc = np.divmod(cand, n)
            keys.append((rr + s) * n + cc)
            vals.append(flat[cand])
        keys = np.concatenate(keys).astype(np.int64)
        vals = np.concatenate(vals)
        order = np.argsort(-vals, kind="stable")[:limit]
        return keys[order], worst


def _solve(data, base, full_rows, *, fitted=None, slack=0.0, settings=None, method="auto",
           dense_threshold=DENSE_THRESHOLD, initial="auto"):
    if method == "auto":
        method = "dense" if data.n <= dense_threshold else "lazy"
    if method == "dense":
        A, b = full_rows
        sol = solve(base.with_rows(A, b), settings)
        return sol, {"method": "dense", "rounds": 1, "num_rows": int(b.size)}
    if method != "lazy":
        raise InvalidInput(f"unknown method {method!r}")
    src = ConvexityCuts(data.x, base, fitted=fitted, slack=slack, initial=initial)
    sol = solve_with_constraint_generation(src, settings)
    return sol, {"method": "lazy", "rounds": sol.info.get("rounds"),
                 "num_rows": int(np.size(sol.info.get("keys", [])))}


def _standardization(data: Dataset):
    mx = data.x.mean(axis=0)
    sx = float(np.sqrt(np.mean((data.x - mx) ** 2))) or 1.0
    my = float(data.y.mean())
    sy = float(data.y.std()) or 1.0
    return mx, sx, my, sy


def _scaled_config(config: EstimatorConfig, sx: float, sy: float) -> EstimatorConfig:
    k = sx / sy
    repl = {}
    if config.lam is not None:
        repl["lam"] = config.lam / sx ** 2
    if config.L is not None:
        repl["L"] = config.L * k
    if config.L0 is not None:
        repl["L0"] = config.L0 * k
    for name in ("b0", "l0", "u0"):
        if getattr(config, name) is not None:
            repl[name] = getattr(config, name) * k
    return dataclasses.replace(config, **repl)


def fit(data: Dataset, config: Optional[EstimatorConfig] = None, *,
        settings: Optional[SolverSettings] = None, method: str = "auto",
        dense_threshold: int = DENSE_THRESHOLD, standardize: bool = False) -> PwlModel:
    """Fit the max-affine least-squares estimator described by ``config``.

    ``method`` is ``"dense"`` (all n(n-1) rows), ``"lazy"`` (constraint
    generation) or ``"auto"`` (dense up to ``dense_threshold`` points).
    ``standardize`` centers both axes and rescales x by one common factor and
    y by its standard deviation; all bounds stay in raw units.
    """
    config = config or EstimatorConfig.cr()
    config.check_dim(data.d)
    work, cfg = data, config
    if standardize:
        mx, sx, my, sy = _standardization(data)
        work = Dataset((data.x - mx) / sx, (data.y - my) / sy)
        cfg = _scaled_config(config, sx, sy)

    base = _base_problem(work, cfg)
    n, d = work.n, work.d
    if method == "dense" or (method == "auto" and n <= dense_threshold):
        I, J = all_pairs(n)
        rows = (_pair_rows(work.x, I, J, 0, n, base.num_vars), np.zeros(I.size))
    else:
        rows = None
    sol, info = _solve(work, base, rows, settings=settings, method=method,
                       dense_threshold=dense_threshold)
    if not sol.optimal:
        raise FitError(f"{cfg.variant} fit failed: solver status {sol.status.value}, "
                       f"kkt residual {sol.kkt_residual:.3e}", sol)
    f = sol.z[:n]
    B = sol.z[n:].reshape(n, d)
    if cfg.min_norm_refinement:
        B = min_norm_subgradients(work, f, cfg, start=B, settings=settings, method=method,
                                  dense_threshold=dense_threshold)
    if standardize:
        f = my + sy * f
        B = B * (sy / sx)
    model = PwlModel(f, B, data.x, config)
    worst, _ = model.max_violation()
    if worst > 0.1 * TOL_FEAS:
        model = _representor_polish(model)
        worst, _ = model.max_violation()
    stats = {
        "sse": float(np.mean((data.y - f) ** 2)),
        "solver_status": sol.status.value,
        "kkt_residual": float(sol.kkt_residual),
        "iterations": int(sol.iterations),
        "max_violation": worst,
        **info,
    }
    return dataclasses.replace(model, fit_stats=stats)


def _representor_polish(model: PwlModel) -> PwlModel:
    """Re-anchor every piece on the max-affine function it belongs to.

    Anchor i takes the value of the fitted max-affine function at x_i and the
    slope of a piece attaining it, so each piece supports the function and the
    pairwise inequalities hold up to rounding. Values move by at most the
    largest violation, which at large response scales can exceed the absolute
    feasibility tolerance even for a solve at full relative accuracy.
    """
    k = model.active_piece(model.anchors)
    return PwlModel(model.predict(model.anchors), model.betas[k], model.anchors, model.config)


def lcr_fit(data: Dataset, L: float, **kw) -> PwlModel:
    """Lipschitz CR, fitted as ALCR with the reference vector at zero."""
    monotone = kw.pop("monotone", False)
    return fit(data, EstimatorConfig.alcr(np.zeros(data.d), L, monotone=monotone), **kw)


def min_norm_subgradients(data: Dataset, fitted_values, config: Optional[EstimatorConfig] = None,
                          *, start=None, settings: Optional[SolverSettings] = None,
                          method: str = "auto",
                          dense_threshold: int = DENSE_THRESHOLD) -> np.ndarray:
    """Subgradients of least total squared norm consistent with ``fitted_values``.

    Solves ``min sum ||beta_i||^2`` subject to
    ``f_j >= f_i + beta_i'(x_j - x_i)`` with the fitted values held fixed, plus
    the box/ball restrictions of ``config`` when given. ``start`` is an
    optional feasible set of subgradients (typically the primary fit's); it is
    returned instead whenever the refinement fails or does not lower the norm.
    """
    f = np.asarray(fitted_values, dtype=float).ravel()
    n, d = data.n, data.d
    if f.size != n:
        raise InvalidInput(f"{f.size} fitted values for n={n}")
    if not np.isfinite(f).all():
        raise InvalidInput("fitted values must be finite")
    if start is not None:
        start = np.asarray(start, dtype=float).reshape(n, d)
    try:
        B = _min_norm(data, f, config, settings, method, dense_threshold)
    except InvalidInput:
        if start is None:
            raise
        log.warning("minimum-norm refinement failed; keeping the given subgradients")
        return start
    if start is not None and np.sum(B ** 2) > np.sum(start ** 2):
        return start
    return B


def _min_norm(data, f, config, settings, method, dense_threshold):
    n, d = data.n, data.d
    N = n * d
    if config is not None:
        lo, hi, cones = _beta_constraints(config, n, d, 0, N)
    else:
        lo, hi, cones = None, None, ()
    # the slack absorbs the fitted values' own solver error so the feasible
    # set has an interior; the radii get the same relative slack
    slack = MIN_NORM_SLACK * (1.0 + np.max(np.abs(f)))
    balls = [SecondOrderCone(c.index_set, c.center, c.radius + MIN_NORM_SLACK * (1.0 + c.radius))
             for c in cones]
    base = QuadraticConicProgram(P=sp.identity(N, format="csr") * 2.0, q=np.zeros(N),
                                 A=None, b=None, lo=lo, hi=hi, soc=balls,
                                 blocks=np.arange(N).reshape(n, d))
    if method == "dense" or (method == "auto" and n <= dense_threshold):
        I, J = all_pairs(n)
        rows = (_pair_rows(data.x, I, J, None, 0, N), f[J] - f[I] + slack)
    else:
        rows = None
    sol, _ = _solve(data, base, rows, fitted=f, slack=slack, settings=settings,
                    method=method, dense_threshold=dense_threshold)
    # a ball nearly tangent to a pairwise halfspace leaves a sliver of a
    # feasible set whose multipliers blow up; the iterates still converge in
    # the primal, so a stalled run is kept if it passes the checks below
    if not (sol.optimal or sol.kkt_residual <= MIN_NORM_ACCEPT):
        raise InvalidInput(f"fitted values admit no consistent subgradients "
                           f"(solver status {sol.status.value})")
    B = sol.z.reshape(n, d)
    if not cones:
        box = None if lo is None else (lo.reshape(n, d), hi.reshape(n, d))
        B = _polish_min_norm(data.x, f, B, box, slack)
    worst, (i, j) = PwlModel(f, B, data.x).max_violation()
    if worst > TOL_FEAS + 2 * slack:
        raise InvalidInput(f"fitted values are not convex-consistent: pair ({i}, {j}) "
                           f"violated by {worst:.3e}")
    for c in cones:
        excess = np.linalg.norm(sol.z[c.index_set] - c.center) - c.radius
        if excess > TOL_FEAS:
            raise InvalidInput(f"subgradient ball exceeded by {excess:.3e}")
    return B


def _polish_min_norm(x, f, B, box, slack):
    """Replace interior-point subgradients by exact projections where certified.

    Anchor i's problem is the projection of 0 onto ``{b : A b <= c}``. The rows
    nearly tight at the interior-point answer are taken as active, the
    least-norm point on them is computed, and it is kept only if it is
    feasible and minus it lies in the cone spanned by the active rows.
    """
    n, d = B.shape
    out = B.copy()
    eye = np.eye(d)
    for i in range(n):
        A = np.delete(x - x[i], i, axis=0)
        c0 = np.delete(f - f[i], i)
        if box is not None:
            lo, hi = box[0][i], box[1][i]
            up, dn = np.isfinite(hi), np.isfinite(lo)
            A = np.vstack([A, eye[up], -eye[dn]])
            c0 = np.concatenate([c0, hi[up], -lo[dn]])
        c = c0.copy()
        c[:x.shape[0] - 1] += slack
        scale = 1.0 + np.max(np.abs(c), initial=0.0)
        active = c - A @ B[i] <= 1e-6 * scale
        cand = _least_norm_on(A, c, active, scale)
        if cand is not None and cand @ cand <= B[i] @ B[i] + 1e-9 * (1.0 + B[i] @ B[i]):
            out[i] = cand
    return out


def _least_norm_on(A, c, active, scale):
    """Least-norm point of ``{b : A b <= c}`` if ``active`` is its active set."""
    if active.any():
        cand = np.linalg.lstsq(A[active], c[active], rcond=None)[0]
    else:
        cand = np.zeros(A.shape[1])
    if np.any(A @ cand > c + 1e-12 * scale):
        return None
    if active.any():
        _, res = optimize.nnls(A[active].T, -cand)
        if res > 1e-9 * (1.0 + np.linalg.norm(cand)):
            return None
    return cand


def affine_fit(data: Dataset, slope) -> np.ndarray:
    """Least-squares fitted values of an affine function with fixed slope."""
    b = np.asarray(slope, dtype=float).ravel()
    r = data.y - data.x @ b
    return r.mean() + data.x @ b
