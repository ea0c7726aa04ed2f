"""Primal-dual interior-point solver for convex quadratic cone programs.

Problems have the form::

    minimize    1/2 z'Pz + q'z
    subject to  A z <= b
                lo <= z <= hi
                ||z[idx_k] - c_k|| <= r_k        k = 1, ..., K

Internally every constraint is mapped to ``G z + s = h`` with ``s`` in a
product of the nonnegative orthant and second-order cones, and the problem is
solved by an infeasible-start Mehrotra predictor-corrector method with
Nesterov-Todd scaling (the scaling reduces to ``sqrt(s/z)`` on the orthant).
"""

from __future__ import annotations

import dataclasses
import enum
import json
import logging
from typing import Protocol, Sequence

import numpy as np
from scipy import linalg, optimize
from scipy.linalg import lapack
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    MAX_ITERS = "MaxIters"
    NUMERICAL_FAILURE = "NumericalFailure"
    INFEASIBLE = "Infeasible"


@dataclasses.dataclass(frozen=True)
class SolverSettings:
    tol_kkt: float = 1e-8
    max_iters: int = 200
    static_reg: float = 1e-9
    # once tol_kkt is met, keep iterating toward tol_target for at most
    # extra_iters steps; fitted values are only accurate to about the square
    # root of the gap on degenerate problems
    tol_target: float = 1e-14
    extra_iters: int = 12
    # refine on the identified active set (small problems only)
    polish: bool = True


@dataclasses.dataclass(frozen=True, eq=False)
class SecondOrderCone:
    """The constraint ``||z[index_set] - center|| <= radius``."""

    index_set: np.ndarray
    center: np.ndarray
    radius: float

    def __post_init__(self):
        idx = np.asarray(self.index_set, dtype=np.int64).ravel()
        center = np.asarray(self.center, dtype=float).ravel()
        if idx.size == 0 or center.shape != idx.shape:
            raise ValueError("cone index_set and center must be non-empty and of equal length")
        if not self.radius >= 0 or not np.isfinite(self.radius):
            raise ValueError(f"cone radius must be finite and >= 0, got {self.radius}")
        object.__setattr__(self, "index_set", idx)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "radius", float(self.radius))


@dataclasses.dataclass(frozen=True, eq=False)
class QuadraticConicProgram:
    P: sp.csr_matrix
    q: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    soc: tuple[SecondOrderCone, ...] = ()
    blocks: np.ndarray | None = None

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).ravel()
        n = q.size
        P = sp.csr_matrix(self.P, dtype=float)
        if P.shape != (n, n):
            raise ValueError(f"P has shape {P.shape}, expected {(n, n)}")
        asym = abs(P - P.T)
        if asym.nnz and asym.max() > 1e-12:
            raise ValueError("P is not symmetric")
        A = sp.csr_matrix(self.A, dtype=float) if self.A is not None else sp.csr_matrix((0, n))
        b = np.asarray(self.b if self.b is not None else [], dtype=float).ravel()
        if A.shape[1] != n or A.shape[0] != b.size:
            raise ValueError(f"A has shape {A.shape}, b has length {b.size}, num_vars {n}")
        lo = np.full(n, -np.inf) if self.lo is None else np.asarray(self.lo, dtype=float).ravel()
        hi = np.full(n, np.inf) if self.hi is None else np.asarray(self.hi, dtype=float).ravel()
        if lo.shape != (n,) or hi.shape != (n,):
            raise ValueError("box bounds must have length num_vars")
        if np.isnan(lo).any() or np.isnan(hi).any():
            raise ValueError("box bounds contain NaN")
        if not (np.isfinite(q).all() and np.isfinite(b).all()):
            raise ValueError("q and b must be finite")
        for cone in self.soc:
            if cone.index_set.min() < 0 or cone.index_set.max() >= n:
                raise ValueError("cone index out of range")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "soc", tuple(self.soc))
        if self.blocks is not None:
            blocks = np.asarray(self.blocks, dtype=np.int64)
            if blocks.ndim != 2 or (blocks.size and (blocks.min() < 0 or blocks.max() >= n)):
                raise ValueError("blocks must be a 2-d array of variable indices")
            if np.unique(blocks).size != blocks.size:
                raise ValueError("blocks must not repeat a variable")
            object.__setattr__(self, "blocks", blocks)

    @property
    def num_vars(self) -> int:
        return self.q.size

    def objective(self, z: np.ndarray) -> float:
        return float(0.5 * z @ (self.P @ z) + self.q @ z)

    def with_rows(self, A_extra, b_extra) -> "QuadraticConicProgram":
        """A copy with extra linear inequality rows appended."""
        A = sp.vstack([self.A, sp.csr_matrix(A_extra)], format="csr")
        b = np.concatenate([self.b, np.asarray(b_extra, dtype=float).ravel()])
        return dataclasses.replace(self, A=A, b=b)

    def dump(self, path) -> None:
        """Write the problem as JSON for offline reproduction."""
        A = self.A.tocoo()
        P = self.P.tocoo()
        doc = {
            "schema": "cvxreg-qcp/1",
            "num_vars": self.num_vars,
            "P": {"row": P.row.tolist(), "col": P.col.tolist(), "val": P.data.tolist()},
            "q": self.q.tolist(),
            "A": {"row": A.row.tolist(), "col": A.col.tolist(), "val": A.data.tolist(),
                  "shape": list(self.A.shape)},
            "b": self.b.tolist(),
            "lo": [None if not np.isfinite(v) else v for v in self.lo],
            "hi": [None if not np.isfinite(v) else v for v in self.hi],
            "soc": [{"index_set": c.index_set.tolist(), "center": c.center.tolist(),
                     "radius": c.radius} for c in self.soc],
            "blocks": None if self.blocks is None else self.blocks.tolist(),
        }
        with open(path, "w") as fh:
            json.dump(doc, fh)


@dataclasses.dataclass(frozen=True, eq=False)
class Solution:
    z: np.ndarray
    objective: float
    status: Status
    kkt_residual: float
    iterations: int
    lin_duals: np.ndarray
    lo_duals: np.ndarray
    hi_duals: np.ndarray
    soc_duals: tuple[np.ndarray, ...] = ()
    info: dict = dataclasses.field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


class InvalidProblem(ValueError):
    pass


# --------------------------------------------------------------------------
# Independent optimality certificate


def kkt_residuals(problem: QuadraticConicProgram, sol: Solution) -> dict:
    """Recompute normalized KKT residuals from the original problem data.

    Works directly on ``A, b, lo, hi`` and the cone list, not on the solver's
    internal canonical form, so it can be used to audit a solution.
    """
    z = sol.z
    lam, mlo, mhi = sol.lin_duals, sol.lo_duals, sol.hi_duals
    grad = problem.P @ z + problem.q + problem.A.T @ lam - mlo + mhi
    viol = [0.0]
    dual_viol = [0.0]
    comp = 0.0
    scale_h = [0.0]
    if problem.b.size:
        slack = problem.b - problem.A @ z
        viol.append(np.max(-slack))
        dual_viol.append(np.max(-lam))
        comp += np.sum(np.abs(lam * slack))
        scale_h.append(np.max(np.abs(problem.b)))
    flo = np.isfinite(problem.lo)
    fhi = np.isfinite(problem.hi)
    if flo.any():
        viol.append(np.max(problem.lo[flo] - z[flo]))
        comp += np.sum(np.abs(mlo[flo] * (z[flo] - problem.lo[flo])))
        scale_h.append(np.max(np.abs(problem.lo[flo])))
    if fhi.any():
        viol.append(np.max(z[fhi] - problem.hi[fhi]))
        comp += np.sum(np.abs(mhi[fhi] * (problem.hi[fhi] - z[fhi])))
        scale_h.append(np.max(np.abs(problem.hi[fhi])))
    dual_viol.append(np.max(-mlo) if mlo.size else 0.0)
    dual_viol.append(np.max(-mhi) if mhi.size else 0.0)
    if np.any(mlo[~flo] != 0) or np.any(mhi[~fhi] != 0):
        dual_viol.append(max(np.max(np.abs(mlo[~flo]), initial=0.0),
                             np.max(np.abs(mhi[~fhi]), initial=0.0)))
    for cone, y in zip(problem.soc, sol.soc_duals):
        u = cone.center - z[cone.index_set]
        viol.append(np.linalg.norm(u) - cone.radius)
        dual_viol.append(np.linalg.norm(y[1:]) - y[0])
        np.add.at(grad, cone.index_set, y[1:])
        comp += abs(y[0] * cone.radius + y[1:] @ u)
        scale_h.append(max(cone.radius, np.max(np.abs(cone.center))))
    primal = max(0.0, max(viol)) / (1.0 + max(scale_h))
    dual = max(np.max(np.abs(grad), initial=0.0), max(0.0, max(dual_viol)))
    dual /= 1.0 + np.max(np.abs(problem.q), initial=0.0)
    obj = problem.objective(z)
    compl = comp / (1.0 + abs(obj))
    return {"primal": float(primal), "dual": float(dual), "complementarity": float(compl),
            "max": float(max(primal, dual, compl))}


def duality_gap(problem: QuadraticConicProgram, sol: Solution) -> float:
    """Primal minus Lagrangian-dual objective at the returned primal-dual pair."""
    z = sol.z
    pobj = problem.objective(z)
    dobj = -0.5 * z @ (problem.P @ z) - problem.b @ sol.lin_duals
    flo = np.isfinite(problem.lo)
    fhi = np.isfinite(problem.hi)
    dobj += problem.lo[flo] @ sol.lo_duals[flo] - problem.hi[fhi] @ sol.hi_duals[fhi]
    for cone, y in zip(problem.soc, sol.soc_duals):
        dobj -= y[0] * cone.radius + y[1:] @ cone.center
    return float(pobj - dobj)


# --------------------------------------------------------------------------
# Presolve: eliminate variables fixed by degenerate boxes or zero-radius cones


@dataclasses.dataclass
class _Presolved:
    free: np.ndarray            # indices of free variables in the original problem
    fixed_val: np.ndarray       # full-length vector holding fixed values (0 elsewhere)
    fixed_by_cone: np.ndarray   # -1 or index of the cone that fixed the variable
    row_keep: np.ndarray        # original A rows that still involve free variables
    cones: list                 # (orig cone index, free local positions, reduced cone data)
    infeasible: str | None = None


def _presolve(pr: QuadraticConicProgram, tol: float) -> _Presolved:
    n = pr.num_vars
    fixed = np.zeros(n, dtype=bool)
    fixed_val = np.zeros(n)
    fixed_by_cone = np.full(n, -1)
    bad = np.isfinite(pr.lo) & np.isfinite(pr.hi) & (pr.lo > pr.hi)
    if bad.any():
        j = int(np.flatnonzero(bad)[0])
        return _Presolved(np.arange(n), fixed_val, fixed_by_cone, np.arange(0), [],
                          infeasible=f"box on variable {j} has lo > hi")
    eq = np.isfinite(pr.lo) & (pr.lo == pr.hi)
    fixed[eq] = True
    fixed_val[eq] = pr.lo[eq]

    def fix(idx, vals, k):
        for j, v in zip(idx, vals):
            if fixed[j]:
                if abs(fixed_val[j] - v) > tol * (1 + abs(v)):
                    return f"variable {j} fixed to conflicting values"
                continue
            if v < pr.lo[j] - tol * (1 + abs(v)) or v > pr.hi[j] + tol * (1 + abs(v)):
                return f"cone {k} forces variable {j} outside its box"
            fixed[j] = True
            fixed_val[j] = v
            fixed_by_cone[j] = k
        return None

    alive = list(range(len(pr.soc)))
    changed = True
    while changed:
        changed = False
        still = []
        for k in alive:
            cone = pr.soc[k]
            fx = fixed[cone.index_set]
            r2 = cone.radius ** 2 - np.sum((fixed_val[cone.index_set[fx]] - cone.center[fx]) ** 2)
            slack = tol * (1 + cone.radius ** 2)
            if r2 < -slack:
                return _Presolved(np.arange(n), fixed_val, fixed_by_cone, np.arange(0), [],
                                  infeasible=f"cone {k} cannot be satisfied by fixed variables")
            if fx.all():
                changed = True
                continue
            if r2 <= slack * 1e-3 or cone.radius == 0.0:
                msg = fix(cone.index_set[~fx], cone.center[~fx], k)
                if msg:
                    return _Presolved(np.arange(n), fixed_val, fixed_by_cone, np.arange(0), [],
                                      infeasible=msg)
                changed = True
                continue
            still.append(k)
        alive = still

    free = np.flatnonzero(~fixed)
    pos = np.full(n, -1)
    pos[free] = np.arange(free.size)
    cones = []
    for k in alive:
        cone = pr.soc[k]
        fx = fixed[cone.index_set]
        r2 = cone.radius ** 2 - np.sum((fixed_val[cone.index_set[fx]] - cone.center[fx]) ** 2)
        cones.append((k, np.flatnonzero(~fx), pos[cone.index_set[~fx]],
                      cone.center[~fx], float(np.sqrt(max(r2, 0.0)))))
    if pr.A.shape[0]:
        touches = np.asarray(abs(pr.A[:, free]).sum(axis=1)).ravel() > 0
        row_keep = np.flatnonzero(touches)
        dead = np.flatnonzero(~touches)
        if dead.size:
            resid = pr.b[dead] - pr.A[dead] @ fixed_val
            worst = np.argmin(resid)
            if resid[worst] < -tol * (1 + abs(pr.b[dead][worst])):
                return _Presolved(free, fixed_val, fixed_by_cone, row_keep, cones,
                                  infeasible=f"row {int(dead[worst])} violated by fixed variables")
    else:
        row_keep = np.arange(0)
    return _Presolved(free, fixed_val, fixed_by_cone, row_keep, cones)


# --------------------------------------------------------------------------
# Cone algebra on the product cone R+^l x Q^{m_1} x ... (cones grouped by size)


def _jdet(U):
    """u0^2 - |u1|^2 per row, factored to limit cancellation."""
    r = np.linalg.norm(U[:, 1:], axis=1)
    return (U[:, 0] - r) * (U[:, 0] + r)


class _Cones:
    def __init__(self, l: int, sizes: Sequence[int]):
        self.l = l
        self.groups = []  # (offset, count, dim)
        order = []
        off = l
        sizes = np.asarray(sizes, dtype=int)
        for m in np.unique(sizes):
            members = np.flatnonzero(sizes == m)
            self.groups.append((off, members.size, int(m)))
            order.append(members)
            off += members.size * int(m)
        self.order = np.concatenate(order) if order else np.zeros(0, dtype=int)
        self.dim = off
        self.degree = l + len(sizes)

    def blocks(self, u):
        for off, k, m in self.groups:
            yield u[off:off + k * m].reshape(k, m)

    def identity(self):
        e = np.zeros(self.dim)
        e[:self.l] = 1.0
        for blk in self.blocks(e):
            blk[:, 0] = 1.0
        return e

    def min_eig(self, u):
        vals = [np.min(u[:self.l])] if self.l else []
        for blk in self.blocks(u):
            vals.append(np.min(blk[:, 0] - np.linalg.norm(blk[:, 1:], axis=1)))
        return min(vals) if vals else np.inf

    def prod(self, u, v):
        out = np.empty_like(u)
        out[:self.l] = u[:self.l] * v[:self.l]
        for (off, k, m), U, V in zip(self.groups, self.blocks(u), self.blocks(v)):
            O = out[off:off + k * m].reshape(k, m)
            O[:, 0] = np.sum(U * V, axis=1)
            O[:, 1:] = U[:, :1] * V[:, 1:] + V[:, :1] * U[:, 1:]
        return out

    def div(self, lam, r, dets=None):
        """Solve lam o x = r for x."""
        out = np.empty_like(r)
        out[:self.l] = r[:self.l] / lam[:self.l]
        for g, ((off, k, m), L, R) in enumerate(zip(self.groups, self.blocks(lam), self.blocks(r))):
            O = out[off:off + k * m].reshape(k, m)
            l0, l1 = L[:, 0], L[:, 1:]
            det = _jdet(L) if dets is None else dets[g]
            x0 = (l0 * R[:, 0] - np.sum(l1 * R[:, 1:], axis=1)) / det
            O[:, 0] = x0
            O[:, 1:] = (R[:, 1:] - x0[:, None] * l1) / l0[:, None]
        return out

    def max_step(self, u, du):
        """Largest alpha with u + alpha*du in the cone (u interior)."""
        alpha = np.inf
        if self.l:
            neg = du[:self.l] < 0
            if neg.any():
                alpha = np.min(-u[:self.l][neg] / du[:self.l][neg])
        for U, D in zip(self.blocks(u), self.blocks(du)):
            a = D[:, 0] ** 2 - np.sum(D[:, 1:] ** 2, axis=1)
            bb = U[:, 0] * D[:, 0] - np.sum(U[:, 1:] * D[:, 1:], axis=1)
            c = U[:, 0] ** 2 - np.sum(U[:, 1:] ** 2, axis=1)
            c = np.maximum(c, 0.0)
            disc = np.maximum(bb ** 2 - a * c, 0.0)
            root = np.full(a.shape, np.inf)
            # smallest positive root of a t^2 + 2 bb t + c, written stably
            with np.errstate(divide="ignore", invalid="ignore"):
                t_lin = np.where(bb < 0, -c / (2 * bb), np.inf)
                t_quad = np.where(bb < 0, c / (-bb + np.sqrt(disc)),
                                  np.where(a < 0, (-bb - np.sqrt(disc)) / a, np.inf))
            root = np.where(a == 0, t_lin, t_quad)
            root = np.where((a > 0) & (bb >= 0), np.inf, root)
            root = np.where(np.isnan(root) | (root < 0), 0.0, root)
            # the leading component must also stay nonnegative
            with np.errstate(divide="ignore", invalid="ignore"):
                t0 = np.where(D[:, 0] < 0, -U[:, 0] / D[:, 0], np.inf)
            if root.size:
                alpha = min(alpha, float(np.min(np.minimum(root, t0))))
        return alpha


class _Scaling:
    """Nesterov-Todd scaling W (symmetric) with W z = W^{-1} s = lam."""

    def __init__(self, cones: _Cones, s, z):
        self.cones = cones
        l = cones.l
        self.d = np.sqrt(s[:l] / z[:l])
        self.W = []
        self.Winv = []
        self.lam_blocks = []
        self.lam_det = []
        for S, Z in zip(cones.blocks(s), cones.blocks(z)):
            sJs = np.maximum(_jdet(S), 1e-300)
            zJz = np.maximum(_jdet(Z), 1e-300)
            sn = S / np.sqrt(sJs)[:, None]
            zn = Z / np.sqrt(zJz)[:, None]
            gamma = np.sqrt(np.maximum((1.0 + np.sum(sn * zn, axis=1)) / 2.0, 1e-300))
            w = sn.copy()
            w[:, 0] += zn[:, 0]
            w[:, 1:] -= zn[:, 1:]
            w /= (2 * gamma)[:, None]
            beta = (sJs / zJz) ** 0.25
            k, m = S.shape
            w0, w1 = w[:, 0], w[:, 1:]
            H = np.zeros((k, m, m))
            H[:, 0, 0] = w0
            H[:, 0, 1:] = w1
            H[:, 1:, 0] = w1
            H[:, 1:, 1:] = (np.eye(m - 1)[None]
                            + w1[:, :, None] * w1[:, None, :] / (1 + w0)[:, None, None])
            Hi = H.copy()
            Hi[:, 0, 1:] *= -1
            Hi[:, 1:, 0] *= -1
            # lam = W z in closed form; its determinant is sqrt(sJs zJz)
            s0, z0 = sn[:, 0], zn[:, 0]
            lb = np.empty_like(sn)
            lb[:, 0] = gamma
            lb[:, 1:] = (((gamma + z0)[:, None] * sn[:, 1:] + (gamma + s0)[:, None] * zn[:, 1:])
                         / (s0 + z0 + 2 * gamma)[:, None])
            scale = (sJs * zJz) ** 0.25
            self.lam_blocks.append(lb * scale[:, None])
            self.lam_det.append(scale ** 2)
            self.W.append(beta[:, None, None] * H)
            self.Winv.append(Hi / beta[:, None, None])
        self.dinv2 = 1.0 / self.d ** 2
        self.lam = np.empty(cones.dim)
        self.lam[:l] = np.sqrt(s[:l] * z[:l])
        for (off, k, m), lb in zip(cones.groups, self.lam_blocks):
            self.lam[off:off + k * m] = lb.ravel()
        self.Dinv2 = [np.einsum("kij,kjl->kil", Wi, Wi) for Wi in self.Winv]

    def _blockwise(self, u, diag, mats):
        out = np.empty_like(u)
        l = self.cones.l
        out[:l] = u[:l] * diag
        for (off, k, m), B, U in zip(self.cones.groups, mats, self.cones.blocks(u)):
            out[off:off + k * m] = np.einsum("kij,kj->ki", B, U).ravel()
        return out

    def apply(self, u, inverse=False):
        if inverse:
            return self._blockwise(u, 1.0 / self.d, self.Winv)
        return self._blockwise(u, self.d, self.W)

    def apply_inv2(self, u):
        """W^{-2} u."""
        return self._blockwise(u, self.dinv2, self.Dinv2)


class _Assembler:
    """Linear maps from the scaling weights to the reduced matrix ``P + G'W^{-2}G``.

    The weights are ``1/d^2`` on the orthant rows followed by the trailing
    ``(m-1) x (m-1)`` blocks of ``W^{-2}`` on each cone. Every matrix entry is a
    fixed linear combination of them, so each iteration costs one sparse
    matrix-vector product per target.

    When ``blocks`` is given (rows of variable indices that no constraint or
    cone couples to another row), those variables are eliminated blockwise and
    only the Schur complement on the remaining variables is factored.
    """

    def __init__(self, P: sp.csr_matrix, G: sp.csr_matrix, cones: _Cones,
                 blocks: np.ndarray | None = None):
        n = P.shape[0]
        self.n = n
        r, c, coef, src = self._entries(G, cones)
        Pc = P.tocoo()
        self.nw = cones.l + sum(k * (m - 1) ** 2 for _, k, m in cones.groups)
        self.mode = "dense"
        if blocks is not None and blocks.size and self._setup_schur(blocks, Pc, r, c, coef, src):
            self.mode = "schur"
            return
        dest = r * n + c
        pdest = Pc.row.astype(np.int64) * n + Pc.col
        uniq = np.unique(np.concatenate([dest, pdest]))
        if n > 200 and uniq.size < 0.15 * n * n:
            self.mode = "sparse"
            self.rc = np.divmod(uniq, n)
            self.K = self._map(np.searchsorted(uniq, dest), src, coef, uniq.size)
            self.p0 = np.bincount(np.searchsorted(uniq, pdest), weights=Pc.data,
                                  minlength=uniq.size)
        else:
            self.K = self._map(dest, src, coef, n * n)
            self.p0 = np.bincount(pdest, weights=Pc.data, minlength=n * n)

    def _map(self, dest, src, coef, size):
        return sp.csr_matrix((coef, (dest, src)), shape=(size, self.nw))

    @staticmethod
    def _entries(G, cones):
        """(row, col, coefficient, weight index) for every product g_a g_b."""
        l = cones.l
        Gl = G[:l].tocsr()
        Gl.sort_indices()
        counts = np.diff(Gl.indptr)
        R, C, V, S = [], [], [], []
        for cnt in np.unique(counts):
            if cnt == 0:
                continue
            rows = np.flatnonzero(counts == cnt)
            pos = Gl.indptr[rows][:, None] + np.arange(cnt)[None, :]
            idx = Gl.indices[pos]
            val = Gl.data[pos]
            R.append(np.repeat(idx, cnt, axis=1).ravel())
            C.append(np.tile(idx, (1, cnt)).ravel())
            V.append((val[:, :, None] * val[:, None, :]).ravel())
            S.append(np.repeat(rows, cnt * cnt))
        Gc = G.tocsr()
        woff = l
        for off, k, m in cones.groups:
            rr = (off + np.arange(k)[:, None] * m + np.arange(1, m)[None, :]).ravel()
            if np.any(np.diff(Gc.indptr)[rr] != 1):
                raise ValueError("cone rows must each involve exactly one variable")
            idx = Gc.indices[Gc.indptr[rr]].reshape(k, m - 1)
            val = Gc.data[Gc.indptr[rr]].reshape(k, m - 1)
            R.append(np.repeat(idx[:, :, None], m - 1, axis=2).ravel())
            C.append(np.repeat(idx[:, None, :], m - 1, axis=1).ravel())
            V.append((val[:, :, None] * val[:, None, :]).ravel())
            S.append(woff + np.arange(k * (m - 1) ** 2))
            woff += k * (m - 1) ** 2
        cat = (lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dtype=dt))
        return (cat(R, np.int64), cat(C, np.int64), cat(V, float), cat(S, np.int64))

    def _setup_schur(self, blocks, Pc, r, c, coef, src) -> bool:
        n = self.n
        k, b = blocks.shape
        group = np.full(n, -1)
        slot = np.full(n, -1)
        group[blocks.ravel()] = np.repeat(np.arange(k), b)
        slot[blocks.ravel()] = np.tile(np.arange(b), k)
        F = np.flatnonzero(group < 0)
        fpos = np.full(n, -1)
        fpos[F] = np.arange(F.size)
        rows = np.concatenate([r, Pc.row.astype(np.int64)])
        cols = np.concatenate([c, Pc.col.astype(np.int64)])
        gr, gc = group[rows], group[cols]
        if np.any((gr >= 0) & (gc >= 0) & (gr != gc)):
            log.debug("block hint rejected: groups are coupled")
            return False
        nf, kb = F.size, k * b
        is_p = np.r_[np.zeros(r.size, dtype=bool), np.ones(Pc.nnz, dtype=bool)]
        vals = np.concatenate([coef, Pc.data])
        srcs = np.concatenate([src, np.zeros(Pc.nnz, dtype=np.int64)])

        def target(mask, dest, size):
            K = self._map(dest[mask & ~is_p], srcs[mask & ~is_p], vals[mask & ~is_p], size)
            p0 = np.bincount(dest[mask & is_p], weights=vals[mask & is_p], minlength=size)
            return K, p0

        ff = (gr < 0) & (gc < 0)
        fb = (gr < 0) & (gc >= 0)
        bb = (gr >= 0) & (gc >= 0)
        self.KFF, self.pFF = target(ff, fpos[rows] * nf + fpos[cols], nf * nf)
        self.KFB, self.pFB = target(fb, fpos[rows] * kb + gc * b + slot[cols], nf * kb)
        self.KBB, self.pBB = target(bb, gr * b * b + slot[rows] * b + slot[cols], k * b * b)
        self.F = F
        self.B = blocks.ravel()
        self.k, self.b = k, b
        return True

    def weights(self, dl, Dsoc):
        return np.concatenate([dl, *[D[:, 1:, 1:].ravel() for D in Dsoc]])

    def assemble(self, dl, Dsoc):
        """The reduced matrix (dense or sparse modes only)."""
        w = self.weights(dl, Dsoc)
        vals = self.p0 + self.K @ w
        if self.mode == "sparse":
            return sp.csc_matrix((vals, self.rc), shape=(self.n, self.n))
        return vals.reshape(self.n, self.n)


class _NewtonSystem:
    """Factorization of the regularized reduced KKT matrix.

    Dense Cholesky, sparse LU, or block elimination followed by a dense
    Cholesky of the Schur complement, depending on the assembler mode.
    """

    def __init__(self, asm: _Assembler, scaling: _Scaling, reg: float):
        self.asm = asm
        self.mode = asm.mode
        shift = reg
        for _ in range(6):
            try:
                self._factor(scaling, shift)
                self.shift = shift
                return
            except (np.linalg.LinAlgError, RuntimeError, ValueError):
                shift = max(shift * 100, 1e-12)
        raise np.linalg.LinAlgError("reduced KKT matrix could not be factored")

    def _factor(self, scaling, shift):
        asm = self.asm
        n = asm.n
        if self.mode == "schur":
            w = asm.weights(scaling.dinv2, scaling.Dinv2)
            nf, k, b = asm.F.size, asm.k, asm.b
            MFF = (asm.pFF + asm.KFF @ w).reshape(nf, nf)
            MFB = (asm.pFB + asm.KFB @ w).reshape(nf, k * b)
            MBB = (asm.pBB + asm.KBB @ w).reshape(k, b, b)
            self.MFF, self.MFB, self.MBB = MFF, MFB, MBB
            eye = np.eye(b)[None] * shift
            MBBr = MBB + eye
            np.linalg.cholesky(MBBr)  # positive definiteness check
            self.iBB = np.linalg.inv(MBBr)
            if nf:
                Z = np.linalg.solve(MBBr, MFB.reshape(nf, k, b).transpose(1, 2, 0))
                self.Z = Z.reshape(k * b, nf)
                S = MFF - MFB @ self.Z
                S = 0.5 * (S + S.T)
                S.flat[::nf + 1] += shift
                c, info = lapack.dpotrf(S, lower=1, overwrite_a=1, clean=0)
                if info != 0:
                    raise np.linalg.LinAlgError("Schur complement not positive definite")
                self.c = c
            return
        M = asm.assemble(scaling.dinv2, scaling.Dinv2)
        self.M = M
        if self.mode == "sparse":
            Mreg = (M + shift * sp.identity(n, format="csc")).tocsc()
            self.lu = spla.splu(Mreg, permc_spec="MMD_AT_PLUS_A")
            if not np.isfinite(self.lu.U.diagonal()).all():
                raise np.linalg.LinAlgError("non-finite factor")
        else:
            Mreg = M.copy()
            Mreg.flat[::n + 1] += shift
            c, info = lapack.dpotrf(Mreg, lower=1, overwrite_a=1, clean=0)
            if info != 0:
                raise np.linalg.LinAlgError("matrix not positive definite")
            self.c = c

    def matvec(self, x):
        """Product with the unregularized matrix."""
        if self.mode != "schur":
            return self.M @ x
        asm = self.asm
        xF, xB = x[asm.F], x[asm.B]
        y = np.empty_like(x)
        y[asm.F] = self.MFF @ xF + self.MFB @ xB
        y[asm.B] = (self.MFB.T @ xF
                    + np.matmul(self.MBB, xB.reshape(asm.k, asm.b, 1)).ravel())
        return y

    def _base(self, r):
        if self.mode == "sparse":
            return self.lu.solve(r)
        if self.mode == "dense":
            x, _ = lapack.dpotrs(self.c, r, lower=1)
            return x
        asm = self.asm
        tB = np.matmul(self.iBB, r[asm.B].reshape(asm.k, asm.b, 1)).ravel()
        x = np.empty_like(r)
        if asm.F.size:
            xF, _ = lapack.dpotrs(self.c, r[asm.F] - self.MFB @ tB, lower=1)
            x[asm.F] = xF
            x[asm.B] = tB - self.Z @ xF
        else:
            x[asm.B] = tB
        return x

    def solve(self, r):
        x = self._base(r)
        return x + self._base(r - self.matvec(x))


def _canonical(pr: QuadraticConicProgram, pre: _Presolved):
    """Build (P, q, G, h, cones) for the free variables."""
    free = pre.free
    xf = pre.fixed_val
    P = pr.P[free][:, free].tocsr()
    fixed_mask = np.ones(pr.num_vars, dtype=bool)
    fixed_mask[free] = False
    q = pr.q[free] + (pr.P[free] @ np.where(fixed_mask, xf, 0.0))
    blocks = []
    hs = []
    A = pr.A[pre.row_keep]
    if A.shape[0]:
        blocks.append(A[:, free])
        hs.append(pr.b[pre.row_keep] - A @ np.where(fixed_mask, xf, 0.0))
    lo = pr.lo[free]
    hi = pr.hi[free]
    ilo = np.flatnonzero(np.isfinite(lo))
    ihi = np.flatnonzero(np.isfinite(hi))
    nf = free.size
    if ilo.size:
        blocks.append(sp.csr_matrix((-np.ones(ilo.size), (np.arange(ilo.size), ilo)),
                                    shape=(ilo.size, nf)))
        hs.append(-lo[ilo])
    if ihi.size:
        blocks.append(sp.csr_matrix((np.ones(ihi.size), (np.arange(ihi.size), ihi)),
                                    shape=(ihi.size, nf)))
        hs.append(hi[ihi])
    l = sum(b.shape[0] for b in blocks)
    sizes = [c[2].size + 1 for c in pre.cones]
    cones = _Cones(l, sizes)
    if pre.cones:
        rows, cols, hsoc = [], [], np.zeros(cones.dim - l)
        ordered = [pre.cones[i] for i in cones.order]
        start = 0
        for (_, _, local, center, radius) in ordered:
            m = local.size + 1
            hsoc[start] = radius
            hsoc[start + 1:start + m] = center
            rows.append(start + 1 + np.arange(local.size))
            cols.append(local)
            start += m
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        blocks.append(sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(cones.dim - l, nf)))
        hs.append(hsoc)
    if blocks:
        G = sp.vstack(blocks, format="csr")
        h = np.concatenate(hs)
    else:
        G = sp.csr_matrix((0, nf))
        h = np.zeros(0)
    return P, q, G, h, cones, ilo, ihi


def _free_blocks(blocks, free, n):
    """Block hint in free-variable numbering; groups losing a member are dropped."""
    if blocks is None:
        return None
    pos = np.full(n, -1)
    pos[free] = np.arange(free.size)
    mapped = pos[blocks]
    return mapped[np.all(mapped >= 0, axis=1)]


def _ipm(P, q, G, h, cones: _Cones, settings: SolverSettings, blocks=None):
    tol = settings.tol_kkt
    e = cones.identity()
    nq = 1.0 + np.max(np.abs(q), initial=0.0)
    nh = 1.0 + np.max(np.abs(h), initial=0.0)
    GT = G.T.tocsr()
    asm = _Assembler(P, G, cones, blocks)

    # initial point from the W = I system
    W = _Scaling(cones, e, e)
    kkt = _NewtonSystem(asm, W, settings.static_reg)
    x = kkt.solve(-q + GT @ h)
    s = h - G @ x
    z = -s.copy()
    scale = max(1.0, np.max(np.abs(s), initial=0.0))
    ts = cones.min_eig(s)
    if ts <= 1e-8 * scale:
        s = s + (1.0 - ts) * e
    tz = cones.min_eig(z)
    if tz <= 1e-8 * scale:
        z = z + (1.0 - tz) * e

    best = None
    status = Status.MAX_ITERS
    it = 0
    stall = 0
    met = None
    for it in range(settings.max_iters + 1):
        Px = P @ x
        rx = Px + q + GT @ z
        rz = G @ x + s - h
        pcost = 0.5 * x @ Px + q @ x
        gap = s @ z
        pres = np.max(np.abs(rz), initial=0.0) / nh
        dres = np.max(np.abs(rx), initial=0.0) / nq
        rgap = abs(gap) / (1.0 + abs(pcost))
        res = max(pres, dres, rgap)
        if not np.isfinite(res):
            status = Status.NUMERICAL_FAILURE
            break
        if best is None or res < best[0]:
            best = (res, x, s, z)
        log.debug("it %3d pcost % .10e pres %.2e dres %.2e gap %.2e", it, pcost, pres, dres, rgap)
        if res <= tol:
            met = it if met is None else met
            if res <= settings.tol_target or it - met >= settings.extra_iters:
                status = Status.OPTIMAL
                break
        if it == settings.max_iters:
            break
        mu = gap / cones.degree
        try:
            W = _Scaling(cones, s, z)
            kkt = _NewtonSystem(asm, W, settings.static_reg)
        except np.linalg.LinAlgError:
            status = Status.NUMERICAL_FAILURE
            break
        lam = W.lam

        def newton_once(bx, bz, bs):
            t = cones.div(lam, bs, W.lam_det)
            Wt = W.apply(t)
            dx = kkt.solve(bx - GT @ W.apply_inv2(Wt - bz))
            u = W.apply(G @ dx + Wt - bz, inverse=True)  # W dz
            dz = W.apply(u, inverse=True)
            ds = W.apply(t - u)
            return dx, dz, ds

        def newton(bx, bz, bs):
            dx, dz, ds = newton_once(bx, bz, bs)
            # iterative refinement on the unreduced linearization
            prev = np.inf
            floor = 1e-14 * (1.0 + max(np.max(np.abs(bx), initial=0.0),
                                       np.max(np.abs(bz), initial=0.0),
                                       np.max(np.abs(bs), initial=0.0)))
            for _ in range(3):
                ex = bx - (P @ dx + GT @ dz)
                ez = bz - (G @ dx + ds)
                es = bs - cones.prod(lam, W.apply(ds, inverse=True) + W.apply(dz))
                err = max(np.max(np.abs(ex), initial=0.0), np.max(np.abs(ez), initial=0.0),
                          np.max(np.abs(es), initial=0.0))
                if err <= floor or not err < 0.5 * prev:
                    break
                prev = err
                cx, cz, cs = newton_once(ex, ez, es)
                dx, dz, ds = dx + cx, dz + cz, ds + cs
            return dx, dz, ds

        lamsq = cones.prod(lam, lam)
        dxa, dza, dsa = newton(-rx, -rz, -lamsq)
        a_aff = min(1.0, cones.max_step(s, dsa), cones.max_step(z, dza))
        gap_aff = (s + a_aff * dsa) @ (z + a_aff * dza)
        sigma = min(1.0, max(0.0, gap_aff / gap)) ** 3 if gap > 0 else 0.0
        corr = cones.prod(W.apply(dsa, inverse=True), W.apply(dza))
        dx, dz, ds = newton(-rx, -rz, -lamsq - corr + sigma * mu * e)
        alpha = min(1.0, 0.99 * min(cones.max_step(s, ds), cones.max_step(z, dz)))
        if not np.isfinite(alpha) or not (np.all(np.isfinite(dx)) and np.all(np.isfinite(dz))):
            status = Status.NUMERICAL_FAILURE
            break
        log.debug("    a_aff %.3e sigma %.3e alpha %.3e", a_aff, sigma, alpha)
        x = x + alpha * dx
        s = s + alpha * ds
        z = z + alpha * dz
        stall = stall + 1 if alpha < 1e-10 else 0
        if stall >= 5:
            status = Status.NUMERICAL_FAILURE
            break

    res, x, s, z = best
    if status is not Status.OPTIMAL and res <= tol:
        status = Status.OPTIMAL
    return x, z, status, res, it


POLISH_MAX_SIZE = 2000
POLISH_RESCUE = 1e3


def _kkt_res(P, q, G, h, cones: _Cones, x, z):
    """The stopping measure of the interior-point loop at (x, h - Gx, z), with
    cone-membership violations of s and z counted as residual."""
    s = h - G @ x
    Px = P @ x
    nq = 1.0 + np.max(np.abs(q), initial=0.0)
    nh = 1.0 + np.max(np.abs(h), initial=0.0)
    pcost = 0.5 * x @ Px + q @ x
    pres = max(0.0, -cones.min_eig(s)) / nh
    dres = max(np.max(np.abs(Px + q + G.T @ z), initial=0.0), max(0.0, -cones.min_eig(z))) / nq
    return max(pres, dres, abs(s @ z) / (1.0 + abs(pcost)))


def _polish(P, q, G, h, cones: _Cones, x, z, max_size: int = POLISH_MAX_SIZE, rounds: int = 3):
    """Active-set Newton refinement of an interior-point solution.

    Fitted values are only accurate to about the square root of the duality
    gap, so the solution is refined on the constraints the interior-point
    point identifies as active: orthant rows whose multiplier exceeds their
    slack as equalities, cones whose multiplier exceeds their slack as
    boundary constraints ``||s1|| = s0`` (or as the point ``s = 0`` for a
    zero radius). Rows that come out with negative multipliers leave the set
    and violated rows join it, for a few rounds. Returns
    ``(x, z, residual)`` of the best round or None.
    """
    l = cones.l
    s = h - G @ x
    G = G.tocsr()
    active = z[:l] > s[:l]
    point, boundary, extra = [], [], []  # cones as (offset, size)
    for off, k, m in cones.groups:
        S = s[off:off + k * m].reshape(k, m)
        Z = z[off:off + k * m].reshape(k, m)
        for j in range(k):
            start = off + j * m
            if Z[j, 0] <= S[j, 0] - np.linalg.norm(S[j, 1:]):
                continue
            if h[start] <= 1e-12 * (1.0 + np.max(np.abs(h[start:start + m]))):
                point.append((start, m))
                extra.extend(range(start + 1, start + m))
            else:
                boundary.append((start, m))
    best = None
    for _ in range(rounds):
        rows = np.concatenate([np.flatnonzero(active), extra]).astype(int)
        if x.size + rows.size + len(boundary) > max_size:
            return best
        out = _active_set_newton(P, q, G, h, x, z, rows, boundary)
        if out is None:
            return best
        xp, mult, eta = out
        if mult.size and mult.min() < 0 or eta.size and eta.min() < 0:
            mult, eta = _nonnegative_multipliers(P, q, G, h, xp, rows, boundary, mult, eta,
                                                 z[rows])
        zp = np.zeros_like(z)
        zp[rows] = mult
        for o, m in point:
            zp[o] = np.linalg.norm(zp[o + 1:o + m])
        sp_ = h - G @ xp
        for c, (o, m) in enumerate(boundary):
            zp[o] = eta[c] * h[o]
            zp[o + 1:o + m] = -eta[c] * sp_[o + 1:o + m]
        res = _kkt_res(P, q, G, h, cones, xp, zp)
        if best is None or res < best[2]:
            best = (xp, zp, res)
        tiny = 1e-12 * (1.0 + np.max(np.abs(zp[:l]), initial=0.0))
        drop = active & (zp[:l] < -tiny)
        add = ~active & (sp_[:l] < -1e-12 * (1.0 + np.max(np.abs(h[:l]), initial=0.0)))
        if not (drop.any() or add.any()):
            break
        active = (active & ~drop) | add
    return best


def _nonnegative_multipliers(P, q, G, h, x, rows, boundary, mult, eta, z_rows):
    """Nonnegative multipliers at ``x`` when the active set is degenerate.

    With more active constraints than the point needs, the least-squares
    multipliers are one of many and may be negative; stationarity is solved
    again with nonnegativity imposed.
    """
    cols = [G[rows].T.toarray()]
    for o, m in boundary:
        Gc = G[o + 1:o + m]
        cols.append(-(Gc.T @ (h[o + 1:o + m] - Gc @ x))[:, None])
    M = np.hstack(cols)
    g = P @ x + q
    if M.shape[0] * M.shape[1] > POLISH_MAX_SIZE ** 2:
        return mult, eta
    # first try the constraints the interior-point method leaned on most
    w0 = np.concatenate([z_rows, eta])
    tol = 1e-13 * (1.0 + np.linalg.norm(g))
    for cols in (w0 > 1e-3 * np.max(w0, initial=0.0), np.ones(w0.size, dtype=bool)):
        w = np.zeros(w0.size)
        w[cols], norm = optimize.nnls(M[:, cols], -g, maxiter=50 * M.shape[1])
        if norm <= tol:
            break
    return w[:rows.size], w[rows.size:]


def _active_set_newton(P, q, G, h, x, z, rows, boundary, steps: int = 6):
    """Newton corrections to the interior-point pair on a fixed active set.

    The least-squares (least-norm) correction leaves directions the
    objective does not see at their interior-point values and keeps
    degenerate multipliers near their nonnegative starting values.
    """
    Pd = P.toarray()
    A = G[rows].toarray()
    # degenerate active sets hold many more rows than variables; a linearly
    # independent subset fixes the same point at a fraction of the cost
    keep = _independent_rows(A)
    A, rows = A[keep], rows[keep]
    nx, nr, nb = x.size, rows.size, len(boundary)
    Gb = [G[o + 1:o + m].toarray() for o, m in boundary]
    mult = z[rows].copy()
    eta = np.array([z[o] / h[o] for o, _ in boundary])
    xp = x.copy()
    for it in range(steps):
        H = Pd.copy()
        J = np.zeros((nb, nx))
        phi = np.zeros(nb)
        for c, ((o, m), Gc) in enumerate(zip(boundary, Gb)):
            s1 = h[o + 1:o + m] - Gc @ xp
            phi[c] = 0.5 * (s1 @ s1 - h[o] ** 2)
            J[c] = -(Gc.T @ s1)
            H += eta[c] * (Gc.T @ Gc)
        C = np.vstack([A, J])
        K = np.block([[H, C.T], [C, np.zeros((nr + nb, nr + nb))]])
        rx = Pd @ xp + q + C.T @ np.concatenate([mult, eta])
        rhs = np.concatenate([-rx, h[rows] - A @ xp, -phi])
        step = linalg.lstsq(K, rhs, lapack_driver="gelsy")[0]
        if not np.all(np.isfinite(step)):
            return None
        xp = xp + step[:nx]
        mult = mult + step[nx:nx + nr]
        eta = eta + step[nx + nr:]
        # a linear active set needs one step plus one of refinement
        if np.max(np.abs(step), initial=0.0) <= 1e-15 * (1.0 + np.max(np.abs(xp))) or \
                (not nb and it >= 1):
            break
    full = np.zeros(keep.size)
    full[keep] = mult
    return xp, full, eta


def _independent_rows(A, tol: float = 1e-10) -> np.ndarray:
    """Mask of a maximal linearly independent set of rows (pivoted QR)."""
    keep = np.zeros(A.shape[0], dtype=bool)
    if A.shape[0] <= 1:
        keep[:] = True
        return keep
    _, R, piv = linalg.qr(A.T, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    rank = int(np.sum(d > tol * d[0])) if d.size and d[0] > 0 else 0
    keep[piv[:rank]] = True
    return keep


def solve(problem: QuadraticConicProgram, settings: SolverSettings | None = None) -> Solution:
    """Solve ``problem`` with the interior-point method."""
    settings = settings or SolverSettings()
    pr = problem
    n = pr.num_vars
    pre = _presolve(pr, tol=1e-12)
    empty = dict(lin_duals=np.zeros(pr.b.size), lo_duals=np.zeros(n), hi_duals=np.zeros(n),
                 soc_duals=tuple(np.zeros(c.index_set.size + 1) for c in pr.soc))
    if pre.infeasible:
        log.info("infeasible problem: %s", pre.infeasible)
        return Solution(np.full(n, np.nan), np.nan, Status.INFEASIBLE, np.inf, 0,
                        info={"reason": pre.infeasible}, **empty)

    P, q, G, h, cones, ilo, ihi = _canonical(pr, pre)
    if G.shape[0] == 0:
        # unconstrained in the free variables: minimum-norm stationary point
        Pd = P.toarray()
        xf, *_ = np.linalg.lstsq(Pd, -q, rcond=None)
        zc = np.zeros(0)
        res = np.max(np.abs(Pd @ xf + q), initial=0.0) / (1.0 + np.max(np.abs(q), initial=0.0))
        status = Status.OPTIMAL if res <= settings.tol_kkt else Status.NUMERICAL_FAILURE
        iters = 0
    else:
        # iterates of infeasible problems run into the cone boundary; the
        # stall logic reports those, so the floating-point noise is muted
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            xf, zc, status, res, iters = _ipm(P, q, G, h, cones, settings,
                                              _free_blocks(pr.blocks, pre.free, n))
            # a stalled run close to the tolerance is also worth refining
            if settings.polish and res <= POLISH_RESCUE * settings.tol_kkt:
                polished = _polish(P, q, G, h, cones, xf, zc)
                if polished is not None and polished[2] <= max(
                        res if status is Status.OPTIMAL else 0.0, 1e-2 * settings.tol_kkt):
                    xf, zc, res = polished
                    status = Status.OPTIMAL

    z = pre.fixed_val.copy()
    z[pre.free] = xf
    lin = np.zeros(pr.b.size)
    mlo = np.zeros(n)
    mhi = np.zeros(n)
    m1 = pre.row_keep.size
    lin[pre.row_keep] = zc[:m1]
    mlo[pre.free[ilo]] = zc[m1:m1 + ilo.size]
    mhi[pre.free[ihi]] = zc[m1 + ilo.size:m1 + ilo.size + ihi.size]
    soc_duals = [np.zeros(c.index_set.size + 1) for c in pr.soc]
    start = cones.l
    for i in cones.order:
        k, local_pos, _, _, _ = pre.cones[i]
        m = local_pos.size + 1
        y = zc[start:start + m]
        soc_duals[k][0] = y[0]
        soc_duals[k][1 + local_pos] = y[1:]
        start += m

    # multipliers for eliminated constraints, from stationarity
    fixed = np.setdiff1d(np.arange(n), pre.free)
    if fixed.size:
        grad = pr.P @ z + pr.q + pr.A.T @ lin - mlo + mhi
        for k, y in enumerate(soc_duals):
            np.add.at(grad, pr.soc[k].index_set, y[1:])
        by_cone = {}
        for j in fixed:
            k = pre.fixed_by_cone[j]
            if k >= 0:
                by_cone.setdefault(k, []).append(j)
            elif grad[j] > 0:
                mlo[j] = grad[j]
            else:
                mhi[j] = -grad[j]
        for k, js in by_cone.items():
            cone = pr.soc[k]
            loc = {v: i for i, v in enumerate(cone.index_set)}
            y = soc_duals[k]
            for j in js:
                y[1 + loc[j]] -= grad[j]
            y[0] = max(y[0], np.linalg.norm(y[1:]))

    return Solution(z=z, objective=pr.objective(z), status=status, kkt_residual=float(res),
                    iterations=iters, lin_duals=lin, lo_duals=mlo, hi_duals=mhi,
                    soc_duals=tuple(soc_duals))


# --------------------------------------------------------------------------
# Constraint generation


class LazyConstraintSource(Protocol):
    """A problem whose linear rows are only materialized on demand."""

    def base_problem(self) -> QuadraticConicProgram: ...

    def initial_keys(self) -> np.ndarray: ...

    def rows(self, keys: np.ndarray) -> tuple[sp.csr_matrix, np.ndarray]: ...

    def most_violated(self, z: np.ndarray, limit: int, tol: float) -> tuple[np.ndarray, float]:
        """Keys of up to ``limit`` constraints violated by more than ``tol``,
        worst first, and the maximum violation over all constraints."""
        ...


def solve_with_constraint_generation(source: LazyConstraintSource,
                                     settings: SolverSettings | None = None, *,
                                     max_rounds: int = 50, cuts_per_round: int = 500,
                                     tol_feas: float = 1e-6) -> Solution:
    """Cutting-plane loop: solve on a working set, add the most violated rows."""
    settings = settings or SolverSettings()
    base = source.base_problem()
    keys = np.unique(np.asarray(source.initial_keys(), dtype=np.int64))
    sol = None
    for rnd in range(1, max_rounds + 1):
        A, b = source.rows(keys)
        sol = solve(base.with_rows(A, b), settings)
        if not sol.optimal:
            return dataclasses.replace(sol, info={**sol.info, "rounds": rnd, "keys": keys})
        z = sol.z
        scale = 1.0 + np.max(np.abs(z), initial=0.0)
        new, worst = source.most_violated(z, cuts_per_round, 1e-3 * tol_feas * scale)
        new = np.setdiff1d(new, keys)
        log.debug("round %d: %d rows, max violation %.3e, %d new", rnd, keys.size, worst, new.size)
        if new.size == 0:
            if worst > tol_feas:
                log.warning("working-set rows violated by %.3e after solve", worst)
                return dataclasses.replace(sol, status=Status.NUMERICAL_FAILURE,
                                           info={"rounds": rnd, "keys": keys,
                                                 "max_violation": worst})
            return dataclasses.replace(sol, info={"rounds": rnd, "keys": keys,
                                                  "max_violation": worst})
        keys = np.union1d(keys, new)
    return dataclasses.replace(sol, status=Status.MAX_ITERS,
                               info={"rounds": max_rounds, "keys": keys})
