"""Reference computations that share no code with the package.

They are slow and only meant for small instances.
"""

import numpy as np
from scipy import optimize


def project_halfspace(y, a, b=0.0):
    """Euclidean projection of y onto {f : a'f >= b}."""
    y = np.asarray(y, float)
    a = np.asarray(a, float)
    gap = a @ y - b
    return y if gap >= 0 else y - gap * a / (a @ a)


def cr_1d(x, y):
    """Least-squares convex fit in one dimension for distinct x.

    Convexity of the fitted values is the chain of secant-slope inequalities
    on sorted x; the projection is found with SLSQP at tight tolerance.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    order = np.argsort(x)
    xs, ys = x[order], y[order]
    n = xs.size
    cons = []
    for i in range(1, n - 1):
        h1, h2 = xs[i] - xs[i - 1], xs[i + 1] - xs[i]
        a = np.zeros(n)
        a[i - 1], a[i], a[i + 1] = 1 / h1, -(1 / h1 + 1 / h2), 1 / h2
        cons.append({"type": "ineq", "fun": lambda f, a=a: a @ f, "jac": lambda f, a=a: a})
    res = optimize.minimize(lambda f: np.sum((f - ys) ** 2), ys.copy(),
                            jac=lambda f: 2 * (f - ys), constraints=cons, method="SLSQP",
                            options={"ftol": 1e-15, "maxiter": 1000})
    out = np.empty(n)
    out[order] = res.x
    return out


def min_norm_1d(x, f, slack=0.0):
    """Minimum-norm slopes for convex-consistent values in one dimension.

    Each slope must lie between the largest secant slope to the left and the
    smallest to the right; the least-norm choice clips 0 into that interval.
    ``slack`` relaxes every pairwise inequality by that absolute amount.
    """
    x = np.asarray(x, float)
    f = np.asarray(f, float)
    out = np.empty(x.size)
    for i in range(x.size):
        left = [(f[i] - f[j] - slack) / (x[i] - x[j]) for j in range(x.size) if x[j] < x[i]]
        right = [(f[j] - f[i] + slack) / (x[j] - x[i]) for j in range(x.size) if x[j] > x[i]]
        lo = max(left) if left else -np.inf
        hi = min(right) if right else np.inf
        out[i] = min(max(0.0, lo), hi)
    return out


def convex_fit_slsqp(x, y, lam=0.0, box=None, ball=None):
    """Generic small-instance solver for the pairwise-constraint programs.

    Variables (f, beta); objective mean squared error plus (lam/n) sum ||beta||^2.
    ``box`` is (lo, hi) per coordinate, ``ball`` is (center, radius).
    """
    x = np.atleast_2d(np.asarray(x, float))
    if x.shape[0] == 1 and np.asarray(y).size > 1:
        x = x.T
    y = np.asarray(y, float)
    n, d = x.shape
    N = n + n * d

    def obj(z):
        f, B = z[:n], z[n:]
        return np.mean((y - f) ** 2) + lam / n * B @ B

    def grad(z):
        g = np.zeros(N)
        g[:n] = -2 * (y - z[:n]) / n
        g[n:] = 2 * lam / n * z[n:]
        return g

    rows = []
    for i in range(n):
        for j in range(n):
            if i != j:
                a = np.zeros(N)
                a[j], a[i] = 1.0, -1.0
                a[n + i * d:n + (i + 1) * d] = -(x[j] - x[i])
                rows.append(a)
    Amat = np.array(rows)
    cons = [{"type": "ineq", "fun": lambda z: Amat @ z, "jac": lambda z: Amat}]
    if ball is not None:
        c, r = np.asarray(ball[0], float), float(ball[1])
        for i in range(n):
            sl = slice(n + i * d, n + (i + 1) * d)

            def g(z, sl=sl):
                u = z[sl] - c
                return np.array([r ** 2 - u @ u])

            def gj(z, sl=sl):
                J = np.zeros((1, N))
                J[0, sl] = -2 * (z[sl] - c)
                return J
            cons.append({"type": "ineq", "fun": g, "jac": gj})
    bounds = None
    if box is not None:
        lo, hi = (np.broadcast_to(np.asarray(v, float), (d,)) for v in box)
        bounds = [(None, None)] * n + [(lo[k], hi[k]) for _ in range(n) for k in range(d)]
    z0 = np.concatenate([np.full(n, y.mean()), np.zeros(n * d)])
    if box is not None:
        z0[n:] = np.tile(np.clip(0.0, lo, hi), n)
    if ball is not None:
        z0[n:] = np.tile(c, n)
    res = optimize.minimize(obj, z0, jac=grad, constraints=cons, bounds=bounds, method="SLSQP",
                            options={"ftol": 1e-14, "maxiter": 2000})
    return res.x[:n], res.x[n:].reshape(n, d), res.fun


def kkt_residual(problem, sol):
    """Normalized KKT residual recomputed from the problem's public fields.

    A cone constraint is ``(r, c - z_S)`` in the second-order cone, with dual
    ``(t, w)``, ``||w|| <= t``. Stationarity reads
    ``Pz + q + A'y - mlo + mhi + sum_c E_c' w_c = 0``; complementarity sums
    ``|y_k slack_k|`` and ``|t r + w'(c - z_S)|`` relative to the objective.
    """
    P = problem.P.toarray()
    A = problem.A.toarray()
    z = sol.z
    stat = P @ z + problem.q + A.T @ sol.lin_duals - sol.lo_duals + sol.hi_duals
    feas = [0.0]
    dual = [0.0]
    comp = 0.0
    if problem.b.size:
        slack = problem.b - A @ z
        feas.append(-slack.min())
        dual.append(-sol.lin_duals.min())
        comp += np.abs(sol.lin_duals * slack).sum()
    for bound, mult, sign in ((problem.lo, sol.lo_duals, 1.0), (problem.hi, sol.hi_duals, -1.0)):
        fin = np.isfinite(bound)
        gap = sign * (z[fin] - bound[fin])
        if fin.any():
            feas.append(-gap.min())
            comp += np.abs(mult[fin] * gap).sum()
        dual.append(-mult.min() if mult.size else 0.0)
        dual.append(np.abs(mult[~fin]).max() if (~fin).any() else 0.0)
    for cone, y in zip(problem.soc, sol.soc_duals):
        t, w = y[0], y[1:]
        u = z[cone.index_set] - cone.center
        feas.append(np.sqrt(u @ u) - cone.radius)
        dual.append(np.sqrt(w @ w) - t)
        for k, idx in enumerate(cone.index_set):
            stat[idx] += w[k]
        comp += abs(t * cone.radius - w @ u)
    hscale = 1 + max([np.abs(problem.b).max(initial=0)]
                     + [c.radius for c in problem.soc] + [0.0])
    obj = 0.5 * z @ P @ z + problem.q @ z
    return max(max(feas) / hscale,
               max(np.abs(stat).max(), max(dual)) / (1 + np.abs(problem.q).max(initial=0)),
               comp / (1 + abs(obj)))
