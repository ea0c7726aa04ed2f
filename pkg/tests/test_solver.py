import numpy as np
import pytest
import scipy.sparse as sp

from cvxreg.estimators import ConvexityCuts, _base_problem, build_problem, fit
from cvxreg.experiments import SyntheticSpec, generate
from cvxreg.model import Dataset, EstimatorConfig
from cvxreg.solver import (QuadraticConicProgram, SecondOrderCone, SolverSettings, Status,
                           duality_gap, kkt_residuals, solve, solve_with_constraint_generation)

from oracles import kkt_residual


def qp(P, q, A=None, b=None, lo=None, hi=None, soc=()):
    return QuadraticConicProgram(P=sp.csr_matrix(np.atleast_2d(P)), q=np.atleast_1d(q),
                                 A=None if A is None else sp.csr_matrix(np.atleast_2d(A)),
                                 b=b, lo=lo, hi=hi, soc=soc)


def test_halfline_projection():
    # (z - 1)^2 = z^2 - 2z + 1
    sol = solve(qp([[2.0]], [-2.0], [[-1.0]], [-2.0]))
    assert sol.optimal
    assert sol.z[0] == pytest.approx(2.0, abs=1e-7)
    assert sol.objective + 1.0 == pytest.approx(1.0, abs=1e-7)


def test_symmetric_halfspace():
    sol = solve(qp(2 * np.eye(2), [0.0, 0.0], [[-1.0, -1.0]], [-2.0]))
    np.testing.assert_allclose(sol.z, [1.0, 1.0], atol=1e-7)
    assert sol.objective == pytest.approx(2.0, abs=1e-7)


def test_one_dimensional_cone_is_an_interval():
    # (z - 3)^2 = z^2 - 6z + 9 with |z| <= 1
    sol = solve(qp([[2.0]], [-6.0], soc=[SecondOrderCone([0], [0.0], 1.0)]))
    assert sol.z[0] == pytest.approx(1.0, abs=1e-7)
    assert sol.objective + 9.0 == pytest.approx(4.0, abs=1e-6)


def test_box_bounds_and_zero_radius_cone():
    sol = solve(qp(2 * np.eye(3), [-10.0, 10.0, 0.0], lo=[-1, -1, -np.inf], hi=[1, 1, np.inf],
                   soc=[SecondOrderCone([2], [0.5], 0.0)]))
    np.testing.assert_allclose(sol.z, [1.0, -1.0, 0.5], atol=1e-7)
    assert kkt_residual(qp(2 * np.eye(3), [-10.0, 10.0, 0.0], lo=[-1, -1, -np.inf],
                           hi=[1, 1, np.inf], soc=[SecondOrderCone([2], [0.5], 0.0)]),
                        sol) < 1e-7


def test_contradictory_boxes_are_infeasible():
    sol = solve(qp([[2.0]], [0.0], lo=[1.0], hi=[0.0]))
    assert sol.status is Status.INFEASIBLE


@pytest.mark.parametrize("bad", [
    dict(P=[[1.0, 2.0], [0.0, 1.0]], q=[0.0, 0.0]),
    dict(P=[[1.0]], q=[0.0, 0.0]),
    dict(P=[[1.0]], q=[np.nan]),
])
def test_problem_validation(bad):
    with pytest.raises(ValueError):
        qp(**bad)


def test_negative_radius_rejected():
    with pytest.raises(ValueError):
        SecondOrderCone([0], [0.0], -1.0)


def random_problem(rng):
    n = int(rng.integers(2, 8))
    M = rng.normal(size=(n, n))
    rank = int(rng.integers(0, n + 1))
    P = M[:rank].T @ M[:rank] + 1e-3 * np.eye(n)
    q = rng.normal(size=n)
    m = int(rng.integers(1, 10))
    A = rng.normal(size=(m, n))
    z0 = rng.normal(size=n)
    b = A @ z0 + rng.uniform(0.1, 1, m)
    lo = np.where(rng.uniform(size=n) < 0.3, z0 - 1, -np.inf)
    hi = np.where(rng.uniform(size=n) < 0.3, z0 + 1, np.inf)
    soc = []
    if n >= 2 and rng.uniform() < 0.7:
        idx = rng.choice(n, size=2, replace=False)
        soc.append(SecondOrderCone(idx, z0[idx] + 0.1, 1.0))
    return qp(P, q, A, b, lo, hi, soc), z0


@pytest.mark.parametrize("seed", range(25))
def test_random_problems_certify(seed):
    pr, _ = random_problem(np.random.default_rng(seed))
    sol = solve(pr)
    assert sol.optimal
    assert kkt_residual(pr, sol) <= 1e-7
    assert kkt_residuals(pr, sol)["max"] <= 1e-7
    assert abs(duality_gap(pr, sol)) <= 1e-7 * (1 + abs(sol.objective))


@pytest.mark.parametrize("seed", range(10))
def test_extra_cut_never_lowers_objective(seed):
    rng = np.random.default_rng(100 + seed)
    pr, z0 = random_problem(rng)
    base = solve(pr)
    a = rng.normal(size=pr.num_vars)
    # the cut keeps the strictly feasible point z0
    cut = pr.with_rows(a[None, :], [max(a @ base.z - 0.5, a @ z0 + 0.01)])
    tighter = solve(cut)
    assert tighter.optimal
    assert tighter.objective >= base.objective - 1e-8 * (1 + abs(base.objective))


@pytest.mark.parametrize("seed", range(6))
def test_constraint_generation_matches_dense(seed):
    rng = np.random.default_rng(seed)
    n, d = int(rng.integers(10, 50)), int(rng.integers(1, 4))
    x = rng.uniform(size=(n, d))
    data = Dataset(x, (x ** 2).sum(axis=1) + 0.3 * rng.normal(size=n))
    dense = fit(data, EstimatorConfig.cr(min_norm_refinement=False), method="dense")
    lazy = fit(data, EstimatorConfig.cr(min_norm_refinement=False), method="lazy")
    np.testing.assert_allclose(lazy.values, dense.values, atol=1e-6)
    assert lazy.max_violation()[0] <= 1e-6


def test_already_convex_data_needs_one_round():
    # the sorted-neighbour chain pins every slope between adjacent secants,
    # which for convex data is a global subgradient
    x = np.linspace(0, 1, 30)[::-1, None]
    data = Dataset(x, x[:, 0] ** 2)
    src = ConvexityCuts(data.x, _base_problem(data, EstimatorConfig.cr()))
    sol = solve_with_constraint_generation(src)
    assert sol.optimal and sol.info["rounds"] == 1
    assert sol.info["keys"].size == 2 * 29
    np.testing.assert_allclose(sol.z[:30], data.y, atol=1e-6)


def test_boundary_setup_at_n400_uses_few_rows():
    data, _ = generate(SyntheticSpec("Inverse1D", 400, 1, sigma=1.0, seed=4))
    cfg = EstimatorConfig.cr(min_norm_refinement=False)
    lazy = fit(data, cfg, method="lazy")
    dense = fit(data, cfg, method="dense")
    assert lazy.fit_stats["num_rows"] < 400 ** 2
    np.testing.assert_allclose(lazy.values, dense.values, atol=1e-6)


def test_max_rounds_reported():
    rng = np.random.default_rng(1)
    x = rng.uniform(size=(40, 2))
    data = Dataset(x, rng.normal(size=40))
    src = ConvexityCuts(data.x, _base_problem(data, EstimatorConfig.cr()), initial="empty")
    sol = solve_with_constraint_generation(src, max_rounds=1, cuts_per_round=5)
    assert sol.status is Status.MAX_ITERS


def test_tight_iteration_cap():
    pr = build_problem(Dataset(np.arange(6.0), [0, 3, 1, 4, 1, 5]), EstimatorConfig.cr())
    sol = solve(pr, SolverSettings(max_iters=2))
    assert sol.status is Status.MAX_ITERS
