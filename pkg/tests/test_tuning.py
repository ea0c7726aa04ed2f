import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cvxreg.estimators import fit
from cvxreg.model import Dataset, EstimatorConfig, InvalidInput
from cvxreg.solver import SolverSettings
from cvxreg.tuning import (CV_SETTINGS, GRID_7, L_GRID_6, Q_GRID, CvError, Grid, config_template,
                           cross_validate, default_grid, kfold_split, percentile_bounds,
                           reference_vector_ols, tune)


@pytest.mark.parametrize("n, k, sizes", [
    (10, 5, [2, 2, 2, 2, 2]),
    (7, 5, [2, 2, 1, 1, 1]),
    (5, 5, [1, 1, 1, 1, 1]),
])
def test_fold_sizes(n, k, sizes):
    folds = kfold_split(n, k, seed=3)
    assert [len(f) for f in folds] == sizes
    np.testing.assert_array_equal(np.sort(np.concatenate(folds)), np.arange(n))
    assert all(np.all(np.diff(f) > 0) for f in folds)


def test_folds_are_deterministic_and_seeded():
    a = kfold_split(20, 4, seed=1)
    b = kfold_split(20, 4, seed=1)
    c = kfold_split(20, 4, seed=2)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert not all(np.array_equal(x, y) for x, y in zip(a, c))


@pytest.mark.parametrize("n, k", [(5, 1), (3, 4), (10, 2.0)])
def test_bad_fold_counts(n, k):
    with pytest.raises(InvalidInput):
        kfold_split(n, k)


@pytest.mark.parametrize("values", [(), (1.0, 1.0), (2.0, 1.0), (1.0, np.nan)])
def test_grid_invariants(values):
    with pytest.raises(InvalidInput):
        Grid("g", values)


def test_default_grids():
    assert len(Q_GRID) == 49 and Q_GRID[0] == 0.01 and Q_GRID[-1] == 0.49
    assert L_GRID_6[0] == pytest.approx(0.1) and L_GRID_6[-1] == pytest.approx(5.0)
    assert len(GRID_7) == 50 and GRID_7[0] == 1.0 and GRID_7[-1] == 500.0
    assert default_grid("wrcr").values == Q_GRID
    assert default_grid("lcr", "paper7").values == GRID_7
    g = default_grid("alcr", cr_subgradients=[[0.0], [3.0]], b0=[1.0])
    assert len(g) == 50 and g.values[0] == 0.0 and g.values[-1] == pytest.approx(2.0)


def test_degenerate_radius_grid_is_a_singleton():
    assert default_grid("alcr", cr_subgradients=[[1.0], [1.0]], b0=[1.0]).values == (0.0,)


@pytest.mark.parametrize("variant, profile", [("cr", "paper6"), ("pcr", "paper9")])
def test_default_grid_rejects(variant, profile):
    with pytest.raises(InvalidInput):
        default_grid(variant, profile)


@pytest.mark.parametrize("x, y, slope", [
    ([[0.0], [1.0], [2.0]], [1.0, 3.0, 5.0], [2.0]),
    ([[0.0], [1.0], [2.0]], [4.0, 4.0, 4.0], [0.0]),
    ([[0, 0], [1, 0], [0, 1], [1, 1]], [0.0, 3.0, -1.0, 2.0], [3.0, -1.0]),
])
def test_ols_reference_vector(x, y, slope):
    np.testing.assert_allclose(reference_vector_ols(Dataset(x, y)), slope, atol=1e-12)


def test_ols_rank_deficiency():
    data = Dataset([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]], [1.0, 2.0, 3.0])
    with pytest.raises(InvalidInput):
        reference_vector_ols(data)
    assert np.all(np.isfinite(reference_vector_ols(data, ridge=True)))


@pytest.mark.parametrize("q, lo, hi", [(0.0, 1.0, 10.0), (0.49, 5.41, 5.59)])
def test_percentile_bounds(q, lo, hi):
    a, b = percentile_bounds(np.arange(1.0, 11.0), q)
    assert a[0] == pytest.approx(lo) and b[0] == pytest.approx(hi)


def test_percentile_bounds_of_constant_subgradients():
    a, b = percentile_bounds(np.full((5, 2), 0.7), 0.2)
    np.testing.assert_array_equal(a, [0.7, 0.7])
    np.testing.assert_array_equal(b, [0.7, 0.7])


@pytest.mark.parametrize("q", [-0.1, 0.5, 0.7])
def test_percentile_level_range(q):
    with pytest.raises(InvalidInput):
        percentile_bounds([1.0, 2.0], q)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=1, max_size=30),
       st.floats(0, 0.49), st.floats(0, 0.49))
def test_percentile_bounds_shrink_with_q(values, q1, q2):
    q1, q2 = sorted((q1, q2))
    lo1, hi1 = percentile_bounds(values, q1)
    lo2, hi2 = percentile_bounds(values, q2)
    assert lo1[0] <= lo2[0] + 1e-9 and hi2[0] <= hi1[0] + 1e-9 and lo2[0] <= hi2[0]


@pytest.mark.parametrize("solver_settings", [None, SolverSettings()])
def test_singleton_grid_cv_returns_its_value(solver_settings):
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, (15, 1))
    data = Dataset(x, x[:, 0] ** 2 + rng.normal(0, 0.1, 15))
    res = cross_validate(data, lambda _: EstimatorConfig.cr(), Grid("none", (0.0,)), k=5, seed=4,
                         settings=solver_settings)
    assert res.best == 0.0 and len(res.curve) == 1 and res.fold_sizes == (3,) * 5
    # the score is the average held-out sum of squares of a refit CR model, with the
    # fold settings defaulting to CV_SETTINGS and explicit settings honoured
    folds = kfold_split(15, 5, 4)
    total = 0.0
    for f in folds:
        keep = np.setdiff1d(np.arange(15), f)
        m = fit(data.subset(keep), settings=solver_settings or CV_SETTINGS)
        total += np.sum((data.y[f] - m.predict(data.x[f])) ** 2)
    assert res.best_score == pytest.approx(total / 5, rel=1e-6)


def test_ties_go_to_the_smallest_candidate():
    data = Dataset([[0.0], [1.0], [2.0], [3.0], [4.0]], [1.0] * 5)
    # constant data: every radius fits exactly, so all scores tie
    res = cross_validate(data, config_template("lcr"), Grid("L", (0.5, 1.0, 2.0)), k=5)
    assert res.best == 0.5


def test_cv_is_deterministic():
    rng = np.random.default_rng(1)
    x = rng.uniform(-1, 1, (20, 2))
    data = Dataset(x, np.sum(x ** 2, axis=1) + rng.normal(0, 0.2, 20))
    grid = Grid("L", (0.5, 1.0, 3.0))
    a = cross_validate(data, config_template("lcr"), grid, seed=9)
    b = cross_validate(data, config_template("lcr"), grid, seed=9)
    assert a.curve == b.curve and a.best == b.best


def test_wrcr_tuning_on_quadratic():
    x = np.linspace(-1, 1, 20)[:, None]
    data = Dataset(x, x[:, 0] ** 2)
    B = fit(data).betas
    cfg, res = tune(data, "wrcr", Grid("q", (0.0, 0.2, 0.45)), cr_subgradients=B)
    assert res.best == 0.0
    lo, hi = percentile_bounds(B, 0.0)
    np.testing.assert_allclose(cfg.l0, lo)
    np.testing.assert_allclose(cfg.u0, hi)


def test_monotone_wrcr_template_keeps_an_admissible_box():
    make = config_template("wrcr", cr_subgradients=[[-2.0], [-1.0]], monotone=True)
    lo, hi = make(0.1).beta_box(1)
    assert lo[0] == 0.0 and hi[0] == 0.0


def test_cv_reports_failing_candidates():
    data = Dataset([[0.0], [1.0], [2.0], [3.0], [4.0]], [0.0, 1.0, 0.0, 1.0, 0.0])
    with pytest.raises(CvError):
        cross_validate(data, lambda v: EstimatorConfig.lcr(-v), Grid("L", (1.0,)))


def test_result_document():
    data = Dataset([[0.0], [1.0], [2.0], [3.0], [4.0]], [0.0, 1.0, 4.0, 9.0, 16.0])
    res = cross_validate(data, config_template("pcr"), Grid("lambda", (0.0, 1.0)), k=5, seed=2)
    doc = res.to_dict()
    assert doc["schema"] == "cvxreg-cv/1" and doc["grid"] == [0.0, 1.0]
    assert doc["best"] in (0.0, 1.0) and doc["folds"] == 5 and doc["seed"] == 2
