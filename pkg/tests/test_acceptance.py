"""End-to-end acceptance checks, one test per criterion.

Each test prints a single PASS/FAIL line; the lines are repeated in the
terminal summary.
"""

import json

import numpy as np

import conftest
from cvxreg import cli
from cvxreg.estimators import affine_fit, build_problem, fit, min_norm_subgradients
from cvxreg.experiments import McConfig, SyntheticSpec, frontier_study, generate, mc_study
from cvxreg.model import TOL_FEAS, Dataset, EstimatorConfig, PwlModel
from cvxreg.solver import solve
from oracles import kkt_residual, project_halfspace


def record(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def random_instance(rng, n_max=30, d_max=3):
    n = int(rng.integers(3, n_max + 1))
    d = int(rng.integers(1, d_max + 1))
    x = rng.uniform(-2, 2, (n, d))
    y = np.sum(x ** 2, axis=1) + rng.normal(0, float(rng.choice([0.1, 1.0])), n)
    return Dataset(x, y)


def random_config(rng, variant, d):
    if variant == "CR":
        return EstimatorConfig.cr()
    if variant == "PCR":
        return EstimatorConfig.pcr(float(rng.uniform(0.01, 5)))
    if variant == "LCR":
        return EstimatorConfig.lcr(float(rng.uniform(0.1, 3)))
    if variant == "ALCR":
        return EstimatorConfig.alcr(rng.normal(0, 1, d), float(rng.uniform(0.1, 2)))
    lo = rng.uniform(-3, 0, d)
    return EstimatorConfig.wrcr(lo, lo + rng.uniform(0, 4, d))


VARIANTS = ("CR", "PCR", "LCR", "ALCR", "WRCR")


def test_criterion_1_boundary_trend(tmp_path):
    code = cli.main(["experiment", "--preset", "boundary", "--reps", "30",
                     "--out", str(tmp_path)])
    assert code == 0
    report = json.loads((tmp_path / "boundary.json").read_text())
    means = {(row["metric"], row["n"]): row["mean"] for row in report["summary"]}
    sub = [means["subgradient_error", n] for n in (100, 200, 400)]
    fun = [means["function_error", n] for n in (100, 200, 400)]
    ok = (sub[0] < sub[1] < sub[2] and sub[0] > 40 and sub[1] > 80 and sub[2] > 180
          and all(0.55 <= f <= 1.25 for f in fun))
    record(1, ok, "subgradient error means " + ", ".join(f"{v:.1f}" for v in sub)
           + "; function error means " + ", ".join(f"{v:.3f}" for v in fun))


def test_criterion_2_bounded_estimators_beat_cr():
    report = mc_study(McConfig("TypeA", (100,), (3,), (3.0,), 20))
    mse = {v: report.cell(estimator=v).ok.mean() for v in VARIANTS}
    bounded = ("PCR", "LCR", "ALCR", "WRCR")
    ok = (mse["ALCR"] < mse["LCR"] and mse["ALCR"] < mse["PCR"]
          and all(5 * mse[v] < mse["CR"] for v in bounded))
    record(2, ok, "mean MSE " + ", ".join(f"{v} {mse[v]:.4f}" for v in VARIANTS))


def test_criterion_3_identity_reductions():
    worst = 0.0
    for seed in range(5):
        data = random_instance(np.random.default_rng(seed), n_max=40)
        d = data.d
        cr = fit(data)
        norms = np.linalg.norm(cr.betas, axis=1)
        b = np.linspace(-0.5, 0.5, d)
        pairs = [
            (fit(data, EstimatorConfig.pcr(0.0)).values, cr.values),
            (fit(data, EstimatorConfig.alcr(np.zeros(d), norms.max() + 1)).values, cr.values),
            (fit(data, EstimatorConfig.wrcr(cr.betas.min(axis=0) - 1,
                                            cr.betas.max(axis=0) + 1)).values, cr.values),
            (fit(data, EstimatorConfig.wrcr(b, b)).values, affine_fit(data, b)),
        ]
        worst = max(worst, max(np.abs(a - e).max() for a, e in pairs))
    record(3, worst <= 1e-6, f"largest fitted-value difference {worst:.2e}")


def test_criterion_4_closed_form_oracle():
    y = np.array([0.0, 1.0, 0.0])
    # convexity of three equally spaced values is f0 - 2 f1 + f2 >= 0
    expected = project_halfspace(y, [1.0, -2.0, 1.0])
    m = fit(Dataset([[0.0], [1.0], [2.0]], y))
    err = np.abs(m.values - expected).max()
    record(4, err <= 1e-6 and np.allclose(expected, 1 / 3),
           f"fitted {np.round(m.values, 8).tolist()}, error {err:.1e}")


def test_criterion_5_solver_certification():
    rng = np.random.default_rng(2024)
    worst_kkt = worst_gap = 0.0
    failures = 0
    for k in range(200):
        data = random_instance(rng)
        config = random_config(rng, VARIANTS[k % 5], data.d)
        problem = build_problem(data, config)
        sol = solve(problem)
        failures += not sol.optimal
        worst_kkt = max(worst_kkt, kkt_residual(problem, sol))
        dense = fit(data, config, method="dense")
        lazy = fit(data, config, method="lazy")
        worst_gap = max(worst_gap, np.abs(dense.values - lazy.values).max())
    ok = failures == 0 and worst_kkt <= 1e-7 and worst_gap <= 1e-6
    record(5, ok, f"200 instances, {failures} not optimal, max KKT residual {worst_kkt:.1e}, "
                  f"max dense/lazy difference {worst_gap:.1e}")


def test_criterion_6_min_norm_refinement():
    rng = np.random.default_rng(6)
    worse = 0
    worst_violation = 0.0
    for k in range(100):
        data = random_instance(rng, n_max=20)
        config = random_config(rng, VARIANTS[k % 5], data.d)
        primary = fit(data, EstimatorConfig.from_dict(config.to_dict(),
                                                      min_norm_refinement=False))
        B = min_norm_subgradients(data, primary.values, config)
        worse += np.sum(B ** 2) > np.sum(primary.betas ** 2) * (1 + 1e-12)
        worst_violation = max(worst_violation,
                              PwlModel(primary.values, B, data.x).max_violation()[0])
    ok = worse == 0 and worst_violation <= TOL_FEAS
    record(6, ok, f"100 instances, {worse} with larger norm, "
                  f"max violation {worst_violation:.1e}")


def test_criterion_7_noiseless_convergence():
    errors = []
    for n in (25, 50, 100, 200):
        data, truth = generate(SyntheticSpec("TypeI", n, 1, sigma=0.0, design="even"))
        m = fit(data, EstimatorConfig.alcr([1.2], 1.0))
        grid = np.linspace(data.x.min(), data.x.max(), 2001)[:, None]
        errors.append(float(np.abs(m.predict(grid) - truth(grid)).max()))
    ok = all(b <= a for a, b in zip(errors, errors[1:])) and errors[-1] <= 1e-3
    record(7, ok, "sup errors " + ", ".join(f"{e:.2e}" for e in errors))


def test_criterion_8_frontier_fixture():
    report = frontier_study(estimators=("CR", "ALCR", "WRCR"))
    ratio = {row["estimator"]: row["ratio"] for row in report.extra["rmse_table"]}
    ok = ratio["CR"] > ratio["WRCR"] and ratio["CR"] > ratio["ALCR"]
    record(8, ok, "out/in RMSE ratios " + ", ".join(f"{k} {v:.2f}" for k, v in ratio.items()))
