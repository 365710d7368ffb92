"""Global/local optimizers: determinism, convergence, refinement, cross-checks."""

import numpy as np
import pytest

from zcoh.optimize import (
    CrossValidationReport,
    DEConfig,
    NoConvergenceError,
    ObjectiveSpec,
    ResidualForm,
    cross_validate_global,
    differential_evolution,
    exact_root_refine,
    local_polish,
)


def sphere(x):
    return float(np.sum(x**2))


def sphere_batch(pop):
    return np.sum(pop**2, axis=1)


def rastrigin(x):
    return float(10 * x.size + np.sum(x**2 - 10 * np.cos(2 * np.pi * x)))


def test_de_config_validation():
    with pytest.raises(ValueError):
        DEConfig(population_size=3, max_generations=10)
    with pytest.raises(ValueError):
        DEConfig(population_size=10, max_generations=0)
    with pytest.raises(ValueError):
        DEConfig(population_size=10, max_generations=10, crossover_probability=0.0)
    with pytest.raises(ValueError):
        DEConfig(population_size=10, max_generations=10, mutation_range=(0.5, 2.5))


def test_de_profiles():
    std = DEConfig.standard(2, 100)
    assert std.population_size == 30
    stress = DEConfig.stress(2, 50, seed=7)
    assert stress.population_size == 2000
    assert stress.mutation_range == (1.9, 1.9)
    assert stress.crossover_probability == 0.3
    assert stress.seed == 7


def test_objective_spec_validation():
    spec = ObjectiveSpec(residual_form="sum", w1=2.0, w2=0.5)
    assert spec.residual_form is ResidualForm.SUM
    with pytest.raises(ValueError):
        ObjectiveSpec(w1=0.0)


def test_de_bounds_validation():
    cfg = DEConfig(population_size=8, max_generations=5)
    with pytest.raises(ValueError):
        differential_evolution(sphere, [], cfg)
    with pytest.raises(ValueError):
        differential_evolution(sphere, [(1.0, 1.0)], cfg)


def test_de_deterministic_given_seed():
    cfg = DEConfig(population_size=20, max_generations=40, seed=123)
    bounds = [(-3, 3)] * 3
    a = differential_evolution(sphere, bounds, cfg)
    b = differential_evolution(sphere, bounds, cfg)
    assert np.array_equal(a.best_x, b.best_x)
    assert a.best_value == b.best_value
    c = differential_evolution(sphere, bounds, DEConfig(20, 40, seed=124))
    assert not np.array_equal(a.best_x, c.best_x)


def test_de_batch_objective_agrees():
    bounds = [(-2, 2)] * 4
    cfg = DEConfig(population_size=24, max_generations=30, seed=5)
    a = differential_evolution(sphere, bounds, cfg)
    b = differential_evolution(sphere, bounds, cfg, batch_objective=sphere_batch)
    assert np.array_equal(a.best_x, b.best_x)
    assert a.best_value == b.best_value


def test_de_history_monotone_best():
    cfg = DEConfig(population_size=16, max_generations=60, seed=2)
    res = differential_evolution(sphere, [(-4, 4)] * 3, cfg)
    best = res.history[:, 1]
    assert np.all(np.diff(best) <= 1e-15)
    assert res.n_evaluations == (res.n_generations + 1) * 16


def test_de_warm_start_seeds_population():
    # an injected exact optimum must survive greedy selection
    cfg = DEConfig(population_size=12, max_generations=3, seed=9)
    res = differential_evolution(
        sphere, [(-5, 5)] * 4, cfg, init_extra=[np.zeros(4)]
    )
    assert res.best_value == 0.0


def test_de_sphere_convergence():
    # six-dimensional sphere to high precision
    cfg = DEConfig(population_size=90, max_generations=200, seed=0)
    res = differential_evolution(sphere, [(-5.12, 5.12)] * 6, cfg)
    assert res.best_value < 1e-8


def test_stress_profile_rastrigin():
    # rugged multimodal landscape: the stress profile finds the global basin
    cfg = DEConfig.stress(2, 400, seed=1)
    res = differential_evolution(rastrigin, [(-5.12, 5.12)] * 4, cfg)
    assert res.best_value < 1e-3


def test_local_polish_descends_and_never_worsens():
    start = np.array([0.4, -0.3])
    res = local_polish(sphere, start)
    assert res.value < 1e-12
    # a cap of zero iterations cannot make things worse
    res2 = local_polish(sphere, start, max_iterations=1)
    assert res2.value <= sphere(start)


def test_refine_linear_system_single_step():
    a = np.array([[2.0, 1.0], [1.0, 3.0]])
    b = np.array([1.0, 2.0])
    res = exact_root_refine(lambda x: a @ x - b, np.zeros(2), tol=1e-12)
    assert res.converged
    assert res.residual_norm < 1e-12
    assert np.max(np.abs(a @ res.x - b)) < 1e-10


def test_refine_nonlinear_overdetermined():
    # three residuals, two unknowns, consistent root at (1, 2)
    def system(x):
        return np.array(
            [x[0] ** 2 - 1.0, x[1] - 2.0, (x[0] - 1.0) * (x[1] + 1.0)]
        )

    res = exact_root_refine(system, np.array([1.3, 1.7]), tol=1e-13)
    assert res.converged
    assert np.max(np.abs(res.x - [1.0, 2.0])) < 1e-8


def test_refine_reports_divergence():
    # residual bounded away from zero: must raise, carrying the best point
    def system(x):
        return np.array([np.cos(x[0]) + 2.0])

    with pytest.raises(NoConvergenceError):
        exact_root_refine(system, np.array([0.5]), tol=1e-12, max_iterations=50)


def test_cross_validation_convex_agreement():
    cfg = DEConfig(population_size=30, max_generations=80, seed=3)
    report = cross_validate_global(sphere, [(-2, 2)] * 3, cfg)
    assert isinstance(report, CrossValidationReport)
    assert report.max_disagreement < 1e-8
    assert max(report.values()) < 1e-8


def test_cross_validation_dimension_cap():
    cfg = DEConfig(population_size=30, max_generations=10)
    with pytest.raises(ValueError):
        cross_validate_global(sphere, [(-1, 1)] * 13, cfg)
