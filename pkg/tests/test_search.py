import numpy as np
import pytest

from acfs import DomainError, OptimizationError
from acfs.scenarios import is_feasible
from acfs.search import (DECISION_BOX, BoxBounds, adam_optimize, bounded_quasi_newton, cem_optimize, de_optimize,
                         fd_gradient_crn, maximin_lhd, min_pairwise_distance)

TARGET = np.array([0.10, 0.15, 0.20, 0.12, 0.08, 0.55])


def sphere(x):
    return float(np.sum((np.asarray(x) - TARGET) ** 2))


def sphere_grad(x):
    return 2.0 * (np.asarray(x) - TARGET)


class TestLatinHypercube:
    def test_one_point_per_stratum(self):
        X = maximin_lhd(20, seed=0, project=None)
        U = (X - DECISION_BOX.lo) / DECISION_BOX.width
        for col in U.T:
            np.testing.assert_array_equal(np.sort(np.floor(col * 20)), np.arange(20))

    def test_projected_design_feasible(self):
        assert is_feasible(maximin_lhd(50, seed=1))

    def test_restarts_do_not_hurt(self):
        one = maximin_lhd(30, seed=4, n_restarts=1, project=None)
        many = maximin_lhd(30, seed=4, n_restarts=10, project=None)
        assert min_pairwise_distance(many) >= min_pairwise_distance(one)

    def test_deterministic(self):
        np.testing.assert_array_equal(maximin_lhd(12, seed=7), maximin_lhd(12, seed=7))

    def test_bounds_validated(self):
        with pytest.raises(DomainError):
            BoxBounds(np.ones(2), np.zeros(2))


class TestCem:
    def test_finds_sphere_minimum(self):
        res = cem_optimize(sphere, n_iters=30, pop_size=60, seed=0)
        np.testing.assert_allclose(res.best_x, TARGET, atol=0.02)
        assert res.n_evals == 30 * 60
        assert np.all(np.diff(res.best_history) <= 0)

    def test_smoothing_update(self):
        # one iteration with a constant objective: elites are the first ceil(0.15 * 20) = 3 draws
        res = cem_optimize(lambda x: 0.0, n_iters=1, pop_size=20, seed=3, project=None)
        elite = res.population[:3]
        mean0 = DECISION_BOX.center
        np.testing.assert_allclose(res.mean, 0.6 * elite.mean(axis=0) + 0.4 * mean0)

    def test_non_finite_retried(self):
        calls = {"n": 0}

        def flaky(x):
            calls["n"] += 1
            return np.nan if calls["n"] % 3 == 0 else sphere(x)

        res = cem_optimize(flaky, n_iters=2, pop_size=10, seed=0)
        assert np.isfinite(res.scores).all()
        with pytest.raises(OptimizationError):
            cem_optimize(lambda x: np.inf, n_iters=1, pop_size=5, seed=0, max_retries=2)

    def test_bad_elite_fraction(self):
        with pytest.raises(DomainError):
            cem_optimize(sphere, pop_size=5, elite_frac=0.0)


class TestDifferentialEvolution:
    def test_converges_on_sphere(self):
        init = maximin_lhd(30, seed=0)
        res = de_optimize(sphere, init, n_iters=120, seed=1)
        np.testing.assert_allclose(res.best_x, TARGET, atol=1e-3)
        assert res.n_evals == 30 * 121

    def test_greedy_selection_monotone(self):
        res = de_optimize(sphere, maximin_lhd(10, seed=2), n_iters=20, seed=3)
        assert np.all(np.diff(res.best_history) <= 0)
        assert is_feasible(res.population)

    def test_supplied_scores_not_reevaluated(self):
        init = maximin_lhd(8, seed=0)
        res = de_optimize(sphere, init, n_iters=1, seed=0, scores=[sphere(x) for x in init])
        assert res.n_evals == 8

    def test_small_population(self):
        with pytest.raises(DomainError):
            de_optimize(sphere, np.zeros((3, 6)))


class TestFiniteDifference:
    def test_interior_quadratic_exact(self):
        x = np.array([0.2, 0.1, 0.1, 0.1, 0.1, 0.4])
        np.testing.assert_allclose(fd_gradient_crn(sphere, x), sphere_grad(x), atol=1e-10)

    def test_one_sided_at_bound(self):
        x = np.array([0.0, 0.1, 0.1, 0.1, 0.1, 1.0])
        g = fd_gradient_crn(sphere, x, step=1e-6)
        np.testing.assert_allclose(g, sphere_grad(x), atol=1e-5)

    def test_bad_step(self):
        with pytest.raises(DomainError):
            fd_gradient_crn(sphere, TARGET, step=0.0)


class TestQuasiNewton:
    def test_interior_minimum(self):
        res = bounded_quasi_newton(sphere, sphere_grad, np.full(6, 0.1))
        np.testing.assert_allclose(res.x, TARGET, atol=1e-6)
        assert res.status in ("gtol", "ftol", "xtol")

    def test_active_box_and_budget(self):
        # unconstrained optimum has x_6 = 1.2 and allocations summing to 1.5
        target = np.array([0.3] * 5 + [1.2])

        def f(x):
            return float(np.sum((x - target) ** 2))

        res = bounded_quasi_newton(f, lambda x: 2 * (x - target), np.full(6, 0.05))
        np.testing.assert_allclose(res.x, [0.17] * 5 + [1.0], atol=1e-6)

    def test_rosenbrock_box(self):
        bounds = BoxBounds(np.array([-2.0, -2.0]), np.array([2.0, 2.0]))

        def f(x):
            return float(100 * (x[1] - x[0] ** 2) ** 2 + (1 - x[0]) ** 2)

        def g(x):
            return np.array([-400 * x[0] * (x[1] - x[0] ** 2) - 2 * (1 - x[0]), 200 * (x[1] - x[0] ** 2)])

        res = bounded_quasi_newton(f, g, [-1.2, 1.0], bounds=bounds, project=None, max_iter=500, ftol=0)
        np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-4)

    def test_on_accept_called(self):
        seen = []
        bounded_quasi_newton(sphere, sphere_grad, np.full(6, 0.1), on_accept=lambda x, k: seen.append(k))
        assert seen == list(range(1, len(seen) + 1)) and seen

    def test_non_finite_start(self):
        with pytest.raises(OptimizationError):
            bounded_quasi_newton(lambda x: np.nan, sphere_grad, TARGET)


class TestAdam:
    def test_noisy_quadratic(self):
        def noisy_grad(x, rng):
            return sphere_grad(x) + 0.05 * rng.standard_normal(6)

        x = adam_optimize(noisy_grad, np.full(6, 0.1), n_iters=600, lr0=0.02, seed=0)
        np.testing.assert_allclose(x, TARGET, atol=0.02)

    def test_reproducible(self):
        def noisy_grad(x, rng):
            return sphere_grad(x) + rng.standard_normal(6)

        a = adam_optimize(noisy_grad, np.full(6, 0.1), 20, seed=5)
        b = adam_optimize(noisy_grad, np.full(6, 0.1), 20, seed=5)
        np.testing.assert_array_equal(a, b)
