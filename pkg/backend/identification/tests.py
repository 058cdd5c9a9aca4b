import numpy as np
from django.test import SimpleTestCase

from backend.exceptions import (
    HorizonIndexError,
    IllConditionedError,
    ParameterDomainError,
    SequencingError,
)
from experiments.metrics import model_fit
from experiments.store import IterationStore
from plant.systems import LtvArxModel, simulate_iteration
from .estimation import (
    EstimationSettings,
    build_regressors,
    estimate_model,
    estimate_model_ls,
)
from .kernels import KernelConfig, KernelFamily, KernelMatrix, block_diag_model_kernel, build_kernel
from .regression import (
    RegressionProblem,
    ls_solve,
    minimize_sure,
    profiled_sure,
    rls_solve,
    sure_objective,
)


def _random_config(rng, family, n):
    c = rng.uniform(0.0, 10.0)
    alpha = rng.uniform(0.0, 1.0)
    if family is KernelFamily.DC:
        return KernelConfig(family, n, (c, alpha, rng.uniform(-1.0, 1.0)))
    return KernelConfig(family, n, (c, alpha))


class KernelTest(SimpleTestCase):
    def test_di_example(self):
        P = build_kernel(KernelConfig('DI', 3, (2.0, 0.5)))
        np.testing.assert_allclose(P.values, np.diag([1.0, 0.5, 0.25]))

    def test_tc_example(self):
        P = build_kernel(KernelConfig('TC', 2, (1.0, 0.5)))
        np.testing.assert_allclose(P.values, [[0.5, 0.25], [0.25, 0.25]])

    def test_dc_with_unit_correlation(self):
        P = build_kernel(KernelConfig('DC', 2, (1.0, 0.25, 1.0)))
        np.testing.assert_allclose(P.values, [[0.25, 0.125], [0.125, 0.0625]])

    def test_dc_reduces_to_tc_and_di(self):
        rng = np.random.default_rng(11)
        for n in range(1, 11):
            c, alpha = rng.uniform(0.1, 5.0), rng.uniform(0.0, 0.99)
            dc_tc = build_kernel(KernelConfig('DC', n, (c, alpha, np.sqrt(alpha))))
            tc = build_kernel(KernelConfig('TC', n, (c, alpha)))
            np.testing.assert_allclose(dc_tc.values, tc.values, rtol=0, atol=1e-14)

            dc_di = build_kernel(KernelConfig('DC', n, (c, alpha, 0.0)))
            di = build_kernel(KernelConfig('DI', n, (c, alpha)))
            np.testing.assert_allclose(dc_di.values, di.values, rtol=0, atol=1e-14)

    def test_random_draws_are_symmetric_psd(self):
        rng = np.random.default_rng(2024)
        for family in KernelFamily:
            for _ in range(1000):
                P = build_kernel(_random_config(rng, family, int(rng.integers(1, 16))))
                self.assertTrue(P.is_symmetric())
                self.assertTrue(P.is_psd())

    def test_diagonal_decays(self):
        for family, eta in (('DC', (1.0, 0.7, 0.3)), ('TC', (1.0, 0.7)), ('DI', (1.0, 0.7))):
            diagonal = np.diag(build_kernel(KernelConfig(family, 12, eta)).values)
            self.assertTrue(np.all(np.diff(diagonal) <= 0))

    def test_domain_violation_names_bound(self):
        with self.assertRaises(ParameterDomainError) as context:
            build_kernel(KernelConfig('TC', 3, (1.0, 1.0)))
        self.assertEqual(context.exception.name, 'alpha')

        with self.assertRaises(ParameterDomainError) as context:
            build_kernel(KernelConfig('DC', 3, (1.0, 0.5, 1.5)))
        self.assertEqual(context.exception.name, 'beta')

        with self.assertRaises(ParameterDomainError):
            build_kernel(KernelConfig('DI', 3, (-1.0, 0.5)))

    def test_boundary_kernels_are_valid(self):
        self.assertTrue(np.all(build_kernel(KernelConfig('DI', 4, (0.0, 0.5))).values == 0))
        P = build_kernel(KernelConfig('TC', 3, (1.0, 0.0)))
        self.assertTrue(np.all(P.values == 0))


class BlockKernelTest(SimpleTestCase):
    def test_scalar_blocks(self):
        P = block_diag_model_kernel(KernelMatrix(np.diag([1.0])), KernelMatrix(np.diag([2.0])))
        np.testing.assert_array_equal(P.values, np.diag([1.0, 2.0]))

    def test_identity_blocks(self):
        P = block_diag_model_kernel(KernelMatrix(np.eye(2)), KernelMatrix(np.eye(2)))
        np.testing.assert_array_equal(P.values, np.eye(4))

    def test_input_block_leads(self):
        pb = build_kernel(KernelConfig('TC', 2, (1.0, 0.5)))
        pa = build_kernel(KernelConfig('DI', 1, (1.0, 0.5)))
        P = block_diag_model_kernel(pb, pa)
        np.testing.assert_allclose(P.values, [[0.5, 0.25, 0], [0.25, 0.25, 0], [0, 0, 0.5]])
        self.assertEqual([block.family for block in P.blocks], [KernelFamily.TC, KernelFamily.DI])


class RegressionTest(SimpleTestCase):
    def setUp(self):
        self.rng = np.random.default_rng(7)

    def test_rls_example(self):
        prob = RegressionProblem(Y=[1.0, 2.0], Phi=np.eye(2), sigma2=1.0, P=KernelMatrix(np.eye(2)))
        solution = rls_solve(prob)
        np.testing.assert_allclose(solution.theta_hat, [0.5, 1.0])
        self.assertAlmostEqual(solution.hat_matrix_trace, 1.0)

    def test_empty_data(self):
        prob = RegressionProblem(Y=np.zeros(0), Phi=np.zeros((0, 3)), sigma2=1.0, P=KernelMatrix(np.eye(3)))
        solution = rls_solve(prob)
        np.testing.assert_array_equal(solution.theta_hat, np.zeros(3))
        self.assertEqual(solution.hat_matrix_trace, 0.0)
        self.assertEqual(sure_objective(prob), 0.0)

    def test_large_kernel_matches_least_squares(self):
        for _ in range(100):
            Phi = self.rng.standard_normal((50, 5))
            Y = self.rng.standard_normal(50)
            prob = RegressionProblem(Y=Y, Phi=Phi, sigma2=1.0, P=KernelMatrix(1e12 * np.eye(5)))
            rls = rls_solve(prob).theta_hat
            ls = ls_solve(Y, Phi)
            self.assertLessEqual(np.linalg.norm(rls - ls) / np.linalg.norm(ls), 1e-6)

    def test_inverse_free_form_matches_normal_equations(self):
        for _ in range(100):
            N = int(self.rng.integers(1, 30))
            n = int(self.rng.integers(1, 12))
            Phi = self.rng.standard_normal((N, n))
            Y = self.rng.standard_normal(N)
            sigma2 = self.rng.uniform(0.1, 2.0)
            root = self.rng.standard_normal((n, n))
            P = root @ root.T + 0.5 * np.eye(n)

            solution = rls_solve(RegressionProblem(Y=Y, Phi=Phi, sigma2=sigma2, P=KernelMatrix(P)))
            normal = np.linalg.solve(Phi.T @ Phi + sigma2 * np.linalg.inv(P), Phi.T @ Y)
            self.assertLessEqual(
                np.linalg.norm(solution.theta_hat - normal),
                1e-8 * max(np.linalg.norm(normal), 1e-12),
            )

            hat = Phi @ np.linalg.solve(Phi.T @ Phi + sigma2 * np.linalg.inv(P), Phi.T)
            self.assertAlmostEqual(solution.hat_matrix_trace, np.trace(hat), places=8)
            self.assertLessEqual(solution.hat_matrix_trace, min(N, n) + 1e-9)
            self.assertGreaterEqual(solution.hat_matrix_trace, 0.0)

    def test_singular_kernel_zeroes_null_space(self):
        Phi = self.rng.standard_normal((8, 3))
        Y = self.rng.standard_normal(8)
        P = np.diag([1.0, 0.0, 2.0])
        theta = rls_solve(RegressionProblem(Y=Y, Phi=Phi, sigma2=0.5, P=KernelMatrix(P))).theta_hat
        self.assertAlmostEqual(theta[1], 0.0, places=12)

    def test_sure_example(self):
        prob = RegressionProblem(Y=[1.0, 2.0], Phi=np.eye(2), sigma2=1.0, P=KernelMatrix(np.eye(2)))
        self.assertAlmostEqual(sure_objective(prob), 3.25)

    def test_sure_with_zero_output(self):
        prob = RegressionProblem(Y=np.zeros(2), Phi=np.eye(2), sigma2=1.0, P=KernelMatrix(np.eye(2)))
        self.assertAlmostEqual(sure_objective(prob), 2.0)

    def test_sure_invariant_to_row_order(self):
        Phi = self.rng.standard_normal((12, 4))
        Y = self.rng.standard_normal(12)
        P = KernelMatrix(build_kernel(KernelConfig('TC', 4, (1.0, 0.6))).values)
        order = self.rng.permutation(12)
        first = sure_objective(RegressionProblem(Y=Y, Phi=Phi, sigma2=0.3, P=P))
        second = sure_objective(RegressionProblem(Y=Y[order], Phi=Phi[order], sigma2=0.3, P=P))
        self.assertAlmostEqual(first, second, places=10)


class LeastSquaresTest(SimpleTestCase):
    def test_identity(self):
        np.testing.assert_allclose(ls_solve([3.0, 4.0], np.eye(2)), [3.0, 4.0])

    def test_mean(self):
        np.testing.assert_allclose(ls_solve([1.0, 3.0], [[1.0], [1.0]]), [2.0])

    def test_noiseless_recovery(self):
        rng = np.random.default_rng(3)
        Phi = rng.standard_normal((50, 5))
        theta = rng.standard_normal(5)
        np.testing.assert_allclose(ls_solve(Phi @ theta, Phi), theta, atol=1e-10)

    def test_rank_deficient(self):
        Phi = np.ones((4, 2))
        with self.assertRaises(IllConditionedError):
            ls_solve(np.arange(4.0), Phi)

    def test_too_few_rows(self):
        with self.assertRaises(IllConditionedError):
            ls_solve([1.0], [[1.0, 2.0]])


class SureSearchTest(SimpleTestCase):
    def _prior_draw(self, seed, sigma2=0.1, n=20, N=100):
        rng = np.random.default_rng(seed)
        P = build_kernel(KernelConfig('DI', n, (1.0, 0.8))).values
        theta = rng.multivariate_normal(np.zeros(n), P)
        Phi = rng.standard_normal((N, n))
        Y = Phi @ theta + np.sqrt(sigma2) * rng.standard_normal(N)
        return Y, Phi

    def test_noise_variance_recovery(self):
        hits = 0
        for seed in range(50):
            Y, Phi = self._prior_draw(seed)
            result = minimize_sure(Y, Phi, KernelFamily.DI, seed=seed)
            if 0.1 / 3 <= result.sigma2_hat <= 0.3:
                hits += 1
        self.assertGreaterEqual(hits, 40)

    def test_single_observation(self):
        result = minimize_sure([0.7], [[1.0, 0.5, 0.2]], KernelFamily.TC, seed=1)
        self.assertTrue(np.all(np.isfinite(result.solution.theta_hat)))
        self.assertTrue(np.isfinite(result.solution.sure_value(result.sigma2_hat)))

    def test_returned_point_is_local_minimum(self):
        Y, Phi = self._prior_draw(5)
        result = minimize_sure(Y, Phi, KernelFamily.DI, seed=5)
        best, _ = profiled_sure(Y, Phi, result.eta_hat)
        config = result.eta_hat[0]
        for index in range(2):
            for factor in (0.99, 1.01):
                eta = list(config.eta)
                eta[index] *= factor
                if index == 1 and eta[1] >= 1.0:
                    continue
                perturbed = KernelConfig(config.family, config.n, tuple(eta))
                value, _ = profiled_sure(Y, Phi, (perturbed,))
                self.assertGreaterEqual(value, best - 1e-7 * abs(best))

    def test_seed_determinism(self):
        Y, Phi = self._prior_draw(9, N=30)
        first = minimize_sure(Y, Phi, KernelFamily.TC, seed=4)
        second = minimize_sure(Y, Phi, KernelFamily.TC, seed=4)
        self.assertEqual(first.eta_hat, second.eta_hat)
        self.assertEqual(first.sigma2_hat, second.sigma2_hat)

    def test_block_layout_must_cover_parameters(self):
        with self.assertRaises(ValueError):
            minimize_sure([1.0, 2.0], np.eye(2), (('DI', 1), ('DI', 2)))


def _frozen_plant(horizon):
    a = np.tile([-0.5, 0.06], (horizon, 1))
    b = np.tile([1.0, 0.5], (horizon, 1))
    return LtvArxModel(a=a, b=b)


def _white_noise_store(plant, iterations, seed, noise=0.0):
    rng = np.random.default_rng(seed)
    horizon = plant.horizon
    store = IterationStore(iterations, horizon, np.zeros(horizon), first_iteration=1)
    for j in range(1, iterations + 1):
        u = rng.standard_normal(horizon)
        v = noise * rng.standard_normal(horizon)
        v[0] = 0.0
        store.record_iteration(j, u, simulate_iteration(plant, u, v), v)
    return store


class RegressorTest(SimpleTestCase):
    def setUp(self):
        self.store = IterationStore(3, 6, np.zeros(6), first_iteration=1)
        for j in (1, 2):
            u = np.arange(1.0, 7.0) * j
            y = np.concatenate([[0.0], np.arange(2.0, 7.0) * 10 * j])
            self.store.record_iteration(j, u, y, np.zeros(6))

    def test_first_iteration_is_empty(self):
        view = build_regressors(self.store, 1, 3, 2, 2)
        self.assertEqual(view.rows, 0)
        self.assertEqual(view.Phi.shape, (0, 4))

    def test_first_time_is_zero(self):
        view = build_regressors(self.store, 3, 1, 2, 2)
        self.assertEqual(view.rows, 2)
        np.testing.assert_array_equal(view.Phi, np.zeros((2, 4)))

    def test_hand_built_rows(self):
        view = build_regressors(self.store, 3, 5, 2, 2)
        np.testing.assert_array_equal(view.Y, [50.0, 100.0])
        np.testing.assert_array_equal(view.Phi, [[4.0, 3.0, -40.0, -30.0], [8.0, 6.0, -80.0, -60.0]])

    def test_out_of_horizon(self):
        with self.assertRaises(HorizonIndexError):
            build_regressors(self.store, 3, 7, 2, 2)
        with self.assertRaises(HorizonIndexError):
            build_regressors(self.store, 0, 2, 2, 2)

    def test_missing_iterations(self):
        store = IterationStore(4, 6, np.zeros(6))
        with self.assertRaises(SequencingError):
            build_regressors(store, 3, 2, 2, 2)

    def test_initial_experiment_row(self):
        store = IterationStore(2, 4, np.zeros(4), first_iteration=0)
        store.record_iteration(0, [1.0, 2.0, 3.0, 4.0], [0.0, 1.0, 2.0, 3.0], np.zeros(4))
        view = build_regressors(store, 1, 3, 1, 1)
        np.testing.assert_array_equal(view.Phi, [[2.0, -1.0]])


class ModelEstimationTest(SimpleTestCase):
    def setUp(self):
        self.settings = EstimationSettings(n_a=2, n_b=2)

    def test_single_row_is_well_posed(self):
        store = _white_noise_store(_frozen_plant(8), 1, seed=1, noise=0.1)
        estimate = estimate_model(store, 2, 4, self.settings, seed=0)
        self.assertTrue(np.all(np.isfinite(estimate.theta)))
        self.assertEqual(estimate.theta_b_hat.shape, (2,))
        self.assertEqual(len(estimate.eta_m_hat), 2)

    def test_noiseless_frozen_plant(self):
        plant = _frozen_plant(12)
        store = _white_noise_store(plant, 30, seed=2)
        for t in range(5, 13):
            estimate = estimate_model(store, 31, t, self.settings, seed=t)
            truth = np.concatenate([plant.b[t - 1], plant.a[t - 1]])
            self.assertGreaterEqual(model_fit(truth, estimate.theta), 99.0)

    def test_order_independence(self):
        store = _white_noise_store(_frozen_plant(10), 6, seed=3, noise=0.05)
        forward = [estimate_model(store, 7, t, self.settings, seed=t) for t in (3, 7)]
        backward = [estimate_model(store, 7, t, self.settings, seed=t) for t in (7, 3)][::-1]
        for first, second in zip(forward, backward):
            np.testing.assert_array_equal(first.theta, second.theta)

    def test_warm_start_keeps_estimate_finite(self):
        store = _white_noise_store(_frozen_plant(10), 8, seed=4, noise=0.05)
        previous = estimate_model(store, 8, 6, self.settings, seed=1)
        estimate = estimate_model(store, 9, 6, self.settings, seed=1, warm_start=previous)
        self.assertTrue(np.all(np.isfinite(estimate.theta)))

    def test_regularization_shrinks_tail(self):
        settings = EstimationSettings(n_a=6, n_b=6)
        plant = _frozen_plant(14)
        rls_tail, ls_tail = [], []
        for seed in range(20):
            store = _white_noise_store(plant, 16, seed=100 + seed, noise=0.3)
            rls = estimate_model(store, 17, 12, settings, seed=seed)
            ls = estimate_model_ls(store, 17, 12, settings)
            rls_tail.append(np.linalg.norm(np.r_[rls.theta_b_hat[2:], rls.theta_a_hat[2:]]))
            ls_tail.append(np.linalg.norm(np.r_[ls.theta_b_hat[2:], ls.theta_a_hat[2:]]))
        self.assertLessEqual(np.mean(rls_tail), np.mean(ls_tail))

    def test_least_squares_needs_enough_rows(self):
        store = _white_noise_store(_frozen_plant(8), 2, seed=5)
        with self.assertRaises(IllConditionedError):
            estimate_model_ls(store, 3, 5, self.settings)
