from types import SimpleNamespace
from unittest import mock

import numpy as np
from django.test import SimpleTestCase

from backend.exceptions import OptimizationFailure, SequencingError
from experiments.store import IterationStore
from identification.estimation import ModelEstimate
from identification.kernels import KernelConfig, KernelMatrix, build_kernel
from identification.regression import RegressionProblem, rls_solve
from .baselines import (
    AdaptiveIlcParams,
    AdaptiveIlcState,
    InversionIlcState,
    adaptive_ilc_step,
    inversion_ilc_update,
    regressor_xi,
    rho_gate,
)
from .design import (
    ControllerRegression,
    ControllerSettings,
    DualSystem,
    build_controller_regression,
    design_controller,
    dual_theta,
    ls_controller_variant,
    maximize_dual,
    solve_constrained_rls,
    sure_controller,
)


def _regression(y_c, E, b1=1.0, u_prev=0.0, d_u=100.0, d_c=100.0, sigma_c2=None, floor=None):
    E = np.asarray(E, dtype=float)
    return ControllerRegression(y_c=y_c, phi_c=b1 * E, E=E, u_prev=u_prev, b1_hat=b1,
                                d_u=d_u, d_c=d_c, sigma_c2=sigma_c2, sigma2_floor=floor)


def _objective(reg, theta, P, sigma2):
    return (reg.y_c - reg.phi_c @ theta) ** 2 + sigma2 * theta @ np.linalg.solve(P, theta)


def _bisect(function, low, high, iterations=200):
    """Root of a decreasing function on [low, high]."""
    for _ in range(iterations):
        middle = 0.5 * (low + high)
        if function(middle) > 0:
            low = middle
        else:
            high = middle
    return 0.5 * (low + high)


class ControllerRegressionTest(SimpleTestCase):
    def setUp(self):
        # y_d over times 1..5
        self.store = IterationStore(3, 5, [0.0, 1.0, 2.0, 3.0, 4.0], first_iteration=1)
        self.store.record_iteration(1, [0.5, 0.4, 0.3, 0.2, 0.0], [0.0, 0.8, 1.5, 2.0, 3.0], np.zeros(5))

    def _estimate(self, t, b=(0.9, 0.2), a=(-0.5, 0.1), sigma2=0.01):
        return ModelEstimate(t=t, theta_b_hat=np.array(b), theta_a_hat=np.array(a), sigma2_hat=sigma2)

    def test_first_iteration_has_no_errors(self):
        store = IterationStore(2, 5, np.ones(5), first_iteration=1)
        store.begin_iteration(1)
        reg = build_controller_regression(store, self._estimate(3), 1, 2, 4, 2.0, 0.7)
        np.testing.assert_array_equal(reg.E, np.zeros(4))
        np.testing.assert_array_equal(reg.phi_c, np.zeros(4))
        self.assertTrue(reg.degenerate)

    def test_zero_gain(self):
        self.store.begin_iteration(2)
        reg = build_controller_regression(self.store, self._estimate(3, b=(0.0, 0.2)), 2, 2, 3, 2.0, 0.7)
        np.testing.assert_array_equal(reg.phi_c, np.zeros(3))
        estimate = solve_constrained_rls(reg, KernelConfig('DI', 3, (1.0, 0.5)), 0.1)
        np.testing.assert_array_equal(estimate.theta_c_hat, np.zeros(3))
        self.assertEqual(estimate.u_new, reg.u_prev)

    def test_hand_evaluated_target(self):
        self.store.begin_iteration(2)
        self.store.set_sample(2, 1, u=0.6, y=0.0)
        self.store.set_sample(2, 2, u=0.45, y=0.7)
        self.store.set_sample(2, 3, y=1.4)
        reg = build_controller_regression(self.store, self._estimate(4), 2, 3, 2, 2.0, 0.7)

        # phibar_2(3) = [0, u_2(2), -y_2(3), -y_2(2)]
        phi_bar = np.array([0.0, 0.45, -1.4, -0.7])
        theta = np.array([0.9, 0.2, -0.5, 0.1])
        expected = 3.0 - phi_bar @ theta - 0.9 * 0.3
        self.assertAlmostEqual(reg.y_c, expected, places=12)
        # E_1(4) = [e_1(4), e_0(4)]
        np.testing.assert_allclose(reg.E, [3.0 - 2.0, 0.0])
        np.testing.assert_allclose(reg.phi_c, [0.9, 0.0])
        self.assertEqual(reg.u_prev, 0.3)
        self.assertEqual(reg.sigma2_floor, 0.01)

    def test_sequencing(self):
        self.store.begin_iteration(2)
        with self.assertRaises(SequencingError):
            build_controller_regression(self.store, None, 2, 2, 2, 2.0, 0.7)
        with self.assertRaises(SequencingError):
            build_controller_regression(self.store, self._estimate(2), 2, 2, 2, 2.0, 0.7)


class DualThetaTest(SimpleTestCase):
    def setUp(self):
        self.rng = np.random.default_rng(12)

    def test_inactive_duals_give_unconstrained_rls(self):
        for _ in range(20):
            E = self.rng.standard_normal(4)
            reg = _regression(self.rng.standard_normal(), E, b1=self.rng.uniform(0.5, 2.0), sigma_c2=0.3)
            P = build_kernel(KernelConfig('TC', 4, (1.5, 0.6)))
            theta = dual_theta(reg, 0.0, 0.0, P)
            rls = rls_solve(RegressionProblem(Y=[reg.y_c], Phi=reg.phi_c[None, :], sigma2=0.3, P=P))
            np.testing.assert_allclose(theta, rls.theta_hat, rtol=0, atol=1e-10)

    def test_large_norm_dual_shrinks(self):
        for _ in range(20):
            reg = _regression(self.rng.uniform(1, 5), self.rng.standard_normal(5), sigma_c2=0.1)
            P = build_kernel(KernelConfig('DI', 5, (2.0, 0.7)))
            free = np.linalg.norm(dual_theta(reg, 0.0, 0.0, P))
            shrunk = np.linalg.norm(dual_theta(reg, 0.0, 1e6, P))
            self.assertLessEqual(shrunk, 1e-4 * free)

    def test_hand_instance(self):
        reg = _regression(1.0, [1.0, 0.0], sigma_c2=1.0)
        theta = dual_theta(reg, 1.0, 0.0, KernelMatrix(np.eye(2)))
        np.testing.assert_allclose(theta, [1 / 3, 0.0], atol=1e-14)

    def test_negative_dual_rejected(self):
        with self.assertRaises(ValueError):
            dual_theta(_regression(1.0, [1.0], sigma_c2=1.0), -1.0, 0.0, KernelMatrix(np.eye(1)))


class MaximizeDualTest(SimpleTestCase):
    def test_feasible_optimum(self):
        reg = _regression(0.1, [0.2, 0.1], d_u=2.0, d_c=0.7, sigma_c2=0.1)
        self.assertEqual(maximize_dual(reg, KernelMatrix(np.eye(2))), (0.0, 0.0))

    def test_norm_constraint_only(self):
        reg = _regression(5.0, [1.0, 0.5], d_u=100.0, d_c=0.5, sigma_c2=0.01)
        P = KernelMatrix(np.eye(2))
        lambda1, lambda2 = maximize_dual(reg, P)
        self.assertEqual(lambda1, 0.0)
        self.assertGreater(lambda2, 0.0)
        self.assertAlmostEqual(np.linalg.norm(dual_theta(reg, 0.0, lambda2, P)), 0.5, delta=1e-4)

        phi = reg.phi_c

        def excess(value):
            theta = np.linalg.solve(np.outer(phi, phi) + (0.01 + value) * np.eye(2), phi * reg.y_c)
            return theta @ theta - 0.25

        self.assertAlmostEqual(lambda2, _bisect(excess, 0.0, 1e3), delta=1e-4 * lambda2)

    def test_input_constraint_only(self):
        reg = _regression(5.0, [1.0, 0.5], u_prev=1.8, d_u=2.0, d_c=10.0, sigma_c2=0.01)
        P = KernelMatrix(np.eye(2))
        lambda1, lambda2 = maximize_dual(reg, P)
        self.assertEqual(lambda2, 0.0)
        self.assertGreater(lambda1, 0.0)
        theta = dual_theta(reg, lambda1, 0.0, P)
        self.assertAlmostEqual(abs(reg.E @ theta + reg.u_prev), 2.0, delta=1e-4)

        E, phi = reg.E, reg.phi_c

        def excess(value):
            matrix = np.outer(phi, phi) + 0.01 * np.eye(2) + value * np.outer(E, E)
            theta = np.linalg.solve(matrix, phi * reg.y_c - value * reg.u_prev * E)
            return (E @ theta + reg.u_prev) ** 2 - 4.0

        self.assertAlmostEqual(lambda1, _bisect(excess, 0.0, 1e3), delta=1e-4 * lambda1)


class ConstrainedSolveTest(SimpleTestCase):
    def test_unconstrained_optimum(self):
        reg = _regression(0.1, [0.2, 0.1, 0.05], d_u=2.0, d_c=0.7, sigma_c2=0.1)
        estimate = solve_constrained_rls(reg, KernelConfig('DI', 3, (1.0, 0.5)), 0.1)
        self.assertEqual((estimate.lambda1, estimate.lambda2), (0.0, 0.0))
        self.assertLessEqual(estimate.kkt_residual, 1e-8)
        rls = rls_solve(RegressionProblem(Y=[0.1], Phi=reg.phi_c[None, :], sigma2=0.1,
                                          P=build_kernel(KernelConfig('DI', 3, (1.0, 0.5)))))
        np.testing.assert_allclose(estimate.theta_c_hat, rls.theta_hat, atol=1e-12)
        self.assertAlmostEqual(estimate.u_new, reg.E @ estimate.theta_c_hat)

    def test_frozen_controller(self):
        reg = _regression(3.0, [1.0, 2.0], u_prev=0.4, d_u=2.0, d_c=0.0, sigma_c2=0.1)
        estimate = solve_constrained_rls(reg, KernelConfig('DI', 2, (1.0, 0.5)), 0.1)
        np.testing.assert_array_equal(estimate.theta_c_hat, np.zeros(2))
        self.assertEqual(estimate.u_new, 0.4)

    def test_grid_oracle(self):
        for seed in range(50):
            rng = np.random.default_rng(seed)
            d_u, d_c = rng.uniform(0.5, 2.0), rng.uniform(0.2, 1.0)
            reg = _regression(rng.uniform(-3, 3), rng.standard_normal(2) * 2, b1=rng.uniform(0.3, 2.0),
                              u_prev=rng.uniform(-0.9, 0.9) * d_u, d_u=d_u, d_c=d_c)
            config = KernelConfig('TC', 2, (rng.uniform(0.5, 2.0), rng.uniform(0.2, 0.8)))
            sigma2 = rng.uniform(0.01, 1.0)
            P = build_kernel(config).values

            estimate = solve_constrained_rls(reg, config, sigma2)
            self.assertLessEqual(estimate.kkt_residual, 1e-5)
            self.assertLessEqual(estimate.theta_norm, d_c + 1e-9)
            self.assertLessEqual(abs(estimate.u_new), d_u + 1e-9)

            axis = np.arange(-d_c, d_c + 1e-12, 1e-2)
            grid = np.stack(np.meshgrid(axis, axis), axis=-1).reshape(-1, 2)
            feasible = (np.linalg.norm(grid, axis=1) <= d_c) & (np.abs(reg.u_prev + grid @ reg.E) <= d_u)
            candidates = grid[feasible]
            if not len(candidates):
                continue
            values = (reg.y_c - candidates @ reg.phi_c) ** 2 + sigma2 * np.einsum(
                'ij,jk,ik->i', candidates, np.linalg.inv(P), candidates)
            self.assertLessEqual(_objective(reg, estimate.theta_c_hat, P, sigma2), values.min() + 1e-4)

    def test_weak_and_strong_duality(self):
        reg = _regression(5.0, [1.0, 0.5, 0.2], u_prev=1.5, d_u=2.0, d_c=0.4, sigma_c2=0.05)
        estimate = solve_constrained_rls(reg, KernelConfig('DI', 3, (1.0, 0.8)), 0.05)
        self.assertLessEqual(estimate.dual_objective, estimate.primal_objective + 1e-6)
        self.assertLessEqual(estimate.primal_objective - estimate.dual_objective, 1e-5)

    def test_joint_scaling_invariance(self):
        config = KernelConfig('DI', 3, (1.0, 0.8))
        base = _regression(5.0, [1.0, 0.5, 0.2], u_prev=1.5, d_u=2.0, d_c=0.4)
        scaled = ControllerRegression(y_c=3 * base.y_c, phi_c=3 * base.phi_c, E=base.E, u_prev=base.u_prev,
                                      b1_hat=3 * base.b1_hat, d_u=base.d_u, d_c=base.d_c)
        first = solve_constrained_rls(base, config, 0.05)
        second = solve_constrained_rls(scaled, config, 9 * 0.05)
        np.testing.assert_allclose(first.theta_c_hat, second.theta_c_hat, atol=1e-8)

    def test_previous_input_on_the_bound(self):
        reg = _regression(-4.0, [1.0, 0.5], u_prev=2.0, d_u=2.0, d_c=0.5, sigma_c2=0.1)
        estimate = solve_constrained_rls(reg, KernelConfig('DI', 2, (1.0, 0.5)), 0.1)
        self.assertLessEqual(abs(estimate.u_new), 2.0 + 1e-9)
        self.assertLess(estimate.u_new, 2.0)

    def test_least_squares_variant_keeps_constraints(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            reg = _regression(rng.uniform(-5, 5), rng.standard_normal(4), b1=rng.uniform(0.2, 1.0),
                              u_prev=rng.uniform(-1.5, 1.5), d_u=2.0, d_c=0.7)
            estimate = ls_controller_variant(reg)
            self.assertLessEqual(estimate.theta_norm, 0.7 + 1e-9)
            self.assertLessEqual(abs(estimate.u_new), 2.0 + 1e-9)
            self.assertEqual(estimate.source, 'krilc-ls')

    def test_least_squares_unconstrained_is_minimum_norm(self):
        reg = _regression(0.2, [1.0, 1.0], d_u=10.0, d_c=10.0)
        estimate = ls_controller_variant(reg)
        np.testing.assert_allclose(estimate.theta_c_hat, [0.1, 0.1], atol=1e-9)


class DualFailureTest(SimpleTestCase):
    def setUp(self):
        # input constraint active, so the dual needs a root search
        self.reg = _regression(5.0, [1.0, 0.5], u_prev=1.8, d_u=2.0, d_c=10.0, sigma_c2=0.01)
        self.P = KernelMatrix(np.eye(2))

    def test_root_search_error_is_an_optimization_failure(self):
        error = RuntimeError('Failed to converge after 100 iterations.')
        with mock.patch('controller.design.brentq', side_effect=error):
            with self.assertRaises(OptimizationFailure):
                DualSystem(self.reg, self.P).maximize()

    def test_unconverged_root_is_an_optimization_failure(self):
        result = SimpleNamespace(converged=False, iterations=200, flag='convergence error')
        with mock.patch('controller.design.brentq', return_value=(0.5, result)):
            with self.assertRaises(OptimizationFailure):
                DualSystem(self.reg, self.P).maximize()

    def test_tuning_survives_failing_root_searches(self):
        with mock.patch('controller.design.brentq', side_effect=RuntimeError('no convergence')):
            try:
                config, sigma2 = sure_controller(self.reg, 'DI', ControllerSettings(starts=1, max_evaluations=20))
            except OptimizationFailure:
                return
        self.assertGreater(sigma2, 0.0)
        self.assertEqual(config.n, 2)

    def test_badly_conditioned_regression(self):
        reg = _regression(1e3, [1e6, 1e-6], b1=1e-7, u_prev=1.9, d_u=2.0, d_c=1e3)
        cases = ((KernelConfig('DI', 2, (1e8, 0.999)), 1e-12), (KernelConfig('TC', 2, (1e-6, 0.01)), 1e3))
        for config, sigma2 in cases:
            try:
                estimate = solve_constrained_rls(reg, config, sigma2)
            except OptimizationFailure:
                continue
            self.assertLessEqual(abs(estimate.u_new), 2.0 + 1e-9)
            self.assertAlmostEqual(estimate.u_new, reg.u_prev + reg.E @ estimate.theta_c_hat, places=9)

    def test_saturated_dual_is_a_design_failure(self):
        reg = _regression(1e9, [1.0, 0.5], d_u=1.0, d_c=1e12, sigma_c2=1e-6)
        with self.assertRaisesRegex(OptimizationFailure, 'saturated'):
            solve_constrained_rls(reg, KernelConfig('DI', 2, (1.0, 0.5)), 1e-6)

    def test_input_follows_the_gain(self):
        for seed in range(30):
            rng = np.random.default_rng(100 + seed)
            reg = _regression(rng.uniform(-5, 5), rng.standard_normal(3) * 2, b1=rng.uniform(0.3, 2.0),
                              u_prev=rng.uniform(-1.9, 1.9), d_u=2.0, d_c=rng.uniform(0.1, 1.0))
            estimate = solve_constrained_rls(reg, KernelConfig('DI', 3, (1.0, 0.7)), rng.uniform(0.01, 1.0))
            self.assertEqual(estimate.u_new, reg.u_prev + float(reg.E @ estimate.theta_c_hat))
            self.assertLessEqual(abs(estimate.u_new), 2.0 + 1e-9)
            self.assertLessEqual(estimate.theta_norm, reg.d_c + 1e-9)


class ControllerSureTest(SimpleTestCase):
    def test_degenerate_regression(self):
        reg = _regression(1.0, [0.0, 0.0, 0.0], floor=0.02)
        config, sigma2 = sure_controller(reg, 'DI')
        self.assertEqual(config.eta, (0.0, 0.0))
        self.assertEqual(sigma2, 0.02)

    def test_hat_value_two_ways(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            reg = _regression(rng.standard_normal(), rng.standard_normal(3), u_prev=0.5, d_u=1.0, d_c=0.3,
                              sigma_c2=0.2)
            P = build_kernel(KernelConfig('TC', 3, (1.0, 0.6))).values
            system = DualSystem(reg, P)
            lambda1, lambda2, _ = system.maximize()
            matrix = (np.outer(reg.phi_c, reg.phi_c) + 0.2 * np.linalg.inv(P)
                      + lambda1 * np.outer(reg.E, reg.E) + lambda2 * np.eye(3))
            direct = reg.phi_c @ np.linalg.solve(matrix, reg.phi_c)
            self.assertAlmostEqual(system.hat_value(lambda1, lambda2), direct, places=10)
            self.assertGreaterEqual(direct, 0.0)
            self.assertLessEqual(direct, 1.0)

    def test_tuned_hyper_parameters_in_domain(self):
        rng = np.random.default_rng(21)
        for seed in range(5):
            reg = _regression(rng.uniform(-2, 2), rng.standard_normal(4), b1=0.8, u_prev=0.3,
                              d_u=2.0, d_c=0.7, floor=0.01)
            config, sigma2 = sure_controller(reg, 'DI', seed=seed)
            self.assertTrue(config.in_domain())
            self.assertLess(config.alpha, 1.0)
            self.assertGreaterEqual(sigma2, 0.01)

    def test_design_pipeline(self):
        reg = _regression(1.5, [0.8, -0.3, 0.1, 0.05], b1=1.1, u_prev=0.5, d_u=2.0, d_c=0.7, floor=0.01)
        estimate = design_controller(reg, ControllerSettings(n_c=4, d_u=2.0, d_c=0.7), seed=3)
        self.assertLessEqual(estimate.theta_norm, 0.7 + 1e-9)
        self.assertLessEqual(abs(estimate.u_new), 2.0 + 1e-9)
        self.assertGreater(estimate.sigma_c2_hat, 0.0)
        self.assertLessEqual(estimate.kkt_residual, 1e-5)


class AdaptiveIlcTest(SimpleTestCase):
    def test_zero_errors_leave_state(self):
        state = AdaptiveIlcState(horizon=3)
        state.theta[1] = [0.2, -0.1, 0.05]
        u = adaptive_ilc_step(state, 2, [0.0, 0.0, 0.0], 0.7, 0.0, 0.0)
        self.assertEqual(u, 0.7)
        np.testing.assert_array_equal(state.theta[1], [0.2, -0.1, 0.05])

    def test_first_iteration_repeats_input(self):
        state = AdaptiveIlcState(horizon=2)
        self.assertEqual(adaptive_ilc_step(state, 1, [0.3, 0.0, 0.0], -0.2, 0.0, 0.0), -0.2)

    def test_regressor(self):
        np.testing.assert_allclose(regressor_xi([0.4, 1.0, 0.0], 3), [-0.4, -0.6, 1.0])
        np.testing.assert_allclose(regressor_xi([0.4], 3), [-0.4, 0.4, 0.0])

    def test_three_step_hand_trace(self):
        params = AdaptiveIlcParams(l_theta=3, eta_theta=0.1, mu_theta=0.5, eta_psi=1.0, mu_psi=1.0)
        state = AdaptiveIlcState(horizon=1, params=params)

        u1 = adaptive_ilc_step(state, 1, [0.0, 0.0, 0.0], 0.0, 0.0, 0.0)
        self.assertEqual(u1, 0.0)
        self.assertEqual(state.psi_hat[0], 1.0)

        u2 = adaptive_ilc_step(state, 1, [1.0, 0.0, 0.0], 0.0, 0.5, 0.2)
        psi2 = 1.0 + (0.5 - 0.2) * 0.2 / 1.04
        self.assertAlmostEqual(state.psi_hat[0], psi2, places=14)
        self.assertEqual(u2, 0.0)
        theta3 = 0.1 * psi2 * np.array([-1.0, 1.0, 0.0]) / ((0.5 + psi2 ** 2) * 2.0)
        np.testing.assert_allclose(state.theta[0], theta3, atol=1e-15)

        u3 = adaptive_ilc_step(state, 1, [0.4, 1.0, 0.0], 0.1, -0.1, 0.3)
        psi3 = psi2 + (-0.1 - psi2 * 0.3) * 0.3 / 1.09
        xi = np.array([-0.4, -0.6, 1.0])
        self.assertAlmostEqual(u3, 0.1 + xi @ theta3, places=14)
        self.assertAlmostEqual(state.psi_hat[0], psi3, places=14)
        theta4 = theta3 + 0.1 * (psi3 * 0.4 - 0.5 * xi @ theta3) * xi / ((0.5 + psi3 ** 2) * (xi @ xi))
        np.testing.assert_allclose(state.theta[0], theta4, atol=1e-15)

    def test_parameter_domain(self):
        with self.assertRaises(ValueError):
            AdaptiveIlcParams(eta_theta=1.5)
        with self.assertRaises(ValueError):
            AdaptiveIlcParams(mu_psi=0.0)


class InversionIlcTest(SimpleTestCase):
    def test_zero_error_keeps_spectrum(self):
        U = np.fft.fft([1.0, 2.0, 0.5, -1.0])
        Y = np.fft.fft([0.3, 0.1, 0.2, 0.4])
        np.testing.assert_array_equal(inversion_ilc_update(U, Y, np.zeros(4)), U)

    def test_gate_values(self):
        self.assertAlmostEqual(float(rho_gate(0.9, 0.9)), 1.0)
        self.assertAlmostEqual(float(rho_gate(0.45, 0.9)), 0.5)
        self.assertEqual(float(rho_gate(2.0, 0.9)), 1.0)
        self.assertEqual(float(rho_gate(0.0, 0.9)), 0.0)

    def test_zero_output_bins_untouched(self):
        U = np.array([1 + 1j, 2.0, 3 - 1j])
        Y = np.array([0.0, 2.0, 0.0])
        E = np.array([5.0, 1.0, 5.0])
        updated = inversion_ilc_update(U, Y, E)
        self.assertEqual(updated[0], U[0])
        self.assertEqual(updated[2], U[2])
        self.assertAlmostEqual(updated[1], 2.0 + 2.0 / 2.0 * 1.0)

    def test_real_signals_stay_real(self):
        rng = np.random.default_rng(0)
        state = InversionIlcState.from_input(rng.standard_normal(16))
        state.update(rng.standard_normal(16), rng.standard_normal(16))
        self.assertLess(np.abs(np.fft.ifft(state.U).imag).max(), 1e-12)
        self.assertEqual(state.N, 16)
