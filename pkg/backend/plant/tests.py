import math

import numpy as np
from django.test import SimpleTestCase

from backend.exceptions import ConfigurationError, HorizonIndexError
from .bounds import report_from_sums, bound_report
from .generator import (
    AcceptanceFilter,
    GeneratorConfig,
    benchmark_plant,
    generate_plant,
    benchmark_coefficients,
    rotate_root,
    rotated_roots,
)
from .references import reference_two_tone, reference_ramp, reference_trajectory
from .serializers import plant_from_text, plant_to_text
from .systems import (
    LtvArxModel,
    bibo_sums,
    impulse_response,
    impulse_table,
    propagate,
    simulate_iteration,
    stacked_inputs,
    to_state_space,
)


def _first_order(horizon, a1=-0.5, b1=1.0):
    return LtvArxModel(a=np.full((horizon, 1), a1), b=np.full((horizon, 1), b1))


def _random_plants(count, horizon, seed=0):
    return [
        generate_plant(GeneratorConfig(horizon=horizon, seed=seed + k)).model
        for k in range(count)
    ]


class SimulationTest(SimpleTestCase):
    def test_zero_input_zero_output(self):
        model = benchmark_plant(20)
        y = simulate_iteration(model, np.zeros(20), np.zeros(20))
        np.testing.assert_array_equal(y, np.zeros(20))

    def test_impulse_on_benchmark_plant(self):
        model = benchmark_plant(10)
        u = np.zeros(10)
        u[0] = 1.0
        y = simulate_iteration(model, u, np.zeros(10))
        self.assertEqual(y[0], 0.0)
        self.assertAlmostEqual(y[1], 1 + 0.1 * math.cos(2) + 0.03 * math.sin(2), places=14)

    def test_linearity(self):
        rng = np.random.default_rng(1)
        model = _random_plants(1, 40)[0]
        u1, u2 = rng.standard_normal(40), rng.standard_normal(40)
        zero = np.zeros(40)
        combined = simulate_iteration(model, u1 + u2, zero)
        separate = simulate_iteration(model, u1, zero) + simulate_iteration(model, u2, zero)
        np.testing.assert_allclose(combined, separate, rtol=0, atol=1e-10 * max(1.0, np.abs(combined).max()))

    def test_matches_state_space_propagation(self):
        rng = np.random.default_rng(2)
        for model in _random_plants(20, 60, seed=10):
            u, v = rng.standard_normal(60), 0.1 * rng.standard_normal(60)
            y = simulate_iteration(model, u, v)
            y_ss = propagate(to_state_space(model), u, v)
            self.assertLessEqual(np.abs(y - y_ss).max(), 1e-10 * max(1.0, np.abs(y).max()))

    def test_signal_length_checked(self):
        with self.assertRaises(ValueError):
            simulate_iteration(benchmark_plant(5), np.zeros(4), np.zeros(5))


class StateSpaceTest(SimpleTestCase):
    def test_scalar_companion(self):
        a = np.arange(1.0, 6.0).reshape(5, 1) / 10
        ss = to_state_space(LtvArxModel(a=a, b=np.ones((5, 1))))
        np.testing.assert_allclose(ss.A[:, 0, 0], -a[:, 0])

    def test_time_invariant_plant_has_constant_matrices(self):
        ss = to_state_space(_first_order(8))
        self.assertTrue(np.all(ss.A == ss.A[0]))
        self.assertTrue(np.all(ss.B == ss.B[0]))

    def test_companion_structure(self):
        model = benchmark_plant(4)
        ss = to_state_space(model)
        np.testing.assert_allclose(ss.A[1], [[-1.2, 0.35], [1.0, 0.0]])
        np.testing.assert_allclose(ss.B[1, 0], np.r_[model.b[1], 1.0])
        np.testing.assert_array_equal(ss.B[1, 1], np.zeros(3))
        np.testing.assert_array_equal(ss.C, [[1.0, 0.0]])


class ImpulseResponseTest(SimpleTestCase):
    def test_direct_feedthrough(self):
        model = benchmark_plant(6)
        G = impulse_response(to_state_space(model), 4, 3)
        np.testing.assert_allclose(G.values, np.r_[model.b[3], 1.0])
        self.assertEqual(G.G_v, 1.0)

    def test_geometric_first_order(self):
        ss = to_state_space(_first_order(12))
        for i in range(0, 11):
            for t in range(i + 1, 13):
                self.assertAlmostEqual(impulse_response(ss, t, i).G_u[0], 0.5 ** (t - i - 1), places=14)

    def test_index_errors(self):
        ss = to_state_space(_first_order(5))
        with self.assertRaises(HorizonIndexError):
            impulse_response(ss, 3, 3)
        with self.assertRaises(HorizonIndexError):
            impulse_response(ss, 6, 1)

    def test_table_matches_direct_evaluation(self):
        ss = to_state_space(_random_plants(1, 15, seed=3)[0])
        table = impulse_table(ss)
        for t in (1, 7, 15):
            for i in range(t):
                np.testing.assert_allclose(table[t, i], impulse_response(ss, t, i).values, atol=1e-12)

    def test_superposition(self):
        rng = np.random.default_rng(4)
        for model in _random_plants(20, 100, seed=40):
            ss = to_state_space(model)
            table = impulse_table(ss)
            u, v = rng.standard_normal(100), 0.1 * rng.standard_normal(100)
            W = stacked_inputs(u, v, model.n_b)
            y = simulate_iteration(model, u, v)
            for t in range(1, 101):
                self.assertLessEqual(abs(np.sum(table[t, :t] * W[:t]) - y[t - 1]),
                                     1e-10 * max(1.0, np.abs(y).max()))


class BiboSumTest(SimpleTestCase):
    def test_zero_plant(self):
        ss = to_state_space(LtvArxModel(a=np.zeros((10, 2)), b=np.zeros((10, 3))))
        d_g_u, d_g_v = bibo_sums(ss)
        self.assertEqual(d_g_u, 0.0)
        self.assertEqual(d_g_v, 1.0)

    def test_geometric_series(self):
        d_g_u, d_g_v = bibo_sums(to_state_space(_first_order(60)))
        self.assertAlmostEqual(d_g_u, 2.0, places=12)
        self.assertAlmostEqual(d_g_v, 2.0, places=12)


class BoundTest(SimpleTestCase):
    def test_frozen_controller(self):
        report = report_from_sums(d_g_u=1.5, d_g_v=2.0, d_c=0.0, d_u=3.0, d_v=0.1, d_r=1.0, n_b=4, n_c=10)
        self.assertTrue(report.condition_holds)
        self.assertAlmostEqual(report.ultimate_bound, math.sqrt(4) * 1.5 * 3.0 + 2.0 * 0.1 + 1.0)

    def test_boundary_is_strict(self):
        report = report_from_sums(d_g_u=1.0, d_g_v=1.0, d_c=1.0, d_u=1.0, d_v=1.0, d_r=1.0, n_b=1, n_c=1)
        self.assertEqual(report.condition_lhs, 1.0)
        self.assertFalse(report.condition_holds)
        self.assertIsNone(report.ultimate_bound)

    def test_hand_evaluated_bound(self):
        report = report_from_sums(d_g_u=0.1, d_g_v=0.5, d_c=0.1, d_u=2.0, d_v=0.05, d_r=1.0, n_b=1, n_c=2)
        lhs = 0.1 * 0.1 * math.sqrt(3)
        self.assertAlmostEqual(report.condition_lhs, lhs)
        expected = ((0.1 * 2.0 + 0.5 * 0.05) * (2 * 0.1 * 0.1 * math.sqrt(3) + 1) + 1.0) / (1 - lhs)
        self.assertAlmostEqual(report.ultimate_bound, expected, places=14)

    def test_report_from_plant(self):
        ss = to_state_space(_first_order(60))
        report = bound_report(ss, d_c=0.05, d_u=2.0, d_v=0.05, d_r=1.0, n_b=1, n_c=3)
        self.assertAlmostEqual(report.d_g_u, 2.0, places=12)
        self.assertTrue(report.condition_holds)
        self.assertGreater(report.ultimate_bound, 0.0)


class BenchmarkPlantTest(SimpleTestCase):
    def test_coefficients(self):
        a, b = benchmark_coefficients(0.0)
        self.assertAlmostEqual(b[0], 1.1)
        _, b = benchmark_coefficients(math.pi / 2)
        self.assertAlmostEqual(b[1], -0.421)
        model = benchmark_plant(30)
        self.assertTrue(np.all(model.a == [1.2, -0.35]))


class RotationTest(SimpleTestCase):
    def test_magnitude_preserved(self):
        s0 = 0.6 * np.exp(0.7j)
        for t in range(0, 201, 10):
            self.assertAlmostEqual(abs(rotate_root(s0, t, 200)), 0.6, places=14)

    def test_quarter_pi_sweep(self):
        s0 = 0.8 * np.exp(0.4j)
        self.assertAlmostEqual(np.angle(rotate_root(s0, 0, 50)), 0.4, places=14)
        self.assertAlmostEqual(np.angle(rotate_root(s0, 50, 50)), 0.4 + np.pi / 4, places=14)
        s1 = 0.8 * np.exp(-0.4j)
        self.assertAlmostEqual(np.angle(rotate_root(s1, 50, 50)), -0.4 - np.pi / 4, places=14)

    def test_real_and_zero_roots_pass_through(self):
        self.assertEqual(rotate_root(0.5, 17, 50), 0.5)
        self.assertEqual(rotate_root(0.0, 17, 50), 0.0)

    def test_conjugates_rotate_conjugately(self):
        s0 = 0.3 + 0.4j
        self.assertAlmostEqual(rotate_root(np.conj(s0), 9, 40), np.conj(rotate_root(s0, 9, 40)), places=14)


class GeneratorTest(SimpleTestCase):
    def test_seed_determinism(self):
        first = generate_plant(GeneratorConfig(horizon=30, seed=5)).model
        second = generate_plant(GeneratorConfig(horizon=30, seed=5)).model
        np.testing.assert_array_equal(first.a, second.a)
        np.testing.assert_array_equal(first.b, second.b)

    def test_coefficients_are_real_and_roots_match(self):
        plant = generate_plant(GeneratorConfig(horizon=25, seed=8))
        self.assertEqual(plant.model.a.dtype, np.float64)
        for t in (1, 12, 25):
            expected = rotated_roots(plant.poles, t, 25)
            found = np.roots(np.r_[1.0, plant.model.a[t - 1]])
            for root in expected:
                self.assertLess(np.min(np.abs(found - root)), 1e-8)
                self.assertLess(abs(root), 0.95)

    def test_filtered_plants_pass_re_verification(self):
        flt = AcceptanceFilter()
        for seed in range(3):
            plant = generate_plant(GeneratorConfig(horizon=50, seed=seed, filter=flt))
            d_g_u, _ = bibo_sums(to_state_space(plant.model))
            self.assertLessEqual(d_g_u, 5.0)
            self.assertGreater(plant.dominant_pole_magnitudes.min(), 0.7)
            self.assertLessEqual(np.ptp(plant.dominant_pole_magnitudes), 0.001)

    def test_invalid_radius(self):
        with self.assertRaises(ValueError):
            GeneratorConfig(horizon=10, radius=1.0)


class ReferenceTest(SimpleTestCase):
    def test_two_tone(self):
        self.assertEqual(reference_two_tone(0), 0.0)
        self.assertAlmostEqual(float(reference_two_tone(25)), 0.0, places=12)

    def test_ramp(self):
        self.assertAlmostEqual(float(reference_ramp(200)), 1.0, places=12)

    def test_trajectory_starts_at_one(self):
        np.testing.assert_allclose(reference_trajectory('ramp', 3), reference_ramp([1, 2, 3]))
        with self.assertRaises(ValueError):
            reference_trajectory('unknown', 3)


class PlantFileTest(SimpleTestCase):
    def test_round_trip_is_bit_exact(self):
        model = generate_plant(GeneratorConfig(horizon=12, order=4, seed=2)).model
        restored = plant_from_text(plant_to_text(model))
        np.testing.assert_array_equal(restored.a, model.a)
        np.testing.assert_array_equal(restored.b, model.b)

    def test_malformed_file(self):
        with self.assertRaises(ConfigurationError):
            plant_from_text('n_a 2\nn_b 1\n')
        text = plant_to_text(benchmark_plant(3)).replace('horizon 3', 'horizon 4')
        with self.assertRaises(ConfigurationError):
            plant_from_text(text)
