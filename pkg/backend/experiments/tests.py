import contextlib
import csv
import io
import json
import tempfile
from pathlib import Path
from unittest import mock

import numpy as np
from django.contrib.auth.models import User
from django.test import SimpleTestCase, TestCase, override_settings
from rest_framework import status
from rest_framework.test import APITestCase

from backend.exceptions import (
    ConfigurationError,
    HorizonIndexError,
    OptimizationFailure,
    SequencingError,
    UndefinedFitError,
)
from plant.generator import benchmark_plant
from plant.serializers import dump_plant
from plant.systems import LtvArxModel
from .campaign import aggregate, campaign_configs, run_campaign
from .cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, cli_main
from .config import PRESETS, ExperimentConfig, load_config, preset_data
from .identification_runs import run_identification
from .metrics import box_statistics, model_fit, tracking_fit
from .models import ExperimentRun
from .persistence import load_traces, recompute_fits, register_run, write_run
from .runner import NoiseSource, RunRecord, run_krilc
from .store import IterationStore

SMALL = {
    'N_e': 3,
    'N_d': 8,
    'n_a': 2,
    'n_b': 2,
    'n_c': 2,
    'model_starts': 1,
    'model_evaluations': 40,
    'controller_starts': 1,
    'controller_evaluations': 30,
}


def small_config(**overrides):
    return load_config(dict(preset_data('sec51'), **{**SMALL, **overrides}))


def _quiet(function, *args):
    with contextlib.redirect_stdout(io.StringIO()), contextlib.redirect_stderr(io.StringIO()):
        return function(*args)


class IterationStoreTest(SimpleTestCase):
    def setUp(self):
        self.store = IterationStore(2, 4, [0.0, 1.0, 2.0, 3.0], first_iteration=1, metadata={'config': {'a': 1}})

    def test_error_identity(self):
        self.store.record_iteration(1, [1.0, 1.0, 1.0, 0.0], [0.0, 0.5, 1.5, 2.0], np.zeros(4))
        np.testing.assert_array_equal(self.store.e[1], self.store.y_d - self.store.y[1])
        self.assertEqual(self.store.completed, 1)

    def test_first_output_must_be_zero(self):
        with self.assertRaises(ValueError):
            self.store.record_iteration(1, np.zeros(4), [0.1, 0.0, 0.0, 0.0], np.zeros(4))

    def test_sequencing(self):
        with self.assertRaises(SequencingError):
            self.store.begin_iteration(2)
        with self.assertRaises(HorizonIndexError):
            self.store.value('y', 1, 5)

    def test_reads_before_the_first_iteration_are_zero(self):
        self.store.record_iteration(1, [1.0, 2.0, 3.0, 4.0], [0.0, 1.0, 1.0, 1.0], np.zeros(4))
        self.assertEqual(self.store.value('u', 0, 2), 0.0)
        self.assertEqual(self.store.value('u', 1, 0), 0.0)
        np.testing.assert_array_equal(self.store.window('u', 1, 3, 4), [3.0, 2.0, 1.0, 0.0])
        np.testing.assert_array_equal(self.store.error_stack(1, 3, 3), [1.0, 0.0, 0.0])

    def test_config_hash_is_stable(self):
        other = IterationStore(2, 4, np.zeros(4), metadata={'config': {'a': 1}})
        self.assertEqual(self.store.config_hash(), other.config_hash())
        self.assertIsNone(IterationStore(1, 2, np.zeros(2)).config_hash())


class MetricsTest(SimpleTestCase):
    def setUp(self):
        self.y_d = np.array([0.0, 1.0, 3.0, 2.0, -1.0])

    def test_tracking_fit_examples(self):
        self.assertEqual(tracking_fit(self.y_d, self.y_d), 100.0)
        self.assertAlmostEqual(tracking_fit(self.y_d, np.full(5, self.y_d.mean())), 0.0, places=12)
        self.assertAlmostEqual(tracking_fit(self.y_d, 2 * self.y_d - self.y_d.mean()), 0.0, places=12)

    def test_constant_reference_is_undefined(self):
        with self.assertRaises(UndefinedFitError):
            tracking_fit(np.ones(4), np.zeros(4))

    def test_model_fit_examples(self):
        truth = np.array([1.0, 2.0, 3.0, 4.0])
        self.assertEqual(model_fit(truth, truth), 100.0)
        self.assertAlmostEqual(model_fit(truth, np.full(4, 2.5)), 0.0, places=12)
        # spread 5, squared error 1
        self.assertAlmostEqual(model_fit(truth, [1.0, 2.0, 3.0, 5.0]), 100.0 * (1.0 - np.sqrt(0.2)), places=12)

    def test_box_statistics(self):
        stats = box_statistics([5.0, 1.0, None, 3.0, 2.0, 4.0])
        self.assertEqual(stats['count'], 5)
        self.assertEqual((stats['q1'], stats['median'], stats['q3']), (2.0, 3.0, 4.0))
        self.assertEqual((stats['min'], stats['max'], stats['mean']), (1.0, 5.0, 3.0))
        self.assertIsNone(box_statistics([None]))


class NoiseSourceTest(SimpleTestCase):
    def test_uniform_noise_respects_bound(self):
        noise = NoiseSource(0.0004, 0.05, seed=3)
        self.assertEqual(noise.distribution, 'uniform')
        v = noise.draw(20000)
        self.assertLessEqual(np.abs(v).max(), np.sqrt(3) * 0.02)
        self.assertAlmostEqual(v.var(), 0.0004, delta=2e-5)

    def test_inconsistent_variance_falls_back_to_truncated_normal(self):
        with self.assertLogs('experiments.runner', level='WARNING'):
            noise = NoiseSource(0.01, 0.05, seed=3)
        self.assertEqual(noise.distribution, 'truncated-normal')
        self.assertLessEqual(np.abs(noise.draw(5000)).max(), 0.05)

    def test_iteration_starts_with_zero(self):
        v = NoiseSource(1.0, None, seed=0).iteration(6)
        self.assertEqual(v[0], 0.0)
        self.assertTrue(np.all(v[1:] != 0.0))

    def test_seeded_draws_repeat(self):
        np.testing.assert_array_equal(NoiseSource(0.01, 0.05, 7).draw(10), NoiseSource(0.01, 0.05, 7).draw(10))
        np.testing.assert_array_equal(NoiseSource(0.0, 0.05, 7).draw(3), np.zeros(3))


class ExperimentConfigTest(SimpleTestCase):
    def test_presets_validate(self):
        for name in PRESETS:
            config = load_config(preset_data(name))
            self.assertEqual(config.label, name)
        config = load_config(preset_data('sec51'))
        self.assertEqual((config.n_a, config.n_c, config.d_u, config.d_c), (10, 10, 2.0, 0.7))
        self.assertEqual(load_config(preset_data('sec52-control')).d_u, 15.0)
        self.assertIsNone(load_config(preset_data('sec52-model')).d_v)

    def test_unknown_preset(self):
        with self.assertRaises(ConfigurationError):
            preset_data('sec99')

    def test_rejections(self):
        for data in ({'d_u': -1.0}, {'bogus': 1}, {'plant': 'file'}, {'method': 'PID'},
                     {'eta_theta': 1.5}, {'N_e': 0}, {'plant_radius': 1.2}):
            with self.assertRaises(ConfigurationError, msg=str(data)):
                load_config(data)

    def test_settings_follow_config(self):
        config = small_config(family_c='TC')
        self.assertEqual(config.estimation_settings().n_theta, 4)
        self.assertEqual(config.estimation_settings().domain.max_evaluations, 40)
        self.assertEqual(config.controller_settings().family, 'TC')
        self.assertEqual(config.controller_settings().d_c, 0.7)

    def test_checkpoints(self):
        self.assertEqual(ExperimentConfig(N_e=25, checkpoint_every=10).checkpoints(), [10, 20, 25])
        self.assertEqual(ExperimentConfig(N_e=5, checkpoint_every=10).checkpoints(), [5])


class KrilcRunTest(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.record = run_krilc(small_config())

    def test_constraints_hold_everywhere(self):
        store = self.record.store
        self.assertLessEqual(np.abs(store.u[1:]).max(), 2.0)
        for _, _, theta_norm, *_ in self.record.controller_trace:
            self.assertLessEqual(theta_norm, 0.7 + 1e-9)
        self.assertLessEqual(self.record.max_theta_norm, 0.7 + 1e-9)

    def test_stored_errors_match_outputs(self):
        store = self.record.store
        for j in store.iterations():
            np.testing.assert_array_equal(store.e[j], store.y_d - store.y[j])
            self.assertEqual(store.y[j, 0], 0.0)

    def test_record_shape(self):
        self.assertEqual(len(self.record.tracking_fits), 4)
        self.assertEqual(len(self.record.controller_trace), 3 * 8)
        self.assertEqual(self.record.fit_iterations, [1, 2, 3])
        for row in self.record.model_fits['RLS']:
            self.assertEqual(len(row), 8)
            self.assertTrue(all(fit is None or fit <= 100.0 for fit in row))
        self.assertLessEqual(max(fit for fit in self.record.tracking_fits if fit is not None), 100.0)

    def test_bound_report(self):
        bound = self.record.bound
        self.assertEqual(bound['d_r'], float(np.max(np.abs(self.record.store.y_d))))
        self.assertEqual((bound['n_b'], bound['n_c']), (2, 2))
        self.assertGreaterEqual(self.record.tail_error_max, 0.0)

    def test_initial_experiment_is_iteration_zero(self):
        self.assertEqual(self.record.store.first_iteration, 0)
        self.assertTrue(np.any(self.record.store.u[0] != 0.0))

    def test_same_seed_is_bit_identical(self):
        again = run_krilc(small_config())
        for signal in IterationStore.SIGNALS:
            np.testing.assert_array_equal(getattr(again.store, signal), getattr(self.record.store, signal))
        self.assertEqual(again.tracking_fits, self.record.tracking_fits)
        self.assertEqual(again.model_fits, self.record.model_fits)

    def test_model_fits_for_both_estimators(self):
        self.assertEqual(set(self.record.model_fits), {'RLS', 'LS'})
        self.assertEqual(set(self.record.average_model_fits), {'RLS', 'LS'})
        for row in self.record.model_fits['LS']:
            self.assertEqual(len(row), 8)
            self.assertTrue(all(fit is None or fit <= 100.0 for fit in row))
        # one iteration of data cannot identify four parameters
        self.assertIsNone(self.record.average_model_fits['LS'][0])

    def test_failed_design_holds_the_previous_input(self):
        with mock.patch('experiments.runner.design_controller', side_effect=OptimizationFailure('stalled')):
            record = run_krilc(small_config(N_e=2))
        self.assertEqual(record.fallbacks, 2 * 8)
        for j in (1, 2):
            np.testing.assert_array_equal(record.store.u[j, :8], record.store.u[0, :8])
        self.assertTrue(all(np.isnan(row[5]) for row in record.controller_trace))

    def test_unexpected_solver_error_is_a_fallback(self):
        with mock.patch('experiments.runner.design_controller', side_effect=RuntimeError('Failed to converge')):
            record = run_krilc(small_config(N_e=1))
        self.assertEqual(record.fallbacks, 8)
        self.assertEqual(record.status, 'completed')


def _first_order_plant(horizon):
    """y(t+1) = 0.5 y(t) + u(t) + v(t+1) at every time."""
    return LtvArxModel(a=np.full((horizon, 1), -0.5), b=np.ones((horizon, 1)))


class StablePlantRunTest(SimpleTestCase):
    def test_tail_error_within_ultimate_bound(self):
        config = small_config(N_e=4, n_a=1, n_b=1, n_c=2, d_c=0.1)
        record = run_krilc(config, model=_first_order_plant(config.N_d + 1))
        bound = record.bound
        self.assertTrue(bound['condition_holds'])
        self.assertLess(bound['condition_lhs'], 1.0)
        self.assertLessEqual(record.tail_error_max, bound['ultimate_bound'])

    def test_learning_reduces_the_tracking_error(self):
        config = small_config(N_e=8, n_a=1, n_b=1, n_c=2)
        record = run_krilc(config, model=_first_order_plant(config.N_d + 1))
        errors = np.abs(record.store.e[:, 1:]).max(axis=1)
        self.assertLess(errors[-1], errors[0])
        self.assertGreater(record.tracking_fits[-1], record.tracking_fits[0])

    def test_short_plant_is_rejected(self):
        config = small_config(n_a=1, n_b=1)
        with self.assertRaises(ConfigurationError):
            run_krilc(config, model=_first_order_plant(config.N_d))


class ComparisonRunTest(SimpleTestCase):
    def test_zero_noise_zero_reference_stays_at_rest(self):
        for method in ExperimentConfig.METHODS:
            record = run_krilc(small_config(method=method, reference='zero', sigma2=0.0, N_e=2))
            np.testing.assert_array_equal(record.store.u, 0.0)
            self.assertTrue(all(fit is None for fit in record.tracking_fits))

    def test_baselines_respect_saturation(self):
        for method in ('ADAPTIVE', 'INVERSION'):
            record = run_krilc(small_config(method=method, N_e=4, d_u=0.5))
            self.assertLessEqual(np.abs(record.store.u).max(), 0.5)
            self.assertIsNone(record.bound)
            self.assertFalse(record.controller_trace)

    def test_ls_controller_variant(self):
        record = run_krilc(small_config(method='KRILC-LS', N_e=2))
        self.assertLessEqual(record.max_theta_norm, 0.7 + 1e-9)
        self.assertLessEqual(record.max_abs_input, 2.0)

    def test_zero_initial_experiment(self):
        record = run_krilc(small_config(method='ADAPTIVE', initial='zero', N_e=1))
        np.testing.assert_array_equal(record.store.u[0], 0.0)

    def test_plant_from_file(self):
        with tempfile.TemporaryDirectory() as directory:
            path = dump_plant(benchmark_plant(9), Path(directory) / 'plant.txt')
            from_file = run_krilc(small_config(method='ADAPTIVE', plant='file', plant_file=str(path), N_e=1))
        builtin = run_krilc(small_config(method='ADAPTIVE', N_e=1))
        np.testing.assert_array_equal(from_file.store.y, builtin.store.y)

    def test_short_plant_file_is_rejected(self):
        with tempfile.TemporaryDirectory() as directory:
            path = dump_plant(benchmark_plant(5), Path(directory) / 'plant.txt')
            with self.assertRaises(ConfigurationError):
                run_krilc(small_config(plant='file', plant_file=str(path)))


class IdentificationRunTest(SimpleTestCase):
    def test_checkpoint_fits(self):
        config = load_config(dict(preset_data('sec51-model'), N_e=12, N_d=8, n_a=2, n_b=2, checkpoint_every=6,
                                  model_starts=1, model_evaluations=60))
        record = run_identification(config)
        self.assertEqual(record.fit_iterations, [6, 12])
        for estimator in ('RLS', 'LS'):
            self.assertEqual(len(record.average_model_fits[estimator]), 2)
            rows = record.model_fits[estimator]
            self.assertTrue(all(row[0] is None and row[1] is None for row in rows))
            self.assertTrue(all(fit <= 100.0 for row in rows for fit in row if fit is not None))
        self.assertGreater(record.final_model_fit('RLS'), 30.0)

    def test_ls_needs_enough_rows(self):
        config = load_config(dict(preset_data('sec51-model'), N_e=3, N_d=6, n_a=2, n_b=2, checkpoint_every=3,
                                  model_starts=1, model_evaluations=40))
        record = run_identification(config)
        self.assertEqual(record.average_model_fits['LS'], [None])
        self.assertIsNotNone(record.average_model_fits['RLS'][0])


class PersistenceTest(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.record = run_krilc(small_config(N_e=2))

    def test_written_run_reloads_bit_exactly(self):
        with tempfile.TemporaryDirectory() as directory:
            run_dir = write_run(self.record, directory)
            iterations, signals = load_traces(run_dir)
            self.assertEqual(iterations, [0, 1, 2])
            np.testing.assert_array_equal(signals['y'], self.record.store.y)
            np.testing.assert_array_equal(signals['e'], self.record.store.e)
            self.assertEqual(recompute_fits(run_dir), self.record.tracking_fits)

            stored = json.loads((run_dir / 'record.json').read_text())
            self.assertEqual(stored['tracking_fits'], self.record.tracking_fits)
            self.assertEqual(json.loads((run_dir / 'config.json').read_text())['N_d'], 8)

            with open(run_dir / 'controller.csv', newline='') as handle:
                rows = list(csv.reader(handle))
            self.assertEqual(rows[0], ['j', 't', 'theta_norm', 'lambda1', 'lambda2', 'kkt_residual'])
            self.assertEqual(len(rows), 1 + 2 * 8)


class CampaignTest(SimpleTestCase):
    def _record(self, method, fits):
        return RunRecord(config={}, kind='control', method=method, seed=0, tracking_fits=fits)

    def test_aggregation_matches_hand_quartiles(self):
        records = [self._record('KRILC', [None, value]) for value in (10.0, 20.0, 30.0, 40.0, 50.0)]
        records.append(RunRecord(config={}, kind='control', method='KRILC', seed=9, status='failed'))
        summary = aggregate(records)
        self.assertEqual((summary.runs, summary.failed), (6, 1))
        self.assertIsNone(summary.tracking['KRILC'][0])
        final = summary.tracking['KRILC'][1]
        self.assertEqual((final['q1'], final['median'], final['q3']), (20.0, 30.0, 40.0))

    def test_model_fit_aggregation(self):
        records = [
            RunRecord(config={}, kind='identification', method='KRILC', seed=seed,
                      fit_iterations=[5, 10], average_model_fits={'RLS': [60.0 + seed, 80.0 + seed]})
            for seed in range(3)
        ]
        summary = aggregate(records)
        self.assertEqual(summary.model['RLS'][10]['median'], 81.0)
        self.assertEqual(summary.model['RLS'][5]['min'], 60.0)

    def test_empty_campaign(self):
        summary, records = run_campaign([])
        self.assertEqual(summary.to_dict(), {'runs': 0, 'failed': 0, 'tracking': {}, 'model': {}})
        self.assertEqual(records, [])

    def test_two_trivial_runs(self):
        base = small_config(method='ADAPTIVE', N_e=1, N_d=4)
        configs = campaign_configs(base, 2, methods=('ADAPTIVE',))
        self.assertEqual([config.seed for config in configs], [0, 1])
        summary, records = run_campaign(configs)
        self.assertEqual((summary.runs, summary.failed), (2, 0))
        self.assertEqual(summary.tracking['ADAPTIVE'][1]['count'], 2)

    def test_worker_count_follows_settings(self):
        seen = []

        def parallel(n_jobs, **kwargs):
            seen.append(n_jobs)
            return lambda tasks: [function(*args, **kw) for function, args, kw in tasks]

        def finished(config):
            return RunRecord(config=config.to_dict(), kind='control', method=config.method,
                             seed=config.seed, tracking_fits=[50.0])

        configs = campaign_configs(small_config(method='ADAPTIVE'), 2, methods=('ADAPTIVE',))
        with override_settings(KRILC={'RUNS_DIR': Path('runs'), 'PARALLELISM': 3, 'REGISTER_RUNS': False,
                                      'LOG_LEVEL': 'INFO'}), \
                mock.patch('experiments.campaign.Parallel', side_effect=parallel), \
                mock.patch('experiments.campaign.run_experiment', side_effect=finished):
            self.assertEqual(configs[0].workers, 3)
            self.assertEqual(configs[0].with_overrides(parallelism=2).workers, 2)
            _, records = run_campaign(configs)
            run_campaign(configs, parallelism=2)
        self.assertEqual(seen, [3, 2])
        self.assertEqual([record.config['parallelism'] for record in records], [1, 1])

    def test_unset_parallelism_is_valid(self):
        self.assertIsNone(small_config().parallelism)
        self.assertEqual(small_config(parallelism=4).parallelism, 4)
        with self.assertRaises(ConfigurationError):
            small_config(parallelism=0)


@override_settings(KRILC={'RUNS_DIR': Path(tempfile.gettempdir()) / 'krilc-test-runs', 'PARALLELISM': 1,
                          'REGISTER_RUNS': False, 'LOG_LEVEL': 'INFO'})
class CliTest(SimpleTestCase):
    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()
        self.out = Path(self.directory.name)
        self.config_path = self.out / 'config.json'
        self.config_path.write_text(json.dumps(dict(SMALL, N_e=1, method='ADAPTIVE', label='cli')))

    def tearDown(self):
        self.directory.cleanup()

    def test_run_then_fit(self):
        code = _quiet(cli_main, ['run', '--config', str(self.config_path), '--out', str(self.out)])
        self.assertEqual(code, EXIT_OK)
        run_dirs = [path for path in self.out.iterdir() if path.is_dir()]
        self.assertEqual(len(run_dirs), 1)
        self.assertEqual(_quiet(cli_main, ['fit', str(run_dirs[0])]), EXIT_OK)

        traces = run_dirs[0] / 'traces.csv'
        lines = traces.read_text().splitlines()
        j, t, u, y, v, e = lines[-2].split(',')
        lines[-2] = ','.join([j, t, u, repr(float(y) + 1.0), v, e])
        traces.write_text('\n'.join(lines) + '\n')
        self.assertEqual(_quiet(cli_main, ['fit', str(run_dirs[0])]), EXIT_RUNTIME)

    def test_configuration_errors(self):
        self.assertEqual(_quiet(cli_main, ['run', '--preset', 'nope']), EXIT_CONFIG)
        self.assertEqual(_quiet(cli_main, ['run']), EXIT_CONFIG)
        self.assertEqual(_quiet(cli_main, ['run', '--config', str(self.out / 'missing.json')]), EXIT_CONFIG)
        self.config_path.write_text(json.dumps({'d_c': -1}))
        self.assertEqual(_quiet(cli_main, ['run', '--config', str(self.config_path)]), EXIT_CONFIG)
        self.assertEqual(_quiet(cli_main, ['fit', str(self.out / 'no-run')]), EXIT_CONFIG)

    def test_bound(self):
        self.assertEqual(_quiet(cli_main, ['bound', '--preset', 'sec51']), EXIT_OK)

    def test_gen(self):
        self.config_path.write_text(json.dumps({'plant': 'generated', 'plant_filter': False, 'plant_order': 3,
                                                'N_d': 10}))
        code = _quiet(cli_main, ['gen', '--config', str(self.config_path), '--count', '2',
                                 '--out', str(self.out / 'plants')])
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(sorted(path.name for path in (self.out / 'plants').iterdir()),
                         ['plant-0.txt', 'plant-1.txt'])

    def test_runtime_failure(self):
        with mock.patch('experiments.cli.run_experiment', side_effect=RuntimeError('boom')):
            self.assertEqual(_quiet(cli_main, ['run', '--config', str(self.config_path)]), EXIT_RUNTIME)


class ExperimentRunModelTest(TestCase):
    def setUp(self):
        self.record = RunRecord(
            config={'label': 'sec51'}, kind='control', method='KRILC', seed=4, config_hash='abc',
            tracking_fits=[None, 80.0, 95.5], max_abs_input=1.9, max_theta_norm=0.7,
            bound={'condition_lhs': 2.5, 'ultimate_bound': None},
        )

    def test_register_run(self):
        run = register_run(self.record, '/tmp/run')
        self.assertEqual(ExperimentRun.objects.count(), 1)
        self.assertEqual(run.final_tracking_fit, 95.5)
        self.assertEqual(run.preset, 'sec51')
        self.assertEqual(run.condition_lhs, 2.5)
        self.assertEqual(str(run), "KRILC sec51 seed=4 (completed)")

    def test_registry_failure_does_not_raise(self):
        with mock.patch.object(ExperimentRun.objects, 'create', side_effect=RuntimeError('db down')):
            self.assertIsNone(register_run(self.record))

    @override_settings(KRILC={'RUNS_DIR': Path('runs'), 'PARALLELISM': 1, 'REGISTER_RUNS': False,
                              'LOG_LEVEL': 'INFO'})
    def test_registry_can_be_disabled(self):
        self.assertIsNone(register_run(self.record))
        self.assertEqual(ExperimentRun.objects.count(), 0)


class ExperimentRunAPITest(APITestCase):
    def setUp(self):
        self.user = User.objects.create_user(username='analyst', password='analyst123')
        self.directory = tempfile.TemporaryDirectory()
        Path(self.directory.name, 'record.json').write_text(json.dumps({
            'tracking_fits': [None, 50.0, 75.0], 'fit_iterations': [1, 2],
            'average_model_fits': {'RLS': [60.0, 70.0]},
        }))
        self.run = ExperimentRun.objects.create(method='KRILC', preset='sec51', seed=1,
                                                final_tracking_fit=75.0, output_dir=self.directory.name)
        ExperimentRun.objects.create(method='ADAPTIVE', preset='sec51', seed=1, final_tracking_fit=40.0)

    def tearDown(self):
        self.directory.cleanup()

    def test_list_and_filter(self):
        response = self.client.get('/api/experiments/runs/')
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual(response.data['count'], 2)
        response = self.client.get('/api/experiments/runs/', {'method': 'KRILC'})
        self.assertEqual(response.data['count'], 1)
        self.assertEqual(response.data['results'][0]['final_tracking_fit'], 75.0)

    def test_fits_action(self):
        response = self.client.get(f'/api/experiments/runs/{self.run.run_uuid}/fits/')
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual(response.data['tracking_fits'], [None, 50.0, 75.0])
        self.assertEqual(response.data['average_model_fits'], {'RLS': [60.0, 70.0]})

    def test_fits_without_artefacts(self):
        other = ExperimentRun.objects.get(method='ADAPTIVE')
        response = self.client.get(f'/api/experiments/runs/{other.run_uuid}/fits/')
        self.assertEqual(response.status_code, status.HTTP_404_NOT_FOUND)

    def test_registry_is_read_only(self):
        self.client.force_authenticate(user=self.user)
        response = self.client.post('/api/experiments/runs/', {'method': 'KRILC'}, format='json')
        self.assertEqual(response.status_code, status.HTTP_405_METHOD_NOT_ALLOWED)
