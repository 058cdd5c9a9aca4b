"""
Identification experiments: white-noise input data banks and the RLS/LS
model estimators evaluated against the true coefficients at checkpoints.
"""
import logging
import math
import time

import numpy as np
from joblib import Parallel, delayed

from backend.exceptions import IllConditionedError, KrilcError
from identification.estimation import estimate_model, estimate_model_ls
from plant.systems import simulate_iteration
from .metrics import guarded, model_fit
from .runner import INPUT_STREAM, NoiseSource, RunRecord, mean_defined, build_plant, fit_times
from .store import IterationStore

logger = logging.getLogger(__name__)


def collect_data_bank(config, model):
    """N_e iterations of zero-mean white-noise input with input_variance, output noise per config."""
    horizon = config.N_d
    noise = NoiseSource(config.sigma2, config.d_v, config.seed)
    inputs = np.random.default_rng([config.seed, INPUT_STREAM])
    store = IterationStore(
        config.N_e, horizon, np.zeros(horizon), first_iteration=1,
        metadata={'seed': config.seed, 'config': config.to_dict()},
    )
    for j in range(1, config.N_e + 1):
        u = inputs.normal(0.0, math.sqrt(config.input_variance), horizon)
        v = noise.iteration(horizon)
        store.record_iteration(j, u, simulate_iteration(model, u, v), v)
    return store


class IdentificationRun:
    def __init__(self, config, model=None):
        self.config = config
        self.model = model if model is not None else build_plant(config, config.N_d)
        self.settings = config.estimation_settings()
        self.previous = {}
        self.failures = 0

    def _fit(self, store, checkpoint, t):
        """Fits of every configured estimator at time t using iterations 1..checkpoint."""
        truth = self.model.theta_at(t, self.config.n_a, self.config.n_b)
        fits = {}
        if 'RLS' in self.config.estimators:
            try:
                estimate = estimate_model(store, checkpoint + 1, t, self.settings,
                                          seed=(self.config.seed, checkpoint, t),
                                          warm_start=self.previous.get(t))
                fits['RLS'] = (guarded(model_fit, truth, estimate.theta), estimate)
            except KrilcError as e:
                logger.error(f"RLS estimation failed at (j={checkpoint}, t={t}): {e}")
                fits['RLS'] = (None, None)
        if 'LS' in self.config.estimators:
            try:
                estimate = estimate_model_ls(store, checkpoint + 1, t, self.settings)
                fits['LS'] = (guarded(model_fit, truth, estimate.theta), estimate)
            except IllConditionedError:
                fits['LS'] = (None, None)
        return t, fits

    def run(self):
        config = self.config
        started = time.perf_counter()
        logger.info(f"Identification run started (seed={config.seed}, N_e={config.N_e}, N_d={config.N_d})")

        store = collect_data_bank(config, self.model)
        checkpoints = config.checkpoints()
        times = list(fit_times(config, config.N_d))
        fits = {estimator: [] for estimator in config.estimators}

        for checkpoint in checkpoints:
            results = Parallel(n_jobs=config.workers, prefer='threads')(
                delayed(self._fit)(store, checkpoint, t) for t in times
            )
            rows = {estimator: [None] * config.N_d for estimator in config.estimators}
            for t, per_estimator in results:
                for estimator, (fit, estimate) in per_estimator.items():
                    rows[estimator][t - 1] = fit
                    if estimator != 'RLS':
                        continue
                    if estimate is None:
                        self.failures += 1
                    else:
                        self.previous[t] = estimate
            for estimator in config.estimators:
                fits[estimator].append(rows[estimator])
            logger.info(
                f"Checkpoint j={checkpoint}: "
                + ', '.join(f"{name} {mean_defined(rows[name])}" for name in config.estimators)
            )

        record = RunRecord(
            config=config.to_dict(),
            kind='identification',
            method=config.method,
            seed=config.seed,
            config_hash=store.config_hash(),
            fit_iterations=checkpoints,
            model_fits=fits,
            average_model_fits={name: [mean_defined(row) for row in rows] for name, rows in fits.items()},
            max_abs_input=float(np.max(np.abs(store.u[1:]))),
            fallbacks=self.failures,
            wall_time_s=time.perf_counter() - started,
            store=store,
        )
        logger.info(f"Identification run finished in {record.wall_time_s:.1f}s")
        return record


def run_identification(config, model=None):
    return IdentificationRun(config, model).run()
