"""
Learning-control experiments on a simulated repetitive plant.

For every iteration j the model coefficients at all times are estimated from
iterations before j (concurrently, the data they read is frozen), then the
input is designed and applied one time step after the other. The comparison
methods run through the same store, plant stepping and metrics.

Time axis: inputs u_j(t) are designed for t = 1..N_d to track y_d(t+1), so the
plant and the store span times 1..N_d+1 and fits are taken over 2..N_d+1.
"""
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from scipy.stats import truncnorm

from backend.exceptions import ConfigurationError, IllConditionedError, InstabilityError, KrilcError
from controller.baselines import AdaptiveIlcState, InversionIlcState, adaptive_ilc_step
from controller.design import build_controller_regression, design_controller
from identification.estimation import estimate_model, estimate_model_ls, zero_estimate
from plant.bounds import bound_report
from plant.generator import AcceptanceFilter, GeneratorConfig, benchmark_plant, generate_plant
from plant.references import reference_trajectory
from plant.serializers import load_plant
from plant.systems import output_at, simulate_iteration, to_state_space
from .metrics import guarded, model_fit, tracking_fit
from .store import IterationStore

logger = logging.getLogger(__name__)

NOISE_STREAM = 1
INPUT_STREAM = 2
TAIL_ITERATIONS = 10


class NoiseSource:
    """
    Zero-mean i.i.d. noise of variance sigma2 bounded by d_v.

    Uniform on +-sqrt(3) sigma when that fits inside d_v, otherwise a normal
    truncated to +-d_v (whose variance is then below sigma2). d_v = None
    draws unbounded Gaussian noise.
    """

    def __init__(self, sigma2, d_v, seed, stream=NOISE_STREAM):
        self.sigma = math.sqrt(sigma2)
        self.d_v = d_v
        self.rng = np.random.default_rng([seed, stream])

        if self.sigma == 0.0:
            self.distribution = 'zero'
        elif d_v is None:
            self.distribution = 'gaussian'
        elif math.sqrt(3.0) * self.sigma <= d_v:
            self.distribution = 'uniform'
        else:
            self.distribution = 'truncated-normal'
            bound = d_v / self.sigma
            variance = float(truncnorm.var(-bound, bound, scale=self.sigma))
            logger.warning(
                f"Noise std {self.sigma:.4g} does not fit a uniform law inside +-{d_v}; "
                f"drawing a truncated normal with variance {variance:.4g} instead of {sigma2:.4g}"
            )

    def draw(self, count):
        if self.distribution == 'zero':
            return np.zeros(count)
        if self.distribution == 'gaussian':
            return self.rng.normal(0.0, self.sigma, count)
        if self.distribution == 'uniform':
            half_width = math.sqrt(3.0) * self.sigma
            return self.rng.uniform(-half_width, half_width, count)
        bound = self.d_v / self.sigma
        samples = truncnorm.rvs(-bound, bound, scale=self.sigma, size=count, random_state=self.rng)
        return np.clip(samples, -self.d_v, self.d_v)

    def iteration(self, horizon):
        """v(1..horizon) with v(1) = 0, which keeps y(1) = 0."""
        v = np.zeros(horizon)
        v[1:] = self.draw(horizon - 1)
        return v


def build_plant(config, horizon):
    if config.plant == 'benchmark':
        return benchmark_plant(horizon)
    if config.plant == 'generated':
        generated = generate_plant(GeneratorConfig(
            horizon=horizon,
            order=config.plant_order,
            radius=config.plant_radius,
            seed=config.plant_seed,
            N_d=config.N_d,
            filter=AcceptanceFilter() if config.plant_filter else None,
        ))
        return generated.model

    model = load_plant(config.plant_file)
    if model.horizon < horizon:
        raise ConfigurationError(
            f"Plant file {config.plant_file} covers {model.horizon} times, the experiment needs {horizon}"
        )
    return model.truncated(horizon)


def fit_times(config, horizon):
    """Times whose regressors are populated by data in every lag."""
    return range(max(config.n_a, config.n_b) + 1, horizon + 1)


@dataclass
class RunRecord:
    config: dict
    kind: str
    method: str
    seed: int
    config_hash: str = None
    tracking_fits: list = field(default_factory=list)
    fit_iterations: list = field(default_factory=list)
    model_fits: dict = field(default_factory=dict)
    average_model_fits: dict = field(default_factory=dict)
    max_abs_input: float = None
    max_theta_norm: float = None
    bound: dict = None
    tail_error_max: float = None
    fallbacks: int = 0
    wall_time_s: float = 0.0
    status: str = 'completed'
    error: str = ''
    store: IterationStore = field(default=None, repr=False)
    controller_trace: list = field(default=None, repr=False)

    SERIALIZED = (
        'config', 'kind', 'method', 'seed', 'config_hash', 'tracking_fits', 'fit_iterations',
        'model_fits', 'average_model_fits', 'max_abs_input', 'max_theta_norm', 'bound',
        'tail_error_max', 'fallbacks', 'wall_time_s', 'status', 'error',
    )

    @property
    def final_tracking_fit(self):
        return self.tracking_fits[-1] if self.tracking_fits else None

    def final_model_fit(self, estimator='RLS'):
        values = self.average_model_fits.get(estimator) or []
        return values[-1] if values else None

    def to_dict(self):
        return {name: getattr(self, name) for name in self.SERIALIZED}


def mean_defined(values):
    defined = [value for value in values if value is not None]
    return float(np.mean(defined)) if defined else None


class ControlRun:
    """One learning-control experiment; `run()` returns its RunRecord."""

    def __init__(self, config, model=None):
        self.config = config
        self.horizon = config.N_d + 1
        self.model = model if model is not None else build_plant(config, self.horizon)
        if self.model.horizon < self.horizon:
            raise ConfigurationError(f"Plant covers {self.model.horizon} times, the experiment needs {self.horizon}")

        self.y_d = reference_trajectory(config.reference, self.horizon)
        self.noise = NoiseSource(config.sigma2, config.d_v, config.seed)
        self.estimation = config.estimation_settings()
        self.controller = config.controller_settings()
        self.store = IterationStore(
            config.N_e, self.horizon, self.y_d, first_iteration=0,
            metadata={'seed': config.seed, 'config': config.to_dict()},
        )

        self.models = {}
        self.hyper = {}
        self.adaptive = AdaptiveIlcState(horizon=config.N_d, params=config.adaptive_params())
        self.fallbacks = 0
        self.controller_trace = []
        self.model_fits = {'RLS': [], 'LS': []}

    # Plant side

    def _saturate(self, u):
        return float(np.clip(u, -self.config.d_u, self.config.d_u))

    def _apply(self, store, j, t, u, v):
        """Apply u_j(t) and measure y_j(t+1)."""
        store.set_sample(j, t, u=self._saturate(u))
        y = output_at(self.model, t + 1, store.u[j], store.y[j], v[t])
        if not np.isfinite(y):
            raise InstabilityError(f"plant output diverged at iteration {j}", time=t + 1)
        store.set_sample(j, t + 1, y=y, v=v[t])

    def _zero_pass(self, store, j):
        v = self.noise.iteration(self.horizon)
        u = np.zeros(self.horizon)
        store.record_iteration(j, u, simulate_iteration(self.model, u, v), v)

    def _adaptive_iteration(self, store, j):
        store.begin_iteration(j)
        v = self.noise.iteration(self.horizon)
        for t in range(1, self.config.N_d + 1):
            errors = store.error_stack(j - 1, t + 1, self.adaptive.params.l_theta)
            delta_y = store.value('y', j, t) - store.value('y', j - 1, t)
            delta_u = store.value('u', j, t - 1) - store.value('u', j - 1, t - 1)
            u = adaptive_ilc_step(self.adaptive, t, errors, store.value('u', j - 1, t), delta_y, delta_u)
            self._apply(store, j, t, u, v)
        store.commit_iteration(j)

    def initial_experiment(self):
        """Fill iteration 0 with a zero-input pass or with adaptive ILC passes following it."""
        config = self.config
        passes = 0 if config.initial == 'zero' else config.initial_iterations
        scratch = IterationStore(passes, self.horizon, self.y_d, first_iteration=0)
        self._zero_pass(scratch, 0)
        for j in range(1, passes + 1):
            self._adaptive_iteration(scratch, j)

        self.store.record_iteration(0, scratch.u[passes], scratch.y[passes], scratch.v[passes])
        logger.info(f"Initial experiment ({config.initial}, {passes} adaptive passes) stored as iteration 0")

    # KRILC

    def _estimate(self, j, t):
        warm = self.models.get(t)
        try:
            return estimate_model(self.store, j, t, self.estimation,
                                  seed=(self.config.seed, j, t), warm_start=warm), None
        except KrilcError as e:
            return None, e

    def estimate_models(self, j):
        times = range(2, self.horizon + 1)
        results = Parallel(n_jobs=self.config.workers, prefer='threads')(
            delayed(self._estimate)(j, t) for t in times
        )
        for t, (estimate, error) in zip(times, results):
            if error is not None:
                self.fallbacks += 1
                previous = self.models.get(t)
                logger.error(f"Model estimation failed at (j={j}, t={t}): {error}; "
                             f"{'reusing the previous estimate' if previous else 'using a zero model'}")
                estimate = previous.relabel(t, 'reused') if previous else zero_estimate(t, self.estimation)
            self.models[t] = estimate

    def _design(self, j, t):
        reg = build_controller_regression(self.store, self.models[t + 1], j, t,
                                          self.controller.n_c, self.controller.d_u, self.controller.d_c)
        estimate = design_controller(
            reg, self.controller,
            seed=(self.config.seed, j, t),
            warm_start=self.hyper.get(t),
            least_squares=self.config.method == 'KRILC-LS',
        )
        if estimate.eta_c_hat is not None and estimate.sigma_c2_hat is not None:
            self.hyper[t] = (estimate.eta_c_hat, estimate.sigma_c2_hat)
        return estimate

    def _krilc_iteration(self, j):
        self.estimate_models(j)
        self.store.begin_iteration(j)
        v = self.noise.iteration(self.horizon)

        fits = {'RLS': [], 'LS': []}
        window = fit_times(self.config, self.horizon)
        for t in range(1, self.config.N_d + 1):
            try:
                estimate = self._design(j, t)
                u = estimate.u_new
                self.controller_trace.append((j, t, estimate.theta_norm, estimate.lambda1,
                                              estimate.lambda2, estimate.kkt_residual))
            except (KrilcError, np.linalg.LinAlgError, ArithmeticError, RuntimeError) as e:
                self.fallbacks += 1
                u = self.store.value('u', j - 1, t)
                logger.error(f"Controller design failed at (j={j}, t={t}): {e}; holding u={u:.6g}")
                self.controller_trace.append((j, t, 0.0, 0.0, 0.0, float('nan')))
            self._apply(self.store, j, t, u, v)

            rls, ls = self._model_fits(j, t + 1) if t + 1 in window else (None, None)
            fits['RLS'].append(rls)
            fits['LS'].append(ls)

        self.store.commit_iteration(j)
        for estimator, row in fits.items():
            self.model_fits[estimator].append(row)

    def _model_fits(self, j, t):
        """RLS and LS fits of theta_m(t) against the plant, both from iterations before j."""
        truth = self.model.theta_at(t, self.config.n_a, self.config.n_b)
        rls = guarded(model_fit, truth, self.models[t].theta)
        try:
            ls = guarded(model_fit, truth, estimate_model_ls(self.store, j, t, self.estimation).theta)
        except IllConditionedError:
            ls = None
        return rls, ls

    # Baselines

    def _inversion_iteration(self, j):
        N_d = self.config.N_d
        state = InversionIlcState.from_input(self.store.u[j - 1, :N_d], gamma=self.config.gamma)
        u = np.zeros(self.horizon)
        u[:N_d] = np.clip(state.update(self.store.y[j - 1, 1:], self.store.e[j - 1, 1:]),
                          -self.config.d_u, self.config.d_u)
        v = self.noise.iteration(self.horizon)
        y = simulate_iteration(self.model, u, v)
        self.store.record_iteration(j, u, y, v)

    # Summary

    def _bound(self):
        config = self.config
        if config.method not in ('KRILC', 'KRILC-LS') or config.d_v is None:
            return None
        try:
            report = bound_report(
                to_state_space(self.model), config.d_c, config.d_u, config.d_v,
                float(np.max(np.abs(self.y_d))), config.n_b, config.n_c,
            )
        except InstabilityError as e:
            logger.warning(f"No bound for this plant: {e}")
            return None
        return report.to_dict()

    def record(self, wall_time):
        config, store = self.config, self.store
        tracking = [guarded(tracking_fit, self.y_d[1:], store.y[j, 1:]) for j in range(config.N_e + 1)]
        tail = store.e[max(1, config.N_e - TAIL_ITERATIONS + 1):config.N_e + 1, 1:]

        record = RunRecord(
            config=config.to_dict(),
            kind='control',
            method=config.method,
            seed=config.seed,
            config_hash=store.config_hash(),
            tracking_fits=tracking,
            max_abs_input=float(np.max(np.abs(store.u[1:]))) if config.N_e else 0.0,
            bound=self._bound(),
            tail_error_max=float(np.max(np.abs(tail))) if tail.size else None,
            fallbacks=self.fallbacks,
            wall_time_s=wall_time,
            store=store,
            controller_trace=self.controller_trace,
        )
        if self.model_fits['RLS']:
            record.fit_iterations = list(range(1, config.N_e + 1))
            record.model_fits = self.model_fits
            record.average_model_fits = {
                estimator: [mean_defined(row) for row in rows] for estimator, rows in self.model_fits.items()
            }
        if self.controller_trace:
            record.max_theta_norm = max(row[2] for row in self.controller_trace)
        return record

    def run(self):
        config = self.config
        started = time.perf_counter()
        logger.info(f"{config.method} run started (seed={config.seed}, N_e={config.N_e}, N_d={config.N_d})")

        self.initial_experiment()
        for j in range(1, config.N_e + 1):
            if config.method in ('KRILC', 'KRILC-LS'):
                self._krilc_iteration(j)
            elif config.method == 'ADAPTIVE':
                self._adaptive_iteration(self.store, j)
            else:
                self._inversion_iteration(j)
            fit = guarded(tracking_fit, self.y_d[1:], self.store.y[j, 1:])
            logger.debug(f"Iteration {j}: tracking fit {fit}")

        record = self.record(time.perf_counter() - started)
        logger.info(f"{config.method} run finished in {record.wall_time_s:.1f}s, "
                    f"final tracking fit {record.final_tracking_fit}, {self.fallbacks} fallbacks")
        return record


def run_krilc(config, model=None):
    return ControlRun(config, model).run()
