"""
Experiment definitions and the named presets.

A config is a flat mapping whose keys mirror ExperimentConfig's fields; files
and presets both go through ExperimentConfigSerializer before a run starts.
"""
import json
import logging
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from django.conf import settings

from backend.exceptions import ConfigurationError
from controller.baselines import AdaptiveIlcParams
from controller.design import ControllerSettings
from identification.estimation import EstimationSettings
from identification.regression import HyperparameterDomain

logger = logging.getLogger(__name__)


def default_parallelism():
    return max(1, int(settings.KRILC.get('PARALLELISM', 1)))


@dataclass(frozen=True)
class ExperimentConfig:
    """
    `kind` is 'control' (a learning-control run) or 'identification' (model
    estimation on white-noise data). `plant` is 'benchmark' (the fixed two-tap
    plant), 'generated' (drawn from plant_seed) or 'file' (plant_file).
    d_v = None draws unbounded Gaussian noise.
    """

    KINDS = ('control', 'identification')
    METHODS = ('KRILC', 'KRILC-LS', 'ADAPTIVE', 'INVERSION')
    PLANTS = ('benchmark', 'generated', 'file')
    INITIAL_MODES = ('adaptive', 'zero')
    ESTIMATORS = ('RLS', 'LS')

    kind: str = 'control'
    method: str = 'KRILC'
    label: str = ''
    seed: int = 0

    plant: str = 'benchmark'
    plant_seed: int = 0
    plant_file: str = None
    plant_order: int = 10
    plant_radius: float = 0.95
    plant_filter: bool = True
    reference: str = 'two-tone'

    N_e: int = 50
    N_d: int = 50
    n_a: int = 10
    n_b: int = 10
    n_c: int = 10
    d_u: float = 2.0
    d_c: float = 0.7
    sigma2: float = 0.01
    d_v: float = 0.05

    family_b: str = 'DI'
    family_a: str = 'DI'
    family_c: str = 'DI'
    model_starts: int = 5
    model_evaluations: int = 500
    controller_starts: int = 3
    controller_evaluations: int = 200

    initial: str = 'adaptive'
    initial_iterations: int = 2
    l_theta: int = 3
    eta_theta: float = 0.1
    mu_theta: float = 0.5
    eta_psi: float = 1.0
    mu_psi: float = 1.0
    gamma: float = 0.9

    input_variance: float = 1.0
    estimators: tuple = ('RLS', 'LS')
    checkpoint_every: int = 10

    parallelism: int = None

    def estimation_settings(self):
        return EstimationSettings(
            n_a=self.n_a,
            n_b=self.n_b,
            family_b=self.family_b,
            family_a=self.family_a,
            domain=HyperparameterDomain(
                sigma2_rel_floor=1e-6,
                starts=self.model_starts,
                max_evaluations=self.model_evaluations,
            ),
        )

    def controller_settings(self):
        return ControllerSettings(
            n_c=self.n_c,
            d_u=self.d_u,
            d_c=self.d_c,
            family=self.family_c,
            starts=self.controller_starts,
            max_evaluations=self.controller_evaluations,
        )

    def adaptive_params(self):
        return AdaptiveIlcParams(
            l_theta=self.l_theta,
            eta_theta=self.eta_theta,
            mu_theta=self.mu_theta,
            eta_psi=self.eta_psi,
            mu_psi=self.mu_psi,
        )

    @property
    def workers(self):
        """Worker count; an unset parallelism follows KRILC['PARALLELISM']."""
        return self.parallelism or default_parallelism()

    def checkpoints(self):
        """Iterations at which identification runs evaluate their estimators."""
        step = max(1, self.checkpoint_every)
        points = list(range(step, self.N_e + 1, step))
        if not points or points[-1] != self.N_e:
            points.append(self.N_e)
        return points

    def with_overrides(self, **overrides):
        overrides = {key: value for key, value in overrides.items() if value is not None}
        return replace(self, **overrides) if overrides else self

    def to_dict(self):
        data = asdict(self)
        data['estimators'] = list(self.estimators)
        return data

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


PRESETS = {
    'sec51': {
        'kind': 'control',
        'method': 'KRILC',
        'plant': 'benchmark',
        'reference': 'two-tone',
        'N_e': 50,
        'N_d': 50,
        'n_a': 10,
        'n_b': 10,
        'n_c': 10,
        'd_u': 2.0,
        'd_c': 0.7,
        'sigma2': 0.01,
        'd_v': 0.05,
    },
    'sec51-model': {
        'kind': 'identification',
        'plant': 'benchmark',
        'reference': 'two-tone',
        'N_e': 500,
        'N_d': 50,
        'n_a': 10,
        'n_b': 10,
        'sigma2': 0.01,
        'd_v': 0.05,
        'checkpoint_every': 25,
    },
    'sec52-model': {
        'kind': 'identification',
        'plant': 'generated',
        'reference': 'ramp',
        'N_e': 200,
        'N_d': 200,
        'n_a': 20,
        'n_b': 20,
        'sigma2': 1.0,
        'd_v': None,
        'checkpoint_every': 20,
    },
    'sec52-control': {
        'kind': 'control',
        'method': 'KRILC',
        'plant': 'generated',
        'reference': 'ramp',
        'N_e': 150,
        'N_d': 200,
        'n_a': 20,
        'n_b': 20,
        'n_c': 10,
        'd_u': 15.0,
        'd_c': 0.3,
        'sigma2': 0.01,
        'd_v': 0.05,
    },
}

# Methods compared by a preset's campaign
CAMPAIGN_METHODS = {
    'sec51': ('KRILC', 'ADAPTIVE', 'INVERSION'),
    'sec52-control': ('KRILC', 'KRILC-LS'),
}


def preset_data(name):
    try:
        return dict(PRESETS[name], label=name)
    except KeyError:
        raise ConfigurationError(f"Unknown preset '{name}', expected one of {sorted(PRESETS)}")


def read_config_file(path):
    try:
        data = json.loads(Path(path).read_text())
    except OSError as e:
        raise ConfigurationError(f"Cannot read config file {path}: {e}")
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"Config file {path} is not valid JSON: {e}")
    if not isinstance(data, dict):
        raise ConfigurationError(f"Config file {path} must hold a JSON object")
    return data


def load_config(data):
    """Validate a raw mapping and build the config; raises ConfigurationError."""
    from .serializers import ExperimentConfigSerializer

    serializer = ExperimentConfigSerializer(data=data)
    if not serializer.is_valid():
        logger.warning(f"Experiment config rejected: {serializer.errors}")
        raise ConfigurationError(f"Invalid experiment config: {serializer.errors}")
    return serializer.build()
