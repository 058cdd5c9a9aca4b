"""
Test plants: the fixed two-tap benchmark plant and random high-order LTV
plants whose complex poles and zeros rotate over the horizon.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import residuez

from backend.exceptions import GenerationFailure, InstabilityError
from .systems import LtvArxModel, bibo_sums, to_state_space

logger = logging.getLogger(__name__)


def benchmark_coefficients(t):
    """(a(t), b(t)) of the benchmark plant; t in radians, any real value."""
    a = np.array([1.2, -0.35])
    b = np.array([
        1 + 0.1 * np.cos(t) + 0.03 * np.sin(t),
        0.1 * np.sin(t) - 0.05 * np.cos(t) - 0.521,
    ])
    return a, b


def benchmark_plant(N_d):
    rows = [benchmark_coefficients(t) for t in range(1, N_d + 1)]
    return LtvArxModel(a=np.array([a for a, _ in rows]), b=np.array([b for _, b in rows]))


def rotate_root(s0, t, N_d):
    """
    Rotate a complex root by sgn(a0) * pi * t / (4 N_d) around a0 = arctan(Im/Re).

    Real roots and 0 pass through. The conjugate of s0 rotates to the
    conjugate of the result.
    """
    s0 = complex(s0)
    if s0 == 0 or s0.imag == 0:
        return s0
    a0 = np.arctan(s0.imag / s0.real) if s0.real != 0 else np.sign(s0.imag) * np.pi / 2
    return abs(s0) * np.exp(1j * (np.sign(a0) * np.pi * t / (4 * N_d) + a0))


@dataclass(frozen=True)
class AcceptanceFilter:
    d_g_u_max: float = 5.0
    dominant_pole_drift_max: float = 0.001
    dominant_pole_min: float = 0.7


@dataclass(frozen=True)
class GeneratorConfig:
    horizon: int
    order: int = 10
    radius: float = 0.95
    seed: int = 0
    N_d: int = None
    filter: AcceptanceFilter = field(default=None)

    MAX_ATTEMPTS = 10000
    REAL_ROOT_PROBABILITY = 0.3
    GAIN_RANGE = (0.5, 1.5)

    def __post_init__(self):
        if not 0 < self.radius < 1:
            raise ValueError(f"radius must lie in (0, 1), got {self.radius}")
        if self.order < 1:
            raise ValueError(f"order must be at least 1, got {self.order}")
        if self.horizon < 1:
            raise ValueError(f"horizon must be at least 1, got {self.horizon}")

    @property
    def rotation_horizon(self):
        return self.N_d or self.horizon


@dataclass(frozen=True)
class GeneratedPlant:
    model: LtvArxModel
    poles: np.ndarray
    zeros: np.ndarray
    gain: float
    attempts: int
    dominant_pole_magnitudes: np.ndarray = None
    d_g_u: float = None


def sample_roots(rng, count, radius, real_probability):
    """`count` roots in the open disc, complex ones in conjugate pairs."""
    roots = []
    while len(roots) < count:
        magnitude = rng.uniform(0.0, radius)
        if count - len(roots) == 1 or rng.uniform() < real_probability:
            roots.append(complex(magnitude * rng.choice([-1.0, 1.0])))
        else:
            root = magnitude * np.exp(1j * rng.uniform(0.0, 2 * np.pi))
            roots.extend([root, np.conj(root)])
    return np.array(roots, dtype=complex)


def rotated_roots(roots, t, N_d):
    return np.array([rotate_root(root, t, N_d) for root in roots], dtype=complex)


def _polynomial(roots):
    return np.real(np.poly(roots)) if len(roots) else np.array([1.0])


def dominant_pole(b, a):
    """Pole of the frozen transfer function whose residue is largest in magnitude."""
    residues, poles, _ = residuez(np.concatenate([[0.0], b]), np.concatenate([[1.0], a]))
    return poles[np.argmax(np.abs(residues))]


def _assemble(poles, zeros, gain, config):
    horizon, N_d = config.horizon, config.rotation_horizon
    a = np.zeros((horizon, config.order))
    b = np.zeros((horizon, config.order))
    for t in range(1, horizon + 1):
        a[t - 1] = _polynomial(rotated_roots(poles, t, N_d))[1:]
        b[t - 1, :len(zeros) + 1] = gain * _polynomial(rotated_roots(zeros, t, N_d))
    return LtvArxModel(a=a, b=b)


def _rejection(model, flt):
    """Name of the first failing acceptance test, or None with the measured figures."""
    magnitudes = np.array([abs(dominant_pole(model.b[t], model.a[t])) for t in range(model.horizon)])
    if magnitudes.min() <= flt.dominant_pole_min:
        return 'dominant_pole_min', magnitudes, None
    if magnitudes.max() - magnitudes.min() > flt.dominant_pole_drift_max:
        return 'dominant_pole_drift_max', magnitudes, None
    try:
        d_g_u, _ = bibo_sums(to_state_space(model))
    except InstabilityError:
        return 'd_g_u_max', magnitudes, None
    if d_g_u > flt.d_g_u_max:
        return 'd_g_u_max', magnitudes, d_g_u
    return None, magnitudes, d_g_u


def generate_plant(config):
    """
    Random LTV ARX plant: poles and zeros in the radius disc, complex ones
    rotating in time, the pole polynomial reused as the ARX A-polynomial.
    With a filter, draws are repeated until every acceptance test passes.
    """
    rng = np.random.default_rng(config.seed)
    failing = None

    for attempt in range(1, config.MAX_ATTEMPTS + 1):
        poles = sample_roots(rng, config.order, config.radius, config.REAL_ROOT_PROBABILITY)
        zeros = sample_roots(rng, config.order - 1, config.radius, config.REAL_ROOT_PROBABILITY)
        gain = rng.uniform(*config.GAIN_RANGE)
        model = _assemble(poles, zeros, gain, config)

        if config.filter is None:
            return GeneratedPlant(model=model, poles=poles, zeros=zeros, gain=gain, attempts=attempt)

        failing, magnitudes, d_g_u = _rejection(model, config.filter)
        if failing is None:
            logger.info(f"Plant accepted after {attempt} draws (seed={config.seed}, d_g_u={d_g_u:.3f})")
            return GeneratedPlant(model=model, poles=poles, zeros=zeros, gain=gain, attempts=attempt,
                                  dominant_pole_magnitudes=magnitudes, d_g_u=d_g_u)

    raise GenerationFailure(failing, config.MAX_ATTEMPTS)
