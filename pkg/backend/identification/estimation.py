"""
Per-time-instant estimation of the time-varying ARX coefficients from
cross-iteration data.

At a fixed time t every past iteration i contributes one row

    y_i(t) = [u_i(t-1) .. u_i(t-n_b), -y_i(t-1) .. -y_i(t-n_a)] theta_m(t) + v_i(t)

so each t is an independent regression whose row count grows with the
iteration index.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from backend.exceptions import HorizonIndexError, SequencingError
from .kernels import KernelFamily
from .regression import HyperparameterDomain, RlsSolution, ls_solve, minimize_sure

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EstimationSettings:
    n_a: int = 20
    n_b: int = 20
    family_b: KernelFamily = KernelFamily.DI
    family_a: KernelFamily = KernelFamily.DI
    domain: HyperparameterDomain = field(
        default_factory=lambda: HyperparameterDomain(sigma2_rel_floor=1e-6)
    )

    @property
    def n_theta(self):
        return self.n_a + self.n_b

    @property
    def blocks(self):
        return ((KernelFamily(self.family_b), self.n_b), (KernelFamily(self.family_a), self.n_a))


@dataclass(frozen=True)
class RegressorView:
    Y: np.ndarray
    Phi: np.ndarray

    @property
    def rows(self):
        return self.Y.shape[0]


@dataclass(frozen=True)
class ModelEstimate:
    t: int
    theta_b_hat: np.ndarray
    theta_a_hat: np.ndarray
    eta_m_hat: tuple = ()
    sigma2_hat: float = None
    solution_meta: RlsSolution = None
    source: str = 'rls'

    @property
    def theta(self):
        return np.concatenate([self.theta_b_hat, self.theta_a_hat])

    @property
    def b1_hat(self):
        return float(self.theta_b_hat[0]) if self.theta_b_hat.size else 0.0

    def relabel(self, t, source):
        """Same coefficients reused at another time or under another provenance."""
        return ModelEstimate(
            t=t,
            theta_b_hat=self.theta_b_hat,
            theta_a_hat=self.theta_a_hat,
            eta_m_hat=self.eta_m_hat,
            sigma2_hat=self.sigma2_hat,
            solution_meta=self.solution_meta,
            source=source,
        )


def zero_estimate(t, settings):
    return ModelEstimate(t=t, theta_b_hat=np.zeros(settings.n_b),
                         theta_a_hat=np.zeros(settings.n_a), source='zero')


def build_regressors(store, j, t, n_a, n_b):
    """Stack rows phi_i(t) for every stored iteration i before j."""
    if j < 1 or j > store.n_iterations + 1:
        raise HorizonIndexError(f"iteration {j} outside 1..{store.n_iterations + 1}")
    if t < 1 or t > store.horizon:
        raise HorizonIndexError(f"time {t} outside 1..{store.horizon}")
    if store.completed < j - 1:
        raise SequencingError(
            f"regressors for iteration {j} need data through iteration {j - 1}, "
            f"store holds {store.completed}"
        )

    iterations = list(range(store.first_iteration, j))
    Y = np.array([store.value('y', i, t) for i in iterations], dtype=float)
    Phi = np.zeros((len(iterations), n_a + n_b))
    for row, i in enumerate(iterations):
        Phi[row, :n_b] = store.window('u', i, t - 1, n_b)
        Phi[row, n_b:] = -store.window('y', i, t - 1, n_a)
    return RegressorView(Y=Y, Phi=Phi)


def _split(theta, settings):
    return theta[:settings.n_b].copy(), theta[settings.n_b:].copy()


def estimate_model(store, j, t, settings, *, seed=0, warm_start=None):
    """
    RLS estimate of theta_m(t) with block-diagonal kernel and SURE-tuned
    hyper-parameters; one noise variance is shared by both blocks.
    """
    view = build_regressors(store, j, t, settings.n_a, settings.n_b)
    if view.rows == 0:
        raise SequencingError(f"no data rows for the model at t={t} before iteration {j}")

    result = minimize_sure(
        view.Y,
        view.Phi,
        settings.blocks,
        settings.domain,
        seed=seed,
        warm_start=warm_start.eta_m_hat if warm_start is not None and warm_start.eta_m_hat else None,
    )
    theta_b, theta_a = _split(result.solution.theta_hat, settings)
    return ModelEstimate(
        t=t,
        theta_b_hat=theta_b,
        theta_a_hat=theta_a,
        eta_m_hat=result.eta_hat,
        sigma2_hat=result.sigma2_hat,
        solution_meta=result.solution,
    )


def estimate_model_ls(store, j, t, settings):
    """Unregularized estimate; needs at least n_a + n_b well-conditioned rows."""
    view = build_regressors(store, j, t, settings.n_a, settings.n_b)
    theta = ls_solve(view.Y, view.Phi)
    residual = view.Y - view.Phi @ theta
    dof = view.rows - settings.n_theta
    sigma2 = float(residual @ residual) / dof if dof > 0 else None
    theta_b, theta_a = _split(theta, settings)
    return ModelEstimate(t=t, theta_b_hat=theta_b, theta_a_hat=theta_a,
                         sigma2_hat=sigma2, source='ls')
