"""
Comparison learning controllers.

Adaptive ILC: per-time normalized-gradient update of an l_theta-tap law on
past errors, with an online estimate psi_hat of the local input-output
gradient.

Inversion ILC: per-frequency-bin update U_j = U_{j-1} + rho(|Y|) U/Y E with a
raised-cosine gate on small output bins.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AdaptiveIlcParams:
    l_theta: int = 3
    eta_theta: float = 0.1
    mu_theta: float = 0.5
    eta_psi: float = 1.0
    mu_psi: float = 1.0
    psi_init: float = 1.0

    GUARD = 1e-12

    def __post_init__(self):
        if self.l_theta < 1:
            raise ValueError(f"l_theta must be at least 1, got {self.l_theta}")
        for name in ('eta_theta', 'eta_psi'):
            if not 0 < getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in (0, 1], got {getattr(self, name)}")
        for name in ('mu_theta', 'mu_psi'):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")


@dataclass
class AdaptiveIlcState:
    horizon: int
    params: AdaptiveIlcParams = field(default_factory=AdaptiveIlcParams)
    theta: np.ndarray = None
    psi_hat: np.ndarray = None

    def __post_init__(self):
        if self.theta is None:
            self.theta = np.zeros((self.horizon, self.params.l_theta))
        if self.psi_hat is None:
            self.psi_hat = np.full(self.horizon, self.params.psi_init)


def regressor_xi(errors, l_theta):
    """
    xi = [-e_{j-1}, De_{j-1}, ..., De_{j-l_theta+1}] at one time, from
    errors = [e_{j-1}, e_{j-2}, ..., e_{j-l_theta}] (zeros where absent).
    """
    errors = np.zeros(l_theta) if errors is None else np.asarray(errors, dtype=float)
    padded = np.zeros(l_theta)
    padded[:min(l_theta, errors.size)] = errors[:l_theta]
    xi = np.empty(l_theta)
    xi[0] = -padded[0]
    xi[1:] = padded[:-1] - padded[1:]
    return xi


def adaptive_ilc_step(state, t, errors, u_prev_t, delta_y, delta_u):
    """
    Input u_j(t) at 1-based time t, then advance theta(t) and psi_hat(t).

    errors: [e_{j-1}(t+1), ..., e_{j-l_theta}(t+1)]; delta_y = y_j(t) - y_{j-1}(t);
    delta_u = u_j(t-1) - u_{j-1}(t-1). Updates whose denominators vanish are skipped.
    """
    p = state.params
    index = t - 1

    psi_prev = state.psi_hat[index]
    denominator = p.mu_psi + delta_u ** 2
    if denominator >= p.GUARD:
        state.psi_hat[index] = psi_prev + p.eta_psi * (delta_y - psi_prev * delta_u) * delta_u / denominator
    psi = state.psi_hat[index]

    xi = regressor_xi(errors, p.l_theta)
    theta = state.theta[index]
    u_new = float(u_prev_t + xi @ theta)

    e_prev = -xi[0]
    denominator = (p.mu_theta + psi ** 2) * float(xi @ xi)
    if denominator >= p.GUARD:
        state.theta[index] = theta + p.eta_theta * (psi * e_prev - p.mu_theta * float(xi @ theta)) * xi / denominator

    if not (np.all(np.isfinite(state.theta[index])) and np.isfinite(state.psi_hat[index])):
        logger.warning(f"Adaptive ILC state became non-finite at t={t}; resetting")
        state.theta[index] = 0.0
        state.psi_hat[index] = p.psi_init
    return u_new


def rho_gate(magnitude, gamma):
    """1 above gamma, 0.5 (1 - cos(pi |Y| / gamma)) at or below it."""
    magnitude = np.asarray(magnitude, dtype=float)
    return np.where(magnitude > gamma, 1.0, 0.5 * (1.0 - np.cos(np.pi * magnitude / gamma)))


def inversion_ilc_update(U_prev, Y_prev, E_prev, gamma=0.9):
    U_prev = np.asarray(U_prev, dtype=complex)
    Y_prev = np.asarray(Y_prev, dtype=complex)
    E_prev = np.asarray(E_prev, dtype=complex)
    if not (U_prev.shape == Y_prev.shape == E_prev.shape):
        raise ValueError("spectra must have equal length")
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")

    U = U_prev.copy()
    active = Y_prev != 0
    gain = rho_gate(np.abs(Y_prev[active]), gamma)
    U[active] = U_prev[active] + gain * U_prev[active] / Y_prev[active] * E_prev[active]
    return U


@dataclass
class InversionIlcState:
    U: np.ndarray
    gamma: float = 0.9

    @classmethod
    def from_input(cls, u, gamma=0.9):
        return cls(U=np.fft.fft(np.asarray(u, dtype=float)), gamma=gamma)

    @property
    def N(self):
        return self.U.shape[0]

    def update(self, y_prev, e_prev):
        """Advance the spectrum with the last iteration's output and error; returns u_j."""
        self.U = inversion_ilc_update(self.U, np.fft.fft(y_prev), np.fft.fft(e_prev), self.gamma)
        return self.input()

    def input(self):
        return np.real(np.fft.ifft(self.U))
