"""
Repetitive LTV ARX plants: simulation, state-space form and impulse responses.

Coefficient row t-1 holds a_l(t), b_k(t). All signals are arrays over times
1..horizon with the convention that every sample at a nonpositive time is 0.

State-space form used throughout:

    x(t)   = [y(t), y(t-1), ..., y(t-n_a+1)]
    w(t)   = [u(t), u(t-1), ..., u(t-n_b+1), v(t+1)]
    x(t+1) = A(t) x(t) + B(t) w(t),   y(t) = C x(t)

with A(t) a companion matrix whose first row is -a(t+1), B(t) whose first row
is [b(t+1), 1], and C = [1, 0, ..., 0].
"""
import logging
from dataclasses import dataclass

import numpy as np

from backend.exceptions import HorizonIndexError, InstabilityError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LtvArxModel:
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        b = np.atleast_2d(np.asarray(self.b, dtype=float))
        if a.shape[0] != b.shape[0]:
            raise ValueError(f"a has {a.shape[0]} time rows, b has {b.shape[0]}")
        if a.shape[1] < 1 or b.shape[1] < 1:
            raise ValueError("n_a and n_b must be at least 1")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("plant coefficients must be finite")
        object.__setattr__(self, 'a', a)
        object.__setattr__(self, 'b', b)

    @property
    def n_a(self):
        return self.a.shape[1]

    @property
    def n_b(self):
        return self.b.shape[1]

    @property
    def horizon(self):
        return self.a.shape[0]

    def theta_at(self, t, n_a=None, n_b=None):
        """[b(t); a(t)] zero-padded or truncated to the requested orders."""
        if t < 1 or t > self.horizon:
            raise HorizonIndexError(f"time {t} outside 1..{self.horizon}")
        n_a = self.n_a if n_a is None else n_a
        n_b = self.n_b if n_b is None else n_b
        b = np.zeros(n_b)
        a = np.zeros(n_a)
        b[:min(n_b, self.n_b)] = self.b[t - 1, :n_b]
        a[:min(n_a, self.n_a)] = self.a[t - 1, :n_a]
        return np.concatenate([b, a])

    def truncated(self, horizon):
        return LtvArxModel(a=self.a[:horizon], b=self.b[:horizon])


def _lagged(signal, t, count):
    """[x(t-1), ..., x(t-count)] from a 1-based array, zero at nonpositive times."""
    out = np.zeros(count)
    for k in range(1, count + 1):
        if t - k >= 1:
            out[k - 1] = signal[t - k - 1]
    return out


def output_at(model, t, u, y, v_t):
    """y(t) from inputs u(1..t-1), outputs y(1..t-1) and the noise sample v(t)."""
    return float(
        -model.a[t - 1] @ _lagged(y, t, model.n_a)
        + model.b[t - 1] @ _lagged(u, t, model.n_b)
        + v_t
    )


def simulate_iteration(model, u, v):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != (model.horizon,) or v.shape != (model.horizon,):
        raise ValueError(f"signals must have {model.horizon} samples")

    y = np.zeros(model.horizon)
    with np.errstate(over='ignore', invalid='ignore'):
        for t in range(1, model.horizon + 1):
            y[t - 1] = output_at(model, t, u, y, v[t - 1])
            if not np.isfinite(y[t - 1]):
                raise InstabilityError("plant output diverged", time=t)
    return y


@dataclass(frozen=True)
class StateSpaceLtv:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    @property
    def horizon(self):
        return self.A.shape[0]

    @property
    def n_b(self):
        return self.B.shape[2] - 1


def to_state_space(model):
    n_a, n_b, horizon = model.n_a, model.n_b, model.horizon
    A = np.zeros((horizon, n_a, n_a))
    B = np.zeros((horizon, n_a, n_b + 1))
    for t in range(horizon):
        A[t, 0, :] = -model.a[t]
        A[t, 1:, :-1] = np.eye(n_a - 1)
        B[t, 0, :n_b] = model.b[t]
        B[t, 0, n_b] = 1.0
    C = np.zeros((1, n_a))
    C[0, 0] = 1.0
    return StateSpaceLtv(A=A, B=B, C=C)


def stacked_inputs(u, v, n_b):
    """Rows w(i) for i = 0..horizon-1."""
    horizon = len(u)
    W = np.zeros((horizon, n_b + 1))
    for i in range(horizon):
        for k in range(n_b):
            if i - k >= 1:
                W[i, k] = u[i - k - 1]
        W[i, n_b] = v[i]
    return W


def propagate(ss, u, v):
    """Zero-state output y(1..horizon) of the state-space form."""
    W = stacked_inputs(np.asarray(u, dtype=float), np.asarray(v, dtype=float), ss.n_b)
    x = np.zeros(ss.A.shape[1])
    y = np.zeros(ss.horizon)
    for t in range(ss.horizon):
        x = ss.A[t] @ x + ss.B[t] @ W[t]
        y[t] = (ss.C @ x)[0]
    return y


@dataclass(frozen=True)
class ImpulseResponse:
    values: np.ndarray

    @property
    def G_u(self):
        return self.values[:-1]

    @property
    def G_v(self):
        return float(self.values[-1])


def impulse_response(ss, t, i):
    """G(t, i) = C Psi(t, i+1) B(i) with Psi(t, s) = A(t-1) ... A(s)."""
    if i < 0 or t > ss.horizon or t <= i:
        raise HorizonIndexError(f"impulse response needs 0 <= i < t <= {ss.horizon}, got t={t}, i={i}")
    row = ss.C[0].copy()
    for s in range(t - 1, i, -1):
        row = row @ ss.A[s]
    return ImpulseResponse(values=row @ ss.B[i])


def impulse_table(ss):
    """
    All G(t, i) at once, shape (horizon + 1, horizon, n_b + 1), zero where i >= t.

    For each t the row vector C Psi(t, s+1) is carried backwards in s.
    """
    horizon = ss.horizon
    table = np.zeros((horizon + 1, horizon, ss.n_b + 1))
    with np.errstate(over='ignore', invalid='ignore'):
        for t in range(1, horizon + 1):
            row = ss.C[0].copy()
            for s in range(t - 1, -1, -1):
                table[t, s] = row @ ss.B[s]
                row = row @ ss.A[s]
            if not np.all(np.isfinite(table[t])):
                raise InstabilityError("impulse response is not finite", time=t)
    return table


def bibo_sums(ss, table=None):
    """
    Finite-horizon impulse-response sums

        d_g_u = max_t sum_i ||G_u(t, i)||,   d_g_v = max_t sum_i |G_v(t, i)|
    """
    table = impulse_table(ss) if table is None else table
    u_sums = np.linalg.norm(table[:, :, :-1], axis=2).sum(axis=1)
    v_sums = np.abs(table[:, :, -1]).sum(axis=1)
    if not (np.all(np.isfinite(u_sums)) and np.all(np.isfinite(v_sums))):
        raise InstabilityError("impulse-response sums are not finite")
    return float(u_sums.max()), float(v_sums.max())
