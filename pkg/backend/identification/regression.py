"""
Regularized least squares and SURE hyper-parameter tuning.

The solver never inverts the kernel matrix P, so kernels on the boundary of
their box (c = 0, alpha = 0) are handled: components of theta in the null
space of P come out as zero.

Two algebraically equal inverse-free forms are used, whichever system is
smaller:

    dual   theta = P Phi^T (Phi P Phi^T + s2 I_N)^-1 Y          (N x N solve)
    primal theta = (P Phi^T Phi + s2 I_n)^-1 P Phi^T Y          (n x n solve)
"""
import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import linalg
from scipy.optimize import minimize
from scipy.special import expit, logit

from backend.exceptions import (
    IllConditionedError,
    KrilcError,
    OptimizationFailure,
    SingularityError,
)
from .kernels import KernelConfig, KernelFamily, KernelMatrix, block_diag_model_kernel, build_kernel

logger = logging.getLogger(__name__)


@dataclass
class RegressionProblem:
    Y: np.ndarray
    Phi: np.ndarray
    sigma2: float
    P: KernelMatrix

    def __post_init__(self):
        self.Y = np.asarray(self.Y, dtype=float).reshape(-1)
        self.Phi = np.asarray(self.Phi, dtype=float)
        if self.Phi.ndim == 1:
            self.Phi = self.Phi.reshape(len(self.Y), -1) if len(self.Y) else self.Phi.reshape(0, -1)
        if self.Phi.shape[0] != self.Y.shape[0]:
            raise ValueError(f"Phi has {self.Phi.shape[0]} rows but Y has {self.Y.shape[0]}")
        if self.P.values.shape != (self.Phi.shape[1], self.Phi.shape[1]):
            raise ValueError(f"kernel is {self.P.values.shape}, expected {self.Phi.shape[1]} square")
        if self.sigma2 < 0:
            raise ValueError(f"sigma2 must be nonnegative, got {self.sigma2}")

    @property
    def N(self):
        return self.Y.shape[0]

    @property
    def n(self):
        return self.Phi.shape[1]


@dataclass(frozen=True)
class RlsSolution:
    theta_hat: np.ndarray
    hat_matrix_trace: float
    residual_norm2: float

    def sure_value(self, sigma2):
        return self.residual_norm2 + 2.0 * sigma2 * self.hat_matrix_trace


def _lu_solve_checked(matrix, rhs):
    lu, piv = linalg.lu_factor(matrix, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if pivots.size and (not np.all(np.isfinite(pivots)) or
                        pivots.min() <= matrix.shape[0] * np.finfo(float).eps * max(pivots.max(), 1e-300)):
        raise SingularityError("regularized normal matrix is numerically singular")
    return linalg.lu_solve((lu, piv), rhs, check_finite=False)


def _solve_rls(Phi, Y, sigma2, P, gram=None):
    N, n = Phi.shape
    if N == 0:
        return np.zeros(n), 0.0

    if N <= n:
        K = Phi @ P @ Phi.T
        G = K + sigma2 * np.eye(N)
        try:
            factor = linalg.cho_factor(G, check_finite=False)
            weights = linalg.cho_solve(factor, np.column_stack([Y, K]), check_finite=False)
        except linalg.LinAlgError:
            weights = _lu_solve_checked(G, np.column_stack([Y, K]))
        theta = P @ Phi.T @ weights[:, 0]
        trace = float(np.trace(weights[:, 1:]))
    else:
        gram = Phi.T @ Phi if gram is None else gram
        PG = P @ gram
        M = PG + sigma2 * np.eye(n)
        solved = _lu_solve_checked(M, np.column_stack([P @ (Phi.T @ Y), PG]))
        theta = solved[:, 0]
        trace = float(np.trace(solved[:, 1:]))

    if not np.all(np.isfinite(theta)):
        raise SingularityError("RLS estimate is not finite")
    return theta, float(np.clip(trace, 0.0, min(N, n)))


def rls_solve(prob):
    """
    Minimise ||Y - Phi theta||^2 + sigma2 theta^T P^-1 theta.

    For N = 0 the regulariser alone is minimised, i.e. theta = 0 with a zero
    hat-matrix trace.
    """
    theta, trace = _solve_rls(prob.Phi, prob.Y, prob.sigma2, prob.P.values)
    residual = prob.Y - prob.Phi @ theta
    return RlsSolution(theta_hat=theta, hat_matrix_trace=trace,
                       residual_norm2=float(residual @ residual))


def ls_solve(Y, Phi):
    """Least squares through an economic QR factorization."""
    Y = np.asarray(Y, dtype=float).reshape(-1)
    Phi = np.asarray(Phi, dtype=float)
    N, n = Phi.shape
    if N < n:
        raise IllConditionedError(f"least squares needs at least {n} rows, got {N}")
    Q, R = linalg.qr(Phi, mode='economic', check_finite=False)
    diagonal = np.abs(np.diag(R))
    if diagonal.size and diagonal.min() <= max(N, n) * np.finfo(float).eps * diagonal.max():
        raise IllConditionedError("regressor matrix is rank deficient")
    return linalg.solve_triangular(R, Q.T @ Y, check_finite=False)


def sure_objective(prob):
    solution = rls_solve(prob)
    return solution.sure_value(prob.sigma2)


@dataclass(frozen=True)
class HyperparameterDomain:
    """
    Search box for SURE tuning.

    c is searched in log scale within `c_decades` decades of a data-derived
    reference scale, alpha in logit scale, beta in natural scale with clipping.
    The noise variance is floored at max(sigma2_min, sigma2_rel_floor * mean(Y^2)).
    """
    c_decades: float = 8.0
    logit_span: float = 20.0
    sigma2_min: float = 1e-10
    sigma2_max: float = np.inf
    sigma2_rel_floor: float = 0.0
    starts: int = 5
    max_evaluations: int = 500

    def sigma2_floor(self, Y):
        scale = float(np.mean(np.square(Y))) if len(Y) else 0.0
        return max(self.sigma2_min, self.sigma2_rel_floor * scale)


class SureResult(NamedTuple):
    eta_hat: tuple
    sigma2_hat: float
    solution: RlsSolution


class _SureSearch:
    """Objective evaluation for one regression, in the transformed search space."""

    FATOL = 1e-8
    XATOL = 1e-6
    PROFILE_ITERATIONS = 50
    PROFILE_RTOL = 1e-10

    def __init__(self, Y, Phi, blocks, domain, sigma2=None):
        self.Y = Y
        self.Phi = Phi
        self.blocks = blocks
        self.domain = domain
        self.fixed_sigma2 = sigma2
        self.N, self.n = Phi.shape
        self.gram = Phi.T @ Phi if self.N > self.n else None

        self.sigma2_floor = domain.sigma2_floor(Y)
        self.sigma2_last = max(float(np.mean(np.square(Y))) if self.N else 1.0, self.sigma2_floor)

        mean_output = float(np.mean(np.square(Y))) if self.N else 1.0
        mean_regressor = float(np.mean(np.square(Phi))) if Phi.size else 0.0
        if mean_output <= 0.0:
            mean_output = 1.0
        if mean_regressor <= 0.0:
            mean_regressor = 1.0
        self.log_c_ref = np.log10(mean_output / mean_regressor)

    # transformed vector layout: per block [log10 c, logit alpha, (beta)]

    def _bounds(self):
        lower, upper = [], []
        for family, _ in self.blocks:
            lower += [self.log_c_ref - self.domain.c_decades, -self.domain.logit_span]
            upper += [self.log_c_ref + self.domain.c_decades, self.domain.logit_span]
            if family is KernelFamily.DC:
                lower.append(-1.0)
                upper.append(1.0)
        return np.array(lower), np.array(upper)

    def configs(self, x):
        lower, upper = self._bounds()
        x = np.clip(x, lower, upper)
        configs, position = [], 0
        for family, size in self.blocks:
            c = 10.0 ** x[position]
            alpha = float(expit(x[position + 1]))
            alpha = min(alpha, np.nextafter(1.0, 0.0))
            eta = [c, alpha]
            position += 2
            if family is KernelFamily.DC:
                eta.append(float(x[position]))
                position += 1
            configs.append(KernelConfig(family, size, tuple(eta)))
        return tuple(configs)

    def transform(self, configs):
        x = []
        for config in configs:
            c = max(config.c, 1e-300)
            alpha = min(max(config.alpha, 1e-12), 1.0 - 1e-12)
            x += [np.log10(c), float(logit(alpha))]
            if config.family is KernelFamily.DC:
                x.append(config.beta)
        lower, upper = self._bounds()
        return np.clip(np.array(x), lower, upper)

    def kernel(self, configs):
        matrices = [build_kernel(config) for config in configs]
        kernel = matrices[0]
        for block in matrices[1:]:
            kernel = block_diag_model_kernel(kernel, block)
        return kernel

    def profile(self, P):
        """Noise variance by re-estimation sigma2 = RSS / (N - Trace(H)), floored."""
        if self.fixed_sigma2 is not None:
            sigma2 = self.fixed_sigma2
            theta, trace = _solve_rls(self.Phi, self.Y, sigma2, P, self.gram)
            return sigma2, theta, trace

        sigma2 = self.sigma2_last
        for _ in range(self.PROFILE_ITERATIONS):
            theta, trace = _solve_rls(self.Phi, self.Y, sigma2, P, self.gram)
            residual = self.Y - self.Phi @ theta
            dof = self.N - trace
            if dof <= 1e-12 * self.N:
                updated = self.sigma2_floor
            else:
                updated = float(residual @ residual) / dof
            updated = float(np.clip(updated, self.sigma2_floor, self.domain.sigma2_max))
            converged = abs(updated - sigma2) <= self.PROFILE_RTOL * max(sigma2, 1e-300)
            sigma2 = updated
            if converged:
                break
        theta, trace = _solve_rls(self.Phi, self.Y, sigma2, P, self.gram)
        self.sigma2_last = sigma2
        return sigma2, theta, trace

    def evaluate(self, configs):
        P = self.kernel(configs).values
        sigma2, theta, trace = self.profile(P)
        residual = self.Y - self.Phi @ theta
        solution = RlsSolution(theta_hat=theta, hat_matrix_trace=trace,
                               residual_norm2=float(residual @ residual))
        return solution.sure_value(sigma2), sigma2, solution

    def objective(self, x):
        try:
            value, _, _ = self.evaluate(self.configs(x))
        except (KrilcError, linalg.LinAlgError, FloatingPointError, ValueError):
            return np.inf
        return value if np.isfinite(value) else np.inf

    def starting_points(self, rng, warm_start):
        lower, upper = self._bounds()
        points = []
        if warm_start:
            points.append(self.transform(warm_start))
        default = []
        for family, _ in self.blocks:
            default += [self.log_c_ref, 0.0]
            if family is KernelFamily.DC:
                default.append(0.5)
        points.append(np.array(default))
        while len(points) < self.domain.starts:
            point = []
            for family, _ in self.blocks:
                point += [self.log_c_ref + rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)]
                if family is KernelFamily.DC:
                    point.append(rng.uniform(-1.0, 1.0))
            points.append(np.clip(np.array(point), lower, upper))
        return points


def _normalise_blocks(kernel_family, n):
    if isinstance(kernel_family, (str, KernelFamily)):
        return ((KernelFamily(kernel_family), n),)
    blocks = tuple((KernelFamily(family), int(size)) for family, size in kernel_family)
    if sum(size for _, size in blocks) != n:
        raise ValueError(f"kernel blocks cover {sum(size for _, size in blocks)} parameters, Phi has {n}")
    return blocks


def minimize_sure(Y, Phi, kernel_family, eta_domain=None, *, seed=0, warm_start=None, sigma2=None):
    """
    Tune kernel hyper-parameters and noise variance by minimising SURE.

    `kernel_family` is either one family (a single kernel over all n
    parameters) or a sequence of (family, size) blocks laid out block
    diagonally in regressor order. Multi-start Nelder-Mead in the transformed
    box; deterministic for a given seed. When `sigma2` is given it is held
    fixed instead of being re-estimated.

    Returns SureResult(eta_hat=tuple of KernelConfig per block, sigma2_hat, solution).
    """
    Y = np.asarray(Y, dtype=float).reshape(-1)
    Phi = np.asarray(Phi, dtype=float)
    if Y.shape[0] < 1:
        raise IllConditionedError("SURE tuning needs at least one observation")

    domain = eta_domain or HyperparameterDomain()
    search = _SureSearch(Y, Phi, _normalise_blocks(kernel_family, Phi.shape[1]), domain, sigma2)
    rng = np.random.default_rng(seed)

    best_x, best_value = None, np.inf
    for x0 in search.starting_points(rng, warm_start):
        result = minimize(
            search.objective,
            x0,
            method='Nelder-Mead',
            options={'maxfev': search.domain.max_evaluations, 'fatol': search.FATOL, 'xatol': search.XATOL},
        )
        if np.isfinite(result.fun) and result.fun < best_value:
            best_x, best_value = result.x, float(result.fun)

    if best_x is None:
        raise OptimizationFailure("no SURE start produced a finite objective")

    configs = search.configs(best_x)
    _, sigma2_hat, solution = search.evaluate(configs)
    logger.debug(f"SURE optimum {best_value:.6g} at sigma2={sigma2_hat:.4g}")
    return SureResult(eta_hat=configs, sigma2_hat=sigma2_hat, solution=solution)


def profiled_sure(Y, Phi, configs, eta_domain=None, sigma2=None):
    """SURE value at fixed kernel configs with the noise variance profiled (or fixed)."""
    Y = np.asarray(Y, dtype=float).reshape(-1)
    Phi = np.asarray(Phi, dtype=float)
    blocks = tuple((config.family, int(config.n)) for config in configs)
    search = _SureSearch(Y, Phi, blocks, eta_domain or HyperparameterDomain(), sigma2)
    value, sigma2_hat, _ = search.evaluate(tuple(configs))
    return value, sigma2_hat
