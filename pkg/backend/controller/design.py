"""
Learning-controller design at one (iteration, time) pair.

The controller law is u_j(t) = u_{j-1}(t) + E_{j-1}(t+1)^T theta_c with
E_{j-1}(t+1) = [e_{j-1}(t+1), ..., e_{j-n_c}(t+1)]. Substituting it into the
one-step predictor of the estimated model gives the scalar regression

    y_c = phi_c^T theta_c + v_c,   phi_c = b1_hat * E

which is solved as a regularized least-squares problem under the two
constraints |u_{j-1}(t) + E^T theta_c| <= d_u and ||theta_c|| <= d_c.

The constrained problem is solved through its Lagrange dual. For duals
(l1, l2) the stationary point is

    theta(l) = (phi phi^T + s2 P^-1 + l1 E E^T + l2 I)^-1 (phi y_c - l1 u_prev E)

evaluated inverse-free as theta = S (S A S + s2 I)^-1 S r with S the PSD
square root of P, so singular kernels are handled.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.optimize import brentq, minimize
from scipy.special import expit, logit

from backend.exceptions import KrilcError, OptimizationFailure, SequencingError, SingularityError
from identification.kernels import KernelConfig, KernelFamily, KernelMatrix, build_kernel

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ControllerSettings:
    n_c: int = 10
    d_u: float = 15.0
    d_c: float = 0.3
    family: KernelFamily = KernelFamily.DI
    starts: int = 3
    max_evaluations: int = 200


@dataclass(frozen=True)
class ControllerRegression:
    y_c: float
    phi_c: np.ndarray
    E: np.ndarray
    u_prev: float
    b1_hat: float
    d_u: float
    d_c: float
    sigma_c2: float = None
    sigma2_floor: float = None

    @property
    def n_c(self):
        return self.E.shape[0]

    def with_sigma(self, sigma_c2):
        return ControllerRegression(
            y_c=self.y_c, phi_c=self.phi_c, E=self.E, u_prev=self.u_prev, b1_hat=self.b1_hat,
            d_u=self.d_u, d_c=self.d_c, sigma_c2=sigma_c2, sigma2_floor=self.sigma2_floor,
        )

    @property
    def degenerate(self):
        return (
            self.d_c <= 0.0
            or abs(self.b1_hat) < ControllerDesign.B1_GATE
            or not np.any(self.phi_c)
        )


@dataclass(frozen=True)
class ControllerEstimate:
    theta_c_hat: np.ndarray
    lambda1: float
    lambda2: float
    eta_c_hat: KernelConfig = None
    sigma_c2_hat: float = None
    kkt_residual: float = 0.0
    u_new: float = 0.0
    converged: bool = True
    hat_value: float = 0.0
    primal_objective: float = 0.0
    dual_objective: float = 0.0
    clipped: bool = False
    source: str = 'krilc'

    @property
    def theta_norm(self):
        return float(np.linalg.norm(self.theta_c_hat))


class ControllerDesign:
    """Tolerance ledger for the constrained controller solve."""

    B1_GATE = 1e-8
    LAMBDA_MIN = 1e-8
    LAMBDA_MAX = 1e6
    KKT_TOL = 1e-5
    MAX_SWEEPS = 200
    SLACK = 1e-9
    RIDGE_FLOOR = 1e-12
    NULL_RTOL = 1e-10
    SIGMA2_DECADES = 6.0
    C_DECADES = 8.0
    LOGIT_SPAN = 20.0
    ROOT_XTOL = 1e-12
    ROOT_MAXITER = 200


def build_controller_regression(store, model_estimate, j, t, n_c, d_u, d_c):
    """
    Target y_c = y_d(t+1) - phibar_j(t)^T theta_m(t+1) - b1_hat u_{j-1}(t) with

        phibar_j(t) = [0, u_j(t-1), ..., u_j(t-n_b+1), -y_j(t), ..., -y_j(t-n_a+1)]

    The current iteration must have y_j(1..t) and u_j(1..t-1) in the store.
    """
    if model_estimate is None:
        raise SequencingError(f"model estimate for t={t + 1} is missing at iteration {j}")
    if model_estimate.t != t + 1:
        raise SequencingError(f"controller at t={t} needs the model at t={t + 1}, got t={model_estimate.t}")

    n_b = model_estimate.theta_b_hat.shape[0]
    n_a = model_estimate.theta_a_hat.shape[0]
    phi_bar = np.concatenate([
        [0.0],
        store.window('u', j, t - 1, n_b - 1),
        -store.window('y', j, t, n_a),
    ])
    b1_hat = model_estimate.b1_hat
    u_prev = store.value('u', j - 1, t)
    y_c = float(store.y_d[t] - phi_bar @ model_estimate.theta - b1_hat * u_prev)
    E = store.error_stack(j - 1, t + 1, n_c)
    return ControllerRegression(
        y_c=y_c,
        phi_c=b1_hat * E,
        E=E,
        u_prev=u_prev,
        b1_hat=b1_hat,
        d_u=d_u,
        d_c=d_c,
        sigma2_floor=model_estimate.sigma2_hat,
    )


def _root(function, low, high, xtol):
    """Bracketed root; an unconverged search is an OptimizationFailure."""
    try:
        root, result = brentq(function, low, high, xtol=xtol, maxiter=ControllerDesign.ROOT_MAXITER,
                              full_output=True, disp=False)
    except (RuntimeError, ValueError) as e:
        raise OptimizationFailure(f"dual root search on [{low:.3g}, {high:.3g}] failed: {e}") from e
    if not result.converged or not np.isfinite(root):
        raise OptimizationFailure(
            f"dual root search on [{low:.3g}, {high:.3g}] stopped after {result.iterations} iterations "
            f"({result.flag})"
        )
    return root


class DualSystem:
    """
    Stationary points, dual function and KKT residual of one controller
    regression at fixed kernel and noise variance. `P=None` drops the
    regularizer (least-squares variant); a ridge floor keeps it solvable.
    """

    def __init__(self, reg, P=None, sigma_c2=None):
        self.reg = reg
        n = reg.n_c
        if P is None:
            self.least_squares = True
            self.S = np.eye(n)
            self.sigma2 = ControllerDesign.RIDGE_FLOOR
        else:
            values = P.values if isinstance(P, KernelMatrix) else np.asarray(P, dtype=float)
            w, Q = linalg.eigh(0.5 * (values + values.T))
            self.least_squares = False
            self.S = (Q * np.sqrt(np.clip(w, 0.0, None))) @ Q.T
            self.sigma2 = reg.sigma_c2 if sigma_c2 is None else sigma_c2
            if self.sigma2 is None or self.sigma2 < 0:
                raise ValueError(f"controller noise variance must be nonnegative, got {self.sigma2}")
        self.s_phi = self.S @ reg.phi_c
        self.s_E = self.S @ reg.E
        self.P2 = self.S @ self.S

    def _system(self, lambda1, lambda2):
        K0 = np.outer(self.s_phi, self.s_phi) + lambda1 * np.outer(self.s_E, self.s_E) + lambda2 * self.P2
        rhs = self.s_phi * self.reg.y_c - lambda1 * self.reg.u_prev * self.s_E
        return K0, rhs

    def _solve(self, K0, rhs):
        w, V = linalg.eigh(K0)
        w = np.clip(w, 0.0, None)
        denominator = w + self.sigma2
        inverse = np.divide(1.0, denominator, out=np.zeros_like(w), where=denominator > 0)
        if self.least_squares or self.sigma2 == 0:
            inverse[w <= ControllerDesign.NULL_RTOL * max(w.max(initial=0.0), np.finfo(float).tiny)] = 0.0
        solution = V @ (inverse * (V.T @ rhs))
        if not np.all(np.isfinite(solution)):
            raise SingularityError("controller stationarity system is singular")
        return solution

    def stationary(self, lambda1, lambda2):
        """(theta, w) with theta = S w."""
        K0, rhs = self._system(lambda1, lambda2)
        w = self._solve(K0, rhs)
        return self.S @ w, w

    def theta(self, lambda1, lambda2):
        return self.stationary(lambda1, lambda2)[0]

    def constraint_values(self, theta):
        """Squared-form constraint values; feasible when both are <= 0."""
        u_new = self.reg.u_prev + self.reg.E @ theta
        return u_new ** 2 - self.reg.d_u ** 2, theta @ theta - self.reg.d_c ** 2

    def feasible(self, theta, slack=ControllerDesign.SLACK):
        u_new = self.reg.u_prev + self.reg.E @ theta
        return abs(u_new) <= self.reg.d_u + slack and np.linalg.norm(theta) <= self.reg.d_c + slack

    def primal_objective(self, theta, w=None):
        residual = self.reg.y_c - self.reg.phi_c @ theta
        penalty = 0.0 if self.least_squares else self.sigma2 * float(w @ w)
        return float(residual ** 2 + penalty)

    def dual_objective(self, lambda1, lambda2):
        theta, w = self.stationary(lambda1, lambda2)
        c1, c2 = self.constraint_values(theta)
        return self.primal_objective(theta, w) + lambda1 * c1 + lambda2 * c2

    def hat_value(self, lambda1, lambda2):
        """phi^T (phi phi^T + s2 P^-1 + l1 E E^T + l2 I)^-1 phi, a scalar in [0, 1]."""
        K0, _ = self._system(lambda1, lambda2)
        return float(np.clip(self.s_phi @ self._solve(K0, self.s_phi), 0.0, 1.0))

    def kkt_residual(self, lambda1, lambda2, theta=None, w=None):
        if theta is None:
            theta, w = self.stationary(lambda1, lambda2)
        K0, rhs = self._system(lambda1, lambda2)
        if self.least_squares:
            stationarity = K0 @ theta - rhs
        else:
            stationarity = K0 @ w + self.sigma2 * w - rhs
        u_new = self.reg.u_prev + self.reg.E @ theta
        c1, c2 = self.constraint_values(theta)
        return float(max(
            max(0.0, abs(u_new) - self.reg.d_u),
            max(0.0, np.linalg.norm(theta) - self.reg.d_c),
            max(0.0, -lambda1),
            max(0.0, -lambda2),
            np.max(np.abs(stationarity)) if stationarity.size else 0.0,
            abs(lambda1 * c1),
            abs(lambda2 * c2),
        ))

    def _coordinate(self, index, lambdas):
        """Root of the dual gradient along one coordinate, projected onto lambda >= 0."""

        def gradient(value):
            trial = list(lambdas)
            trial[index] = value
            return self.constraint_values(self.theta(*trial))[index]

        if gradient(0.0) <= 0.0:
            return 0.0
        low, high = ControllerDesign.LAMBDA_MIN, ControllerDesign.LAMBDA_MAX
        if gradient(low) <= 0.0:
            return _root(gradient, 0.0, low, xtol=low * ControllerDesign.ROOT_XTOL)
        if gradient(high) > 0.0:
            return high
        exponent = _root(lambda s: gradient(10.0 ** s), np.log10(low), np.log10(high),
                         xtol=ControllerDesign.ROOT_XTOL)
        return 10.0 ** exponent

    def maximize(self):
        """Dual maximizer (l1, l2) and whether the KKT tolerance was reached."""
        if self.feasible(self.theta(0.0, 0.0)):
            return 0.0, 0.0, True

        lambdas = [0.0, 0.0]
        for _ in range(ControllerDesign.MAX_SWEEPS):
            for index in (0, 1):
                lambdas[index] = self._coordinate(index, lambdas)
            if self.kkt_residual(*lambdas) <= ControllerDesign.KKT_TOL:
                return lambdas[0], lambdas[1], True
        return lambdas[0], lambdas[1], False


def dual_theta(reg, lambda1, lambda2, P_c, sigma_c2=None):
    if lambda1 < 0 or lambda2 < 0:
        raise ValueError(f"dual variables must be nonnegative, got ({lambda1}, {lambda2})")
    return DualSystem(reg, P_c, sigma_c2).theta(lambda1, lambda2)


def maximize_dual(reg, P_c, sigma_c2=None):
    lambda1, lambda2, _ = DualSystem(reg, P_c, sigma_c2).maximize()
    return lambda1, lambda2


def _lower_bound_config(family, n_c):
    family = KernelFamily(family)
    return KernelConfig(family, n_c, (0.0,) * family.n_eta)


def _sigma2_floor(reg):
    floor = reg.sigma2_floor if reg.sigma2_floor is not None else 0.0
    return max(floor, 1e-10)


class _ControllerSureSearch:
    """Adapted SURE over (eta_c, sigma_c2) in a transformed box."""

    def __init__(self, reg, family):
        self.reg = reg
        self.family = KernelFamily(family)
        self.log_sigma_low = np.log10(_sigma2_floor(reg))
        scale = max(reg.y_c ** 2, _sigma2_floor(reg))
        self.log_c_ref = np.log10(scale / max(float(reg.phi_c @ reg.phi_c), np.finfo(float).tiny))

    def bounds(self):
        lower = [self.log_c_ref - ControllerDesign.C_DECADES, -ControllerDesign.LOGIT_SPAN]
        upper = [self.log_c_ref + ControllerDesign.C_DECADES, ControllerDesign.LOGIT_SPAN]
        if self.family is KernelFamily.DC:
            lower.append(-1.0)
            upper.append(1.0)
        lower.append(self.log_sigma_low)
        upper.append(self.log_sigma_low + ControllerDesign.SIGMA2_DECADES)
        return np.array(lower), np.array(upper)

    def decode(self, x):
        lower, upper = self.bounds()
        x = np.clip(x, lower, upper)
        eta = [10.0 ** x[0], min(float(expit(x[1])), np.nextafter(1.0, 0.0))]
        if self.family is KernelFamily.DC:
            eta.append(float(x[2]))
        return KernelConfig(self.family, self.reg.n_c, tuple(eta)), 10.0 ** x[-1]

    def encode(self, config, sigma_c2):
        x = [np.log10(max(config.c, 1e-300)), float(logit(min(max(config.alpha, 1e-12), 1 - 1e-12)))]
        if self.family is KernelFamily.DC:
            x.append(config.beta)
        x.append(np.log10(max(sigma_c2, 1e-300)))
        lower, upper = self.bounds()
        return np.clip(np.array(x), lower, upper)

    def evaluate(self, config, sigma_c2):
        system = DualSystem(self.reg, build_kernel(config), sigma_c2)
        lambda1, lambda2, _ = system.maximize()
        theta = system.theta(lambda1, lambda2)
        residual = self.reg.y_c - self.reg.phi_c @ theta
        return float(residual ** 2 + 2.0 * sigma_c2 * system.hat_value(lambda1, lambda2))

    def objective(self, x):
        try:
            value = self.evaluate(*self.decode(x))
        except (KrilcError, linalg.LinAlgError, ValueError, ArithmeticError, RuntimeError):
            return np.inf
        return value if np.isfinite(value) else np.inf

    def starts(self, rng, count, warm_start):
        points = []
        if warm_start is not None:
            points.append(self.encode(*warm_start))
        default = [self.log_c_ref, 0.0] + ([0.5] if self.family is KernelFamily.DC else []) + [self.log_sigma_low]
        points.append(np.array(default))
        lower, upper = self.bounds()
        while len(points) < count:
            point = [self.log_c_ref + rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)]
            if self.family is KernelFamily.DC:
                point.append(rng.uniform(-1.0, 1.0))
            point.append(self.log_sigma_low + rng.uniform(0.0, 3.0))
            points.append(np.clip(np.array(point), lower, upper))
        return points


def sure_controller(reg, kernel_family=KernelFamily.DI, eta_domain=None, *, seed=0, warm_start=None):
    """
    Tune (eta_c, sigma_c2) by minimising (y_c - phi_c^T theta_c)^2 + 2 sigma_c2 H_c
    with the duals re-maximised for every candidate. Returns (eta_c_hat, sigma_c2_hat).

    `eta_domain` supplies the search budget (starts, max_evaluations); the
    variance box starts at the model-estimation noise variance carried by the
    regression.
    """
    if reg.degenerate:
        return _lower_bound_config(kernel_family, reg.n_c), _sigma2_floor(reg)

    budget = eta_domain or ControllerSettings()
    search = _ControllerSureSearch(reg, kernel_family)
    rng = np.random.default_rng(seed)

    best_x, best_value = None, np.inf
    for x0 in search.starts(rng, budget.starts, warm_start):
        result = minimize(search.objective, x0, method='Nelder-Mead',
                          options={'maxfev': budget.max_evaluations, 'fatol': 1e-8, 'xatol': 1e-6})
        if np.isfinite(result.fun) and result.fun < best_value:
            best_x, best_value = result.x, float(result.fun)

    if best_x is None:
        raise OptimizationFailure("no controller SURE start produced a finite objective")
    return search.decode(best_x)


def _frozen(reg, eta_c_hat=None, sigma_c2=None, source='frozen'):
    u_new = float(np.clip(reg.u_prev, -reg.d_u, reg.d_u))
    if u_new != reg.u_prev:
        logger.warning(f"Previous input {reg.u_prev:.6g} outside +-{reg.d_u}; holding it at the bound")
    return ControllerEstimate(
        theta_c_hat=np.zeros(reg.n_c),
        lambda1=0.0,
        lambda2=0.0,
        eta_c_hat=eta_c_hat,
        sigma_c2_hat=sigma_c2,
        kkt_residual=0.0,
        u_new=u_new,
        primal_objective=float(reg.y_c ** 2),
        dual_objective=float(reg.y_c ** 2),
        clipped=u_new != reg.u_prev,
        source=source,
    )


def _input_reachable(reg):
    """Whether some ||theta|| <= d_c brings the input strictly inside the box."""
    if abs(reg.u_prev) < reg.d_u:
        return True
    return reg.d_c * np.linalg.norm(reg.E) > abs(reg.u_prev) - reg.d_u


def _restore_feasibility(reg, theta):
    """Shrink theta within the KKT tolerance until both constraints hold exactly."""
    norm = np.linalg.norm(theta)
    if norm > reg.d_c:
        theta = theta * (reg.d_c / norm)
    step = float(reg.E @ theta)
    u_new = reg.u_prev + step
    if abs(u_new) > reg.d_u and abs(reg.u_prev) <= reg.d_u:
        theta = theta * ((np.sign(u_new) * reg.d_u - reg.u_prev) / step)
    return theta


def _solve(reg, P, sigma_c2, eta_c_hat, source):
    if reg.degenerate:
        return _frozen(reg, eta_c_hat, sigma_c2, source='frozen')
    if not _input_reachable(reg):
        logger.warning(f"No admissible controller moves u={reg.u_prev:.6g} inside +-{reg.d_u}")
        return _frozen(reg, eta_c_hat, sigma_c2, source='frozen')

    system = DualSystem(reg, P, sigma_c2)
    lambda1, lambda2, converged = system.maximize()
    theta, w = system.stationary(lambda1, lambda2)
    kkt = system.kkt_residual(lambda1, lambda2, theta, w)
    saturated = max(lambda1, lambda2) >= ControllerDesign.LAMBDA_MAX
    if saturated or not converged:
        raise OptimizationFailure(
            f"KKT refinement stopped at residual {kkt:.3g} "
            f"(lambda=({lambda1:.4g}, {lambda2:.4g}){', saturated' if saturated else ''})"
        )

    primal = system.primal_objective(theta, w)
    dual = system.dual_objective(lambda1, lambda2)
    hat = system.hat_value(lambda1, lambda2)

    theta = _restore_feasibility(reg, theta)
    u_new = reg.u_prev + float(reg.E @ theta)
    if not system.feasible(theta):
        raise OptimizationFailure(f"designed input {u_new:.6g} or gain norm {np.linalg.norm(theta):.6g} "
                                  f"violates +-{reg.d_u} / {reg.d_c}")

    return ControllerEstimate(
        theta_c_hat=theta,
        lambda1=lambda1,
        lambda2=lambda2,
        eta_c_hat=eta_c_hat,
        sigma_c2_hat=sigma_c2,
        kkt_residual=kkt,
        u_new=u_new,
        converged=converged,
        hat_value=hat,
        primal_objective=primal,
        dual_objective=dual,
        source=source,
    )


def solve_constrained_rls(reg, eta_c_hat, sigma_c2=None):
    """Constrained RLS solution at fixed hyper-parameters, then u_new = u_prev + E^T theta."""
    sigma_c2 = reg.sigma_c2 if sigma_c2 is None else sigma_c2
    P = None if reg.degenerate else build_kernel(eta_c_hat)
    return _solve(reg, P, sigma_c2, eta_c_hat, source='krilc')


def ls_controller_variant(reg):
    """Same constrained pipeline with the regularizer removed."""
    return _solve(reg, None, None, None, source='krilc-ls')


def design_controller(reg, settings, *, seed=0, warm_start=None, least_squares=False):
    """
    Full per-(j, t) design: adapted-SURE tuning followed by the constrained
    solve. `warm_start` is a previous (eta_c_hat, sigma_c2_hat) pair, reused
    when tuning fails.
    """
    if least_squares:
        return ls_controller_variant(reg)

    try:
        eta_c_hat, sigma_c2 = sure_controller(
            reg, settings.family, settings,
            seed=seed, warm_start=warm_start,
        )
    except OptimizationFailure as e:
        if warm_start is None:
            raise
        logger.warning(f"Controller tuning failed ({e}); reusing previous hyper-parameters")
        eta_c_hat, sigma_c2 = warm_start
    return solve_constrained_rls(reg, eta_c_hat, sigma_c2)
