"""
Normalized fit scores in percent: 100 means exact, 0 means no better than
the mean of the target.
"""
import numpy as np

from backend.exceptions import UndefinedFitError


def _normalized_fit(target, estimate, what):
    target = np.asarray(target, dtype=float).reshape(-1)
    estimate = np.asarray(estimate, dtype=float).reshape(-1)
    if target.shape != estimate.shape:
        raise ValueError(f"{what}: target has {target.size} entries, estimate has {estimate.size}")

    spread = float(np.sum((target - target.mean()) ** 2))
    if spread <= 0.0:
        raise UndefinedFitError(f"{what} is undefined for a constant target")
    return 100.0 * (1.0 - np.sqrt(float(np.sum((target - estimate) ** 2)) / spread))


def tracking_fit(y_d, y_j):
    return _normalized_fit(y_d, y_j, 'tracking fit')


def model_fit(theta_true, theta_hat):
    return _normalized_fit(theta_true, theta_hat, 'model fit')


def guarded(fit, *args):
    """fit(*args), or None where the fit is undefined."""
    try:
        return fit(*args)
    except UndefinedFitError:
        return None


def box_statistics(values):
    """Mean, median, quartiles and range of the defined values; None when there are none."""
    values = np.asarray([value for value in values if value is not None], dtype=float)
    if not values.size:
        return None
    q1, median, q3 = np.percentile(values, [25, 50, 75])
    return {
        'count': int(values.size),
        'mean': float(values.mean()),
        'median': float(median),
        'q1': float(q1),
        'q3': float(q3),
        'min': float(values.min()),
        'max': float(values.max()),
    }
