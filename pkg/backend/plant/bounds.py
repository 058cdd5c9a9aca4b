"""
Gain condition and ultimate tracking-error bound for a plant under a
norm-constrained learning controller.
"""
import logging
import math
from dataclasses import asdict, dataclass

from .systems import bibo_sums

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BoundReport:
    d_g_u: float
    d_g_v: float
    d_u: float
    d_c: float
    d_v: float
    d_r: float
    n_b: int
    n_c: int
    condition_lhs: float
    condition_holds: bool
    ultimate_bound: float = None

    def to_dict(self):
        return asdict(self)


def condition_lhs(d_g_u, d_c, n_b, n_c):
    return d_g_u * d_c * math.sqrt(n_b * n_c * (n_c + 1) / 2)


def ultimate_bound(d_g_u, d_g_v, d_u, d_c, d_v, d_r, n_b, n_c):
    """Limit superior of |e_j(t+1)|; None when the gain condition fails."""
    lhs = condition_lhs(d_g_u, d_c, n_b, n_c)
    if not lhs < 1.0:
        return None
    disturbance = math.sqrt(n_b) * d_g_u * d_u + d_g_v * d_v
    amplification = 2.0 * d_g_u * d_c * math.sqrt(n_b * n_c * (n_c ** 2 - 1) / 2) + 1.0
    return (disturbance * amplification + d_r) / (1.0 - lhs)


def report_from_sums(d_g_u, d_g_v, d_c, d_u, d_v, d_r, n_b, n_c):
    lhs = condition_lhs(d_g_u, d_c, n_b, n_c)
    holds = lhs < 1.0
    return BoundReport(
        d_g_u=d_g_u,
        d_g_v=d_g_v,
        d_u=d_u,
        d_c=d_c,
        d_v=d_v,
        d_r=d_r,
        n_b=n_b,
        n_c=n_c,
        condition_lhs=lhs,
        condition_holds=holds,
        ultimate_bound=ultimate_bound(d_g_u, d_g_v, d_u, d_c, d_v, d_r, n_b, n_c) if holds else None,
    )


def bound_report(ss, d_c, d_u, d_v, d_r, n_b, n_c, table=None):
    """Evaluate the gain condition and, when it holds, the ultimate bound for a plant."""
    d_g_u, d_g_v = bibo_sums(ss, table)
    report = report_from_sums(d_g_u, d_g_v, d_c, d_u, d_v, d_r, n_b, n_c)
    if not report.condition_holds:
        logger.info(f"Gain condition fails: lhs={report.condition_lhs:.4g} (d_g_u={d_g_u:.4g}, d_c={d_c})")
    return report
