"""
Monte Carlo campaigns: independent runs over a worker pool, aggregated into
per-iteration fit distributions (box-plot ready).
"""
import logging
from dataclasses import dataclass, field

from joblib import Parallel, delayed

from backend.exceptions import KrilcError
from .config import CAMPAIGN_METHODS, default_parallelism
from .identification_runs import run_identification
from .metrics import box_statistics
from .runner import RunRecord, run_krilc

logger = logging.getLogger(__name__)


def run_experiment(config):
    if config.kind == 'identification':
        return run_identification(config)
    return run_krilc(config)


def _run_safely(config):
    """Campaign worker: a failed run becomes a failed record instead of stopping the pool."""
    try:
        record = run_experiment(config)
    except (KrilcError, ArithmeticError, ValueError, RuntimeError) as e:
        logger.error(f"{config.method} run seed={config.seed} plant_seed={config.plant_seed} failed: {e}")
        return RunRecord(config=config.to_dict(), kind=config.kind, method=config.method,
                         seed=config.seed, status='failed', error=str(e))
    return record


@dataclass
class CampaignSummary:
    runs: int = 0
    failed: int = 0
    tracking: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)

    def to_dict(self):
        return {'runs': self.runs, 'failed': self.failed, 'tracking': self.tracking, 'model': self.model}


def aggregate(records):
    """
    Per method, box statistics of the tracking fits at every iteration; per
    estimator, box statistics of the average model fits at every checkpoint.
    """
    summary = CampaignSummary(runs=len(records))
    by_method = {}
    by_estimator = {}
    for record in records:
        if record.status != 'completed':
            summary.failed += 1
            continue
        if record.tracking_fits:
            by_method.setdefault(record.method, []).append(record.tracking_fits)
        for estimator, values in record.average_model_fits.items():
            per_iteration = by_estimator.setdefault(estimator, {})
            for j, value in zip(record.fit_iterations, values):
                per_iteration.setdefault(j, []).append(value)

    for method, series in by_method.items():
        length = max(len(fits) for fits in series)
        summary.tracking[method] = [
            box_statistics([fits[j] for fits in series if j < len(fits)]) for j in range(length)
        ]
    for estimator, per_iteration in by_estimator.items():
        summary.model[estimator] = {j: box_statistics(values) for j, values in sorted(per_iteration.items())}
    return summary


def run_campaign(configs, parallelism=None):
    """
    Run every config (processes when parallelism > 1) and aggregate; returns
    (summary, records). The worker count defaults to KRILC['PARALLELISM'].
    """
    configs = list(configs)
    parallelism = parallelism or default_parallelism()
    if not configs:
        return CampaignSummary(), []
    # worker processes run their fits serially
    inner = 1 if parallelism > 1 else None
    configs = [config.with_overrides(parallelism=inner or config.workers) for config in configs]

    logger.info(f"Campaign of {len(configs)} runs started (parallelism={parallelism})")
    records = Parallel(n_jobs=parallelism)(delayed(_run_safely)(config) for config in configs)
    summary = aggregate(records)
    logger.info(f"Campaign finished: {summary.runs - summary.failed} completed, {summary.failed} failed")
    return summary, records


def campaign_configs(base, systems, methods=None):
    """One config per (plant seed, method) on top of a base config."""
    if systems < 1:
        return []
    methods = methods or CAMPAIGN_METHODS.get(base.label) or (base.method,)
    configs = []
    for index in range(systems):
        for method in methods:
            configs.append(base.with_overrides(
                plant_seed=base.plant_seed + index,
                seed=base.seed + index,
                method=method,
            ))
    return configs
