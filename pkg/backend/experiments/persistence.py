"""
Run directories and the run registry.

    <RUNS_DIR>/<label>-<method>-seed<seed>-<config hash>/
        config.json       validated experiment config
        traces.csv        j, t, u, y, v, e
        controller.csv    j, t, theta_norm, lambda1, lambda2, kkt_residual (KRILC runs)
        model_fits.csv    estimator, j, t, fit (RLS and LS estimates of every run that fits models)
        record.json       RunRecord summary

CSV floats use 17 significant digits; JSON floats use the shortest repr that
reads back to the same double. Both reload bit-exactly.
"""
import csv
import json
import logging
from pathlib import Path

import numpy as np
from django.conf import settings

from backend.exceptions import ConfigurationError
from plant.references import reference_trajectory
from .metrics import guarded, tracking_fit

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ['j', 't', 'u', 'y', 'v', 'e']
CONTROLLER_COLUMNS = ['j', 't', 'theta_norm', 'lambda1', 'lambda2', 'kkt_residual']
MODEL_FIT_COLUMNS = ['estimator', 'j', 't', 'fit']


def _number(value):
    if value is None:
        return ''
    return format(float(value), '.17g')


def _json_default(value):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, (np.ndarray, tuple)):
        return list(value)
    return str(value)


def runs_dir():
    return Path(settings.KRILC['RUNS_DIR'])


def run_directory_name(record):
    label = record.config.get('label') or record.kind
    return f"{label}-{record.method}-seed{record.seed}-{record.config_hash or 'nohash'}"


def write_traces(path, store):
    with open(path, 'w', newline='') as handle:
        writer = csv.writer(handle)
        writer.writerow(TRACE_COLUMNS)
        for j in store.iterations():
            for t in range(1, store.horizon + 1):
                writer.writerow([j, t] + [_number(getattr(store, signal)[j, t - 1]) for signal in store.SIGNALS])


def write_controller_trace(path, rows):
    with open(path, 'w', newline='') as handle:
        writer = csv.writer(handle)
        writer.writerow(CONTROLLER_COLUMNS)
        for j, t, *values in rows:
            writer.writerow([j, t] + [_number(value) for value in values])


def write_model_fits(path, record):
    # control rows start at design time 1, whose fit is for theta_m(2)
    first = 2 if record.kind == 'control' else 1
    with open(path, 'w', newline='') as handle:
        writer = csv.writer(handle)
        writer.writerow(MODEL_FIT_COLUMNS)
        for estimator, rows in record.model_fits.items():
            for j, row in zip(record.fit_iterations, rows):
                for t, fit in enumerate(row, start=first):
                    if fit is not None:
                        writer.writerow([estimator, j, t, _number(fit)])


def write_run(record, out_dir=None):
    """Write every artefact of a run; returns the run directory."""
    base = Path(out_dir) if out_dir else runs_dir()
    run_dir = base / run_directory_name(record)
    run_dir.mkdir(parents=True, exist_ok=True)

    (run_dir / 'config.json').write_text(json.dumps(record.config, indent=2, default=_json_default))
    if record.store is not None:
        write_traces(run_dir / 'traces.csv', record.store)
    if record.controller_trace:
        write_controller_trace(run_dir / 'controller.csv', record.controller_trace)
    if record.model_fits:
        write_model_fits(run_dir / 'model_fits.csv', record)
    (run_dir / 'record.json').write_text(json.dumps(record.to_dict(), indent=2, default=_json_default))

    logger.info(f"Run written to {run_dir}")
    return run_dir


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except OSError as e:
        raise ConfigurationError(f"Cannot read {path}: {e}")
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path} is not valid JSON: {e}")


def load_traces(run_dir):
    """Signals as {name: array (iterations, horizon)} plus the iteration numbers."""
    path = Path(run_dir) / 'traces.csv'
    try:
        with open(path, newline='') as handle:
            rows = list(csv.DictReader(handle))
    except OSError as e:
        raise ConfigurationError(f"Cannot read {path}: {e}")
    if not rows:
        raise ConfigurationError(f"{path} holds no samples")

    iterations = sorted({int(row['j']) for row in rows})
    horizon = max(int(row['t']) for row in rows)
    first = iterations[0]
    signals = {name: np.zeros((len(iterations), horizon)) for name in TRACE_COLUMNS[2:]}
    for row in rows:
        index, t = int(row['j']) - first, int(row['t'])
        for name in signals:
            signals[name][index, t - 1] = float(row[name])
    return iterations, signals


def recompute_fits(run_dir):
    """Tracking fits per stored iteration from the persisted traces and config."""
    config = read_json(Path(run_dir) / 'config.json')
    iterations, signals = load_traces(run_dir)
    horizon = signals['y'].shape[1]
    y_d = reference_trajectory(config['reference'], horizon)
    return [guarded(tracking_fit, y_d[1:], signals['y'][index, 1:]) for index in range(len(iterations))]


def recompute_model_averages(run_dir):
    """{estimator: [average fit per checkpoint]} from model_fits.csv."""
    path = Path(run_dir) / 'model_fits.csv'
    try:
        with open(path, newline='') as handle:
            rows = list(csv.DictReader(handle))
    except OSError as e:
        raise ConfigurationError(f"Cannot read {path}: {e}")

    grouped = {}
    for row in rows:
        grouped.setdefault(row['estimator'], {}).setdefault(int(row['j']), []).append(float(row['fit']))
    return {
        estimator: {j: float(np.mean(values)) for j, values in by_iteration.items()}
        for estimator, by_iteration in grouped.items()
    }


def register_run(record, run_dir=None):
    """Best-effort registry row; a database failure never fails the run."""
    from .models import ExperimentRun

    if not settings.KRILC['REGISTER_RUNS']:
        return None
    bound = record.bound or {}
    try:
        return ExperimentRun.objects.create(
            kind=record.kind,
            method=record.method,
            preset=record.config.get('label', ''),
            seed=record.seed,
            config_hash=record.config_hash or '',
            status=record.status,
            error_message=record.error,
            final_tracking_fit=record.final_tracking_fit,
            average_model_fit=record.final_model_fit('RLS'),
            average_model_fit_ls=record.final_model_fit('LS'),
            max_abs_input=record.max_abs_input,
            max_theta_norm=record.max_theta_norm,
            fallback_count=record.fallbacks,
            condition_lhs=bound.get('condition_lhs'),
            ultimate_bound=bound.get('ultimate_bound'),
            tail_error_max=record.tail_error_max,
            wall_time_s=record.wall_time_s,
            output_dir=str(run_dir or ''),
            config=json.loads(json.dumps(record.config, default=_json_default)),
        )
    except Exception as e:
        logger.error(f"Could not register run {record.method} seed={record.seed}: {str(e)}")
        return None
