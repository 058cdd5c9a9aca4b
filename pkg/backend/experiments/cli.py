"""
Command-line entry points, exposed as `python manage.py krilc <subcommand>`.

    run       one experiment from --config or --preset
    campaign  Monte Carlo over generated plants or seeds
    bound     gain condition and ultimate error bound for a plant and constraint set
    gen       write generated plants as plant files
    fit       recompute the fits of a stored run from its traces

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""
import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from backend.exceptions import ConfigurationError
from plant.bounds import bound_report
from plant.generator import AcceptanceFilter, GeneratorConfig, generate_plant
from plant.references import reference_trajectory
from plant.serializers import dump_plant
from plant.systems import to_state_space
from .campaign import campaign_configs, run_campaign, run_experiment
from .config import ExperimentConfig, load_config, preset_data, read_config_file, PRESETS
from .persistence import read_json, recompute_fits, recompute_model_averages, register_run, runs_dir, write_run
from .runner import build_plant

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def build_parser():
    parser = argparse.ArgumentParser(prog='krilc', description='Kernel-regularized ILC experiments')
    subparsers = parser.add_subparsers(dest='command', required=True)

    def experiment_arguments(sub):
        source = sub.add_mutually_exclusive_group()
        source.add_argument('--config', type=Path, help='JSON experiment config')
        source.add_argument('--preset', choices=sorted(PRESETS), help='named preset')
        sub.add_argument('--seed', type=int, help='override the experiment seed')
        sub.add_argument('--method', choices=ExperimentConfig.METHODS, help='override the method')
        sub.add_argument('--parallel', type=int, help='worker count')
        sub.add_argument('--out', type=Path, help='output directory (default: settings RUNS_DIR)')

    run = subparsers.add_parser('run', help='run a single experiment')
    experiment_arguments(run)

    campaign = subparsers.add_parser('campaign', help='Monte Carlo campaign')
    experiment_arguments(campaign)
    campaign.add_argument('--systems', type=int, default=10, help='plants (or seeds) per method')
    campaign.add_argument('--methods', nargs='+', choices=ExperimentConfig.METHODS,
                          help='methods to compare (default: the preset\'s comparison)')

    bound = subparsers.add_parser('bound', help='gain condition and ultimate bound')
    experiment_arguments(bound)

    gen = subparsers.add_parser('gen', help='emit generated plants')
    experiment_arguments(gen)
    gen.add_argument('--count', type=int, default=1, help='number of plants, seeds from --seed on')

    fit = subparsers.add_parser('fit', help='recompute fits from stored traces')
    fit.add_argument('run_dir', type=Path)
    return parser


def resolve_config(args):
    if args.config:
        data = read_config_file(args.config)
    elif args.preset:
        data = preset_data(args.preset)
    else:
        raise ConfigurationError("Either --config or --preset is required")

    config = load_config(data)
    return config.with_overrides(seed=args.seed, method=args.method, parallelism=args.parallel)


def _print(payload):
    print(json.dumps(payload, indent=2, default=str))


def command_run(args):
    config = resolve_config(args)
    record = run_experiment(config)
    run_dir = write_run(record, args.out)
    register_run(record, run_dir)
    _print({
        'run_dir': str(run_dir),
        'final_tracking_fit': record.final_tracking_fit,
        'final_model_fits': {name: record.final_model_fit(name) for name in record.average_model_fits},
        'max_abs_input': record.max_abs_input,
        'max_theta_norm': record.max_theta_norm,
        'fallbacks': record.fallbacks,
    })
    return EXIT_OK


def command_campaign(args):
    config = resolve_config(args)
    configs = campaign_configs(config, args.systems, args.methods)
    summary, records = run_campaign(configs, parallelism=config.parallelism)

    out = args.out or runs_dir()
    for record in records:
        run_dir = write_run(record, out) if record.status == 'completed' else None
        register_run(record, run_dir)

    out.mkdir(parents=True, exist_ok=True)
    summary_path = out / f"campaign-{config.label or config.kind}-{len(configs)}runs.json"
    summary_path.write_text(json.dumps(summary.to_dict(), indent=2, default=str))
    _print({'summary': str(summary_path), 'runs': summary.runs, 'failed': summary.failed})
    return EXIT_OK if summary.failed == 0 else EXIT_RUNTIME


def command_bound(args):
    config = resolve_config(args)
    if config.d_v is None:
        raise ConfigurationError("The bound needs a finite noise bound d_v")
    horizon = config.N_d + 1
    model = build_plant(config, horizon)
    d_r = float(np.max(np.abs(reference_trajectory(config.reference, horizon))))
    report = bound_report(to_state_space(model), config.d_c, config.d_u, config.d_v, d_r, config.n_b, config.n_c)
    _print(report.to_dict())
    return EXIT_OK


def command_gen(args):
    config = resolve_config(args)
    out = args.out or runs_dir() / 'plants'
    written = []
    for seed in range(config.plant_seed, config.plant_seed + args.count):
        plant = generate_plant(GeneratorConfig(
            horizon=config.N_d + 1,
            order=config.plant_order,
            radius=config.plant_radius,
            seed=seed,
            N_d=config.N_d,
            filter=AcceptanceFilter() if config.plant_filter else None,
        ))
        written.append(str(dump_plant(plant.model, out / f"plant-{seed}.txt")))
    _print({'plants': written})
    return EXIT_OK


def command_fit(args):
    record = read_json(args.run_dir / 'record.json')
    if record['kind'] == 'identification':
        recomputed = recompute_model_averages(args.run_dir)
        stored = {
            estimator: dict(zip(record['fit_iterations'], values))
            for estimator, values in record['average_model_fits'].items()
        }
        matches = all(
            recomputed.get(estimator, {}).get(j) == value
            for estimator, by_iteration in stored.items()
            for j, value in by_iteration.items() if value is not None
        )
        _print({'average_model_fits': recomputed, 'matches_record': matches})
    else:
        recomputed = recompute_fits(args.run_dir)
        matches = recomputed == record['tracking_fits']
        _print({'tracking_fits': recomputed, 'matches_record': matches})
    return EXIT_OK if matches else EXIT_RUNTIME


COMMANDS = {
    'run': command_run,
    'campaign': command_campaign,
    'bound': command_bound,
    'gen': command_gen,
    'fit': command_fit,
}


def cli_main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK

    try:
        return COMMANDS[args.command](args)
    except ConfigurationError as e:
        logger.error(f"Configuration error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:
        logger.exception(f"krilc {args.command} failed")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
