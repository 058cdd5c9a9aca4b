import sys

from django.core.management.base import BaseCommand

from experiments.cli import build_parser, cli_main


class Command(BaseCommand):
    help = 'Kernel-regularized ILC experiments: run, campaign, bound, gen, fit'

    def run_from_argv(self, argv):
        # argv is [manage.py, krilc, ...]; the subcommand parser owns the rest
        sys.exit(cli_main(argv[2:]))

    def add_arguments(self, parser):
        parser.add_argument('args', nargs='*')

    def handle(self, *args, **options):
        code = cli_main(list(args))
        if code:
            sys.exit(code)

    def print_help(self, prog_name, subcommand):
        build_parser().print_help()
