from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand, CommandError
from loguru import logger

from config import Config
from design.io.results import load_design
from diagnosis.io.report import format_table, write_report
from diagnosis.logic.experiments import run_suite
from systems.io.modelfile import parse_model_file
from systems.models import SampleMode


class Command(BaseCommand):
    help = 'Run one experiment per model and write the result table, residuals and responses'

    def add_arguments(self, parser):
        parser.add_argument('--models', type=str, default=str(Config.DEFAULT_MODEL_FILE),
                            help='Model file (JSON)')
        parser.add_argument('--design', type=str, required=True, help='design.json')
        parser.add_argument('--out-dir', type=str, required=True, help='Directory for the report files')
        parser.add_argument('--mode', choices=['nominal', 'worst', 'random'], default='worst',
                            help='How every true model is sampled')
        parser.add_argument('--seed', type=int, default=0, help='Seed for --mode random')
        parser.add_argument('--init', choices=['past', 'ls'], default=Config.DEFAULT_INIT_SCHEME,
                            help='Initial state: past-input simulation or least squares')

    def handle(self, *args, **options):
        try:
            ms = parse_model_file(options['models'])
            dr = load_design(options['design'])
            suite = [
                (i, SampleMode.parse(options['mode'], seed=options['seed'] + i)) for i in ms.indices
            ]
            records = run_suite(ms, dr, suite, options['init'])
            write_report(options['out_dir'], ms, dr, records)
        except (ValidationError, ValueError, OSError) as e:
            logger.error(f"Report failed: {e}")
            raise CommandError(str(e))

        for line in format_table(records, ms.labels).splitlines():
            logger.info(line)
