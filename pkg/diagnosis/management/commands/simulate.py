from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand, CommandError
from loguru import logger

from config import Config
from design.io.results import dump_json, load_design
from diagnosis.logic.engine import create_default_engine
from diagnosis.logic.experiments import check_design, run_experiment
from systems.io.modelfile import parse_model_file
from systems.io.signals import write_signal_csv
from systems.models import SampleMode


class Command(BaseCommand):
    help = 'Simulate one diagnosis experiment with a sampled true model'

    def add_arguments(self, parser):
        parser.add_argument('--models', type=str, default=str(Config.DEFAULT_MODEL_FILE),
                            help='Model file (JSON)')
        parser.add_argument('--design', type=str, required=True, help='design.json')
        parser.add_argument('--truth', type=int, required=True, help='Index of the true model')
        parser.add_argument('--mode', choices=['nominal', 'worst', 'random', 'vertex'], default='worst',
                            help='How the true model is sampled from its uncertainty box')
        parser.add_argument('--seed', type=int, default=0, help='Seed for --mode random')
        parser.add_argument('--vertex', type=int, default=0, help='Vertex code for --mode vertex')
        parser.add_argument('--init', choices=['past', 'ls'], default=Config.DEFAULT_INIT_SCHEME,
                            help='Initial state: past-input simulation or least squares')
        parser.add_argument('--measurement-out', type=str, help='Write the simulated y as k,value CSV')
        parser.add_argument('--out', type=str, help='Path for the experiment JSON')

    def handle(self, *args, **options):
        try:
            ms = parse_model_file(options['models'])
            dr = load_design(options['design'])
            check_design(ms, dr)
            mode = SampleMode.parse(options['mode'], seed=options['seed'], vertex=options['vertex'])
            record = run_experiment(ms, dr, options['truth'], mode, create_default_engine(ms), options['init'])
        except (ValidationError, ValueError, OSError) as e:
            logger.error(f"Simulation failed: {e}")
            raise CommandError(str(e))

        result = record.result
        for j, norm in enumerate(result.residual_norms):
            mark = '*' if j == result.j_star else ' '
            logger.info(f"{mark} {ms.labels[j]}: ||v|| = {norm:.6f}")
        outcome = 'correct' if record.correct else 'WRONG'
        logger.info(f"Truth {record.truth_label} ({record.sample}) diagnosed as "
                    f"{result.diagnosed_label} [{outcome}]")

        if options['measurement_out']:
            write_signal_csv(options['measurement_out'], record.y)
            logger.info(f"Wrote {options['measurement_out']}")
        if options['out']:
            dump_json(options['out'], record.to_dict())
            logger.info(f"Wrote {options['out']}")
