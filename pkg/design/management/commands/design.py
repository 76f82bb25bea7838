from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand, CommandError
from loguru import logger

from config import Config
from design.io.results import dump_design, write_input_csv
from design.logic.inputdesign import design_input
from systems.io.modelfile import parse_model_file

EXIT_INFEASIBLE = 2
EXIT_CONDITION_VIOLATED = 3


class Command(BaseCommand):
    help = 'Design the optimal discriminating input for a model set'

    def add_arguments(self, parser):
        parser.add_argument('--models', type=str, default=str(Config.DEFAULT_MODEL_FILE),
                            help='Model file (JSON)')
        parser.add_argument('--scope', choices=['full', 'model'], default='full',
                            help='Discriminate between all models, or against one model only')
        parser.add_argument('--model', type=int, help='Model index for --scope model')
        parser.add_argument('--starts', type=int, default=Config.OPTIMIZER_STARTS,
                            help='Number of optimizer starts')
        parser.add_argument('--seed', type=int, default=Config.OPTIMIZER_SEED, help='Optimizer seed')
        parser.add_argument('--margin-samples', type=int, default=Config.MARGIN_RANDOM_SAMPLES,
                            help='Random box samples per model for the robustness margins')
        parser.add_argument('--no-margins', action='store_true', help='Skip the robustness margin check')
        parser.add_argument('--out', type=str, required=True, help='Path for design.json')
        parser.add_argument('--input-csv', type=str, help='Also write the input as k,value CSV')
        parser.add_argument('--strict', action='store_true',
                            help='Exit with code 3 if the robustness condition is violated')

    def handle(self, *args, **options):
        if options['scope'] == 'model' and options['model'] is None:
            raise CommandError('--scope model needs --model')
        try:
            ms = parse_model_file(options['models'])
            dr = design_input(
                ms,
                scope=options['scope'],
                i=options['model'],
                starts=options['starts'],
                seed=options['seed'],
                margins=not options['no_margins'],
                margin_samples=options['margin_samples'],
                show_progress=True,
            )
        except (ValidationError, ValueError) as e:
            logger.error(f"Design failed: {e}")
            raise CommandError(str(e))

        dump_design(options['out'], dr)
        logger.info(f"Wrote {options['out']}")
        if options['input_csv']:
            write_input_csv(options['input_csv'], dr)
            logger.info(f"Wrote {options['input_csv']}")

        if not dr.feasible:
            logger.error(f"Design is infeasible: gamma = {dr.gamma_energy:.3e}")
            raise CommandError('Infeasible design', returncode=EXIT_INFEASIBLE)

        if dr.margin_report is not None:
            for margin in dr.margin_report.models:
                status = 'ok' if margin.satisfied else 'VIOLATED'
                logger.info(f"{margin.label}: ||Delta||_H ~ {margin.delta_hankel_estimate:.6f} "
                            f"vs gamma {dr.gamma_norm:.6f} [{status}]")
            if dr.margin_report.separation_satisfied is not None:
                logger.info(f"Separation condition "
                            f"{'holds' if dr.margin_report.separation_satisfied else 'does not hold'}")
            if options['strict'] and not dr.margin_report.satisfied:
                logger.error('Sufficient robustness condition is violated')
                raise CommandError('Robustness condition violated', returncode=EXIT_CONDITION_VIOLATED)
