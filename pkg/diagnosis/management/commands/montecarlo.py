from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand, CommandError
from loguru import logger

from config import Config
from design.io.results import dump_json, load_design
from diagnosis.logic.experiments import monte_carlo
from systems.io.modelfile import parse_model_file

EXIT_CONDITION_VIOLATED = 3


class Command(BaseCommand):
    help = 'Monte Carlo sweep of diagnosis experiments over the uncertainty boxes'

    def add_arguments(self, parser):
        parser.add_argument('--models', type=str, default=str(Config.DEFAULT_MODEL_FILE),
                            help='Model file (JSON)')
        parser.add_argument('--design', type=str, required=True, help='design.json')
        parser.add_argument('--trials', type=int, default=Config.MONTE_CARLO_TRIALS,
                            help='Trials per model')
        parser.add_argument('--seed', type=int, default=Config.MONTE_CARLO_SEED, help='Sampling seed')
        parser.add_argument('--mode', choices=['random', 'nominal'], default='random',
                            help='Draw the true models at random or use the nominal ones')
        parser.add_argument('--box-scale', type=float, default=1.0,
                            help='Multiply every uncertainty half-width by this factor')
        parser.add_argument('--workers', type=int, default=1, help='Worker threads')
        parser.add_argument('--init', choices=['past', 'ls'], default=Config.DEFAULT_INIT_SCHEME,
                            help='Initial state: past-input simulation or least squares')
        parser.add_argument('--out', type=str, help='Path for the summary JSON')
        parser.add_argument('--strict', action='store_true',
                            help='Exit with code 3 if the robustness condition is violated')

    def handle(self, *args, **options):
        try:
            ms = parse_model_file(options['models'])
            dr = load_design(options['design'])
            summary = monte_carlo(
                ms, dr,
                trials=options['trials'],
                seed=options['seed'],
                mode=options['mode'],
                box_scale=options['box_scale'],
                workers=options['workers'],
                init_scheme=options['init'],
                show_progress=True,
            )
        except (ValidationError, ValueError, OSError) as e:
            logger.error(f"Monte Carlo failed: {e}")
            raise CommandError(str(e))

        for model in summary.models:
            if model.min_margin is None:
                logger.info(f"{model.label}: all {model.trials} trials rejected")
                continue
            logger.info(f"{model.label}: {model.misdiagnoses}/{model.trials - model.rejected} misdiagnosed, "
                        f"margin min {model.min_margin:.3e} median {model.median_margin:.3e}")
        if summary.separation_satisfied is not None:
            logger.info(f"Separation condition {'holds' if summary.separation_satisfied else 'does not hold'}")

        if options['out']:
            dump_json(options['out'], summary.to_dict())
            logger.info(f"Wrote {options['out']}")

        if options['strict'] and not summary.condition_satisfied:
            logger.error('Sufficient robustness condition is violated')
            raise CommandError('Robustness condition violated', returncode=EXIT_CONDITION_VIOLATED)
