from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand, CommandError
from loguru import logger

from config import Config
from design.io.results import dump_json, load_design
from diagnosis.logic.engine import create_default_engine
from diagnosis.models import InitScheme
from systems.io.modelfile import parse_model_file
from systems.io.signals import read_signal_csv


class Command(BaseCommand):
    help = 'Diagnose a measured trajectory against every model of the set'

    def add_arguments(self, parser):
        parser.add_argument('--models', type=str, default=str(Config.DEFAULT_MODEL_FILE),
                            help='Model file (JSON)')
        parser.add_argument('--input', type=str, required=True,
                            help='Applied input as k,value CSV on the excitation window')
        parser.add_argument('--measurement', type=str, required=True,
                            help='Measured output as k,value CSV on the measurement window')
        parser.add_argument('--init', choices=['past', 'ls'], default=Config.DEFAULT_INIT_SCHEME,
                            help='Initial state: past-input simulation or least squares')
        parser.add_argument('--design', type=str, help='design.json, for the reference gamma')
        parser.add_argument('--out', type=str, help='Path for the result JSON')

    def handle(self, *args, **options):
        try:
            ms = parse_model_file(options['models'])
            u = read_signal_csv(options['input'], expected_start=-ms.t_minus)
            y = read_signal_csv(options['measurement'], expected_length=ms.t_plus + 1, expected_start=0)
            gamma_ref = load_design(options['design']).gamma_norm if options['design'] else None
            engine = create_default_engine(ms)
            result = engine.diagnose(u, y, InitScheme.parse(options['init']), gamma_ref)
        except (ValidationError, ValueError, OSError) as e:
            logger.error(f"Diagnosis failed: {e}")
            raise CommandError(str(e))

        for j, (label, norm, raw) in enumerate(zip(ms.labels, result.residual_norms, result.unnormalized_norms)):
            mark = '*' if j == result.j_star else ' '
            logger.info(f"{mark} {label}: ||v|| = {norm:.6f} (unnormalized {raw:.6f})")
        logger.info(f"Diagnosis: {result.diagnosed_label}, margin {result.margin:.3e}, "
                    f"initial state by {result.init_scheme.label} ({result.wall_time * 1e3:.2f} ms)")

        if options['out']:
            dump_json(options['out'], result.to_dict())
            logger.info(f"Wrote {options['out']}")
