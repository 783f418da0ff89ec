from django.conf import settings

from core.exceptions import VerificationFailed
from core.management.base_command import PacgCommand
from core.verification import run_gradient_checks
from log_service.events import EVENT_GRADCHECK_FAILED, LogEventType, LogSeverity
from log_service.logger import log_event
from log_service.utils import log_gradcheck


class Command(PacgCommand):
    help = "Checks every backward rule, SCG, PFMG and the full pipeline against central finite differences."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--seed', type=int, default=None, help='Seed for inputs and parameters (default: config seed).')
        parser.add_argument('--component', action='append', default=None,
                            help='Only run the named component; may be repeated.')

    def configure(self, config, options):
        if options.get('seed') is not None:
            config = config.replace(seed=options['seed'])
        return config

    def run(self, config, options):
        results = run_gradient_checks(
            seed=config['seed'],
            step=settings.GRADCHECK_STEP,
            tolerance=settings.GRADCHECK_TOLERANCE,
            names=options.get('component'),
        )
        failed = []
        for result in results:
            status = 'ok' if result.passed else 'FAIL'
            self.stdout.write(f"{result.component:<18} worst_rel_err {result.worst_error:.3e} {status}")
            log_gradcheck(__name__, result)
            if not result.passed:
                failed.append(result.component)
        if failed:
            log_event(LogEventType.VERIFICATION, EVENT_GRADCHECK_FAILED, severity=LogSeverity.ERROR, source=__name__,
                      message=f"{len(failed)} of {len(results)} components above {settings.GRADCHECK_TOLERANCE:g}",
                      extra_data={'failed': failed, 'tolerance': settings.GRADCHECK_TOLERANCE})
            raise VerificationFailed(failed)
        self.stdout.write(self.style.SUCCESS(f"All {len(results)} components within {settings.GRADCHECK_TOLERANCE:g}"))
