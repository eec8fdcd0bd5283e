from tandem.management.base import TandemCommand
from tandem.services import ValidationService


class Command(TandemCommand):
    help = 'Checks the forward solver against closed forms, Mie series and reciprocity'
    name = 'validate-solver'

    def add_command_arguments(self, parser):
        parser.add_argument('--quick', action='store_true', help='Skip the 64x64 Mie comparison')

    def run_command(self, config, out_dir, options):
        metrics, results = ValidationService.run(config, include_large=not options['quick'])
        for result in results:
            line = f"{result.name}: value={result.value:.3e} threshold={result.threshold:.1e}"
            if result.passed:
                self.stdout.write(f"{line} ok")
            else:
                self.stdout.write(self.style.ERROR(f"{line} FAILED {result.detail}"))
        ValidationService.raise_on_failure(results, metrics)
        return metrics, []
