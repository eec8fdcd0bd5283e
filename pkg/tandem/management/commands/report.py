from tandem.management.base import TandemCommand
from tandem.services import ReportService


class Command(TandemCommand):
    help = 'Evaluates a trained model on a dataset split and writes per-sample metrics'
    name = 'report'

    def add_command_arguments(self, parser):
        parser.add_argument('--kind', required=True, choices=['aae', 'fnn', 'inn'])
        parser.add_argument('--model', required=True, help='Model bundle (.tndb)')
        parser.add_argument('--dataset', required=True, help='Dataset directory')
        parser.add_argument('--split', default='test')

    def run_command(self, config, out_dir, options):
        return ReportService.evaluate(config, options['kind'], options['model'], options['dataset'], out_dir,
                                      split=options['split'])
