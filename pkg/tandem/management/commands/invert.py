from tandem.management.base import TandemCommand
from tandem.services import InversionService


class Command(TandemCommand):
    help = 'Reconstructs scatterer images from measured field amplitudes'
    name = 'invert'

    def add_command_arguments(self, parser):
        parser.add_argument('--model', required=True, help='Trained INN bundle (.tndb)')
        parser.add_argument('--fields', help='Field amplitudes (.npy, .csv or whitespace separated text)')
        parser.add_argument('--dataset', help='Dataset directory to take samples from')
        parser.add_argument('--index', type=int, nargs='+', default=[], help='Sample indices within --split')
        parser.add_argument('--split', help='Split name (default: the whole dataset)')

    def run_command(self, config, out_dir, options):
        metrics, artifacts = InversionService.invert(
            config, options['model'], out_dir,
            fields_path=options.get('fields'),
            dataset_path=options.get('dataset'),
            indices=options['index'],
            split=options.get('split'),
        )
        for row in metrics['samples']:
            status = 'consistent' if row['consistent'] else self.style.WARNING('inconsistent')
            scores = ''.join(f" {key}={row[key]:.4f}" for key in ('bce', 'ssim') if key in row)
            self.stdout.write(f"sample {row['sample']}: residual_l1={row['residual_l1']:.4f}{scores} {status}")
        return metrics, artifacts
