from tandem.management.base import TandemCommand, json_argument
from tandem.services import TrainingService


class Command(TandemCommand):
    help = 'Trains the surrogate network mapping contrast images to field amplitudes'
    name = 'train-fnn'

    def add_command_arguments(self, parser):
        parser.add_argument('--dataset', required=True, help='Dataset directory')
        parser.add_argument('--max-epochs', type=int)
        parser.add_argument('--lr', type=float)
        parser.add_argument('--batch-size', type=int)
        parser.add_argument('--l2', type=float, help='L2 weight penalty')
        parser.add_argument('--patience', type=int, help='Early stopping patience in epochs')
        parser.add_argument('--parallel-shards', type=int,
                            help='Split each batch across this many threads (default 1, serial)')
        parser.add_argument('--arch', type=json_argument, help='JSON object of FNNModel overrides')

    def config_overrides(self, options):
        keys = ('max_epochs', 'lr', 'batch_size', 'l2', 'patience', 'parallel_shards')
        return {'fnn': {key: options.get(key) for key in keys}}

    def run_command(self, config, out_dir, options):
        return TrainingService.train_fnn(config, options['dataset'], out_dir, options.get('arch'))
