from tandem.management.base import TandemCommand, json_argument
from tandem.services import TrainingService


class Command(TandemCommand):
    help = 'Trains the inverse network against a frozen generator and surrogate'
    name = 'train-inn'

    def add_command_arguments(self, parser):
        parser.add_argument('--dataset', required=True, help='Dataset directory')
        parser.add_argument('--aae', required=True, help='Trained AAE bundle (.tndb)')
        parser.add_argument('--fnn', required=True, help='Trained FNN bundle (.tndb)')
        parser.add_argument('--alpha', type=float, help='Weight of the KL term')
        parser.add_argument('--lr', type=float)
        parser.add_argument('--batch-size', type=int)
        parser.add_argument('--patience', type=int)
        parser.add_argument('--max-epochs', type=int)
        parser.add_argument('--arch', type=json_argument, help='JSON object of INNModel overrides')

    def config_overrides(self, options):
        keys = ('alpha', 'lr', 'batch_size', 'patience', 'max_epochs')
        return {'inn': {key: options.get(key) for key in keys}}

    def run_command(self, config, out_dir, options):
        return TrainingService.train_inn(config, options['dataset'], options['aae'], options['fnn'], out_dir,
                                         options.get('arch'))
