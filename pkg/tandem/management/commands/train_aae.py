from tandem.management.base import TandemCommand, json_argument
from tandem.services import TrainingService


class Command(TandemCommand):
    help = 'Trains the adversarial autoencoder whose generator is the shape prior'
    name = 'train-aae'

    def add_command_arguments(self, parser):
        parser.add_argument('--dataset', required=True, help='Dataset directory')
        parser.add_argument('--epochs', type=int)
        parser.add_argument('--lr', type=float)
        parser.add_argument('--batch-size', type=int)
        parser.add_argument('--arch', type=json_argument, help='JSON object of AAEModel overrides')

    def config_overrides(self, options):
        return {'aae': {key: options.get(key) for key in ('epochs', 'lr', 'batch_size')}}

    def run_command(self, config, out_dir, options):
        return TrainingService.train_aae(config, options['dataset'], out_dir, options.get('arch'))
