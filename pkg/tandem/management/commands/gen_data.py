from tandem.management.base import TandemCommand, snr_argument
from tandem.services import DatasetService


class Command(TandemCommand):
    help = 'Generates a dataset of random scatterers and their simulated field amplitudes'
    name = 'gen-data'

    def add_command_arguments(self, parser):
        parser.add_argument('--n', type=int, help='Number of samples (default: scale preset)')
        parser.add_argument('--snr-db', type=snr_argument, default=float('inf'), help='Additive noise SNR in dB')
        parser.add_argument('--dump-fields', type=int, metavar='INDEX',
                            help='Also write the complex fields of one sample as .npz')
        parser.add_argument('--redraw-on-failure', action='store_true',
                            help='Redraw a scatterer whose forward solve fails instead of aborting')
        parser.add_argument('--no-resume', action='store_true', help='Start over even if samples.bin exists')

    def config_overrides(self, options):
        return {'samples': options.get('n')}

    def run_command(self, config, out_dir, options):
        self.stdout.write(f"Generating {config.samples} samples into {out_dir}...")
        return DatasetService.generate(
            config, out_dir,
            n=config.samples,
            snr_db=options['snr_db'],
            redraw_on_failure=options['redraw_on_failure'],
            dump_index=options.get('dump_fields'),
            resume=not options['no_resume'],
        )
