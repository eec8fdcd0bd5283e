import json
import logging
import math
import time
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand

from tandem.config import resolve
from tandem.exceptions import ConfigurationError
from tandem.services import RunReportService

logger = logging.getLogger(__name__)

RAW_OPTION_TYPES = (str, int, float, bool, list, dict, type(None))


def json_argument(value):
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"--arch must be a JSON object: {exc}") from exc
    if not isinstance(parsed, dict):
        raise ConfigurationError("--arch must be a JSON object")
    return parsed


def snr_argument(value):
    snr = float(value)
    if math.isnan(snr) or snr == -math.inf:
        raise ConfigurationError(f"--snr-db must be finite or inf (got {value})")
    return snr


class TandemCommand(BaseCommand):
    """
    Shared flags, config resolution, --dry-run and the single RunReport every run emits.

    Subclasses set ``name`` (the hyphenated subcommand) and implement ``run_command``
    returning (metrics, artifacts).
    """
    name = None
    requires_system_checks = []

    def add_arguments(self, parser):
        parser.add_argument('--config', help='Scene config file (key = value)')
        parser.add_argument('--seed', type=int, help='Random seed (default 0)')
        parser.add_argument('--workers', type=int, help='Worker processes for dataset generation')
        parser.add_argument('--out', help='Output directory for this run')
        parser.add_argument('--scale', choices=sorted(settings.TANDEM['SCALES']), help='Scale preset')
        parser.add_argument('--solver', choices=['auto', 'dense', 'fft'], help='Forward solver method')
        parser.add_argument('--tol', type=float, help='Solver relative residual tolerance')
        parser.add_argument('--dry-run', action='store_true', help='Print the resolved config and exit')
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def config_overrides(self, options):
        """Extra keyword arguments for config.resolve (hyper-parameters, sample count)."""
        return {}

    def run_command(self, config, out_dir, options):
        raise NotImplementedError

    def output_dir(self, options):
        if options.get('out'):
            return Path(options['out'])
        return Path(settings.TANDEM['OUTPUT_DIR']) / self.name

    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)
        # Usage errors raise CommandError so the entry point can print its one error line.
        parser.called_from_command_line = False
        return parser

    def raw_options(self, options):
        """Echo of the parsed flags for a report whose config never resolved."""
        return {
            key: value for key, value in options.items()
            if key not in ('stdout', 'stderr') and isinstance(value, RAW_OPTION_TYPES)
        }

    def handle(self, *args, **options):
        started = time.perf_counter()
        out_dir = self.output_dir(options)
        config = None
        try:
            config = resolve(
                scale=options.get('scale'),
                config_path=options.get('config'),
                seed=options.get('seed'),
                workers=options.get('workers'),
                out_dir=out_dir,
                solver=options.get('solver'),
                tol=options.get('tol'),
                **self.config_overrides(options),
            )
            if options.get('dry_run'):
                report = RunReportService.build(self.name, 'dry_run', config.as_dict())
                self.stdout.write(json.dumps(report, indent=2, sort_keys=True))
                return
            logger.info(f"{self.name}: scale={config.scale} seed={config.seed} out={out_dir}")
            metrics, artifacts = self.run_command(config, out_dir, options)
        except Exception as e:
            timings = {'wall_s': time.perf_counter() - started}
            echo = config.as_dict() if config is not None else self.raw_options(options)
            metrics = getattr(e, 'context', {}).get('metrics')
            report = RunReportService.build(self.name, 'failed', echo, metrics, timings=timings, error=e)
            if options.get('dry_run'):
                self.stdout.write(json.dumps(report, indent=2, sort_keys=True))
            else:
                RunReportService.emit(out_dir, report)
            logger.error(f"{self.name} failed: {e}")
            raise

        timings = {'wall_s': time.perf_counter() - started}
        report = RunReportService.build(self.name, 'ok', config.as_dict(), metrics, artifacts, timings)
        path = RunReportService.emit(out_dir, report)
        for key, value in report['metrics'].items():
            if not isinstance(value, (list, dict)):
                self.stdout.write(f"{key}={value}")
        self.stdout.write(self.style.SUCCESS(f"{self.name} finished in {timings['wall_s']:.1f}s; report: {path}"))
