"""
Command-line entry: ``python manage.py <subcommand>``.

Hyphenated subcommand names map onto the management commands (gen-data -> gen_data).
Any failure ends the process with a nonzero status and one stderr line
``error=<ClassName> message=<text>``; flag parsing failures count as ConfigurationError.
"""
import logging
import os
import sys

from .exceptions import ConfigurationError, TandemError

logger = logging.getLogger(__name__)

SUBCOMMANDS = ('gen-data', 'train-aae', 'train-fnn', 'train-inn', 'invert', 'validate-solver', 'report')


def normalize_argv(argv):
    argv = list(argv)
    if len(argv) > 1 and argv[1] in SUBCOMMANDS:
        argv[1] = argv[1].replace('-', '_')
    return argv


def run(argv=None):
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'em_imaging.settings')
    from django.core.management import execute_from_command_line
    from django.core.management.base import CommandError

    try:
        execute_from_command_line(normalize_argv(argv if argv is not None else sys.argv))
    except TandemError as e:
        sys.stderr.write(e.summary() + '\n')
        return e.exit_code
    except CommandError as e:
        message = str(e)
        if message.startswith('Error: '):
            message = message[len('Error: '):]
        error = ConfigurationError(message)
        sys.stderr.write(error.summary() + '\n')
        return error.exit_code
    except (KeyboardInterrupt, SystemExit):
        raise
    except Exception as e:
        logger.error(f"Unhandled exception: {e}", exc_info=True)
        message = ' '.join(str(e).split())
        sys.stderr.write(f"error=InternalError message={message}\n")
        return 1
    return 0
