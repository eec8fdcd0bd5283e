#!/usr/bin/env python
"""Command-line utility for the EM imaging toolkit (Django management commands)."""
import os
import sys


def main():
    """Run a toolkit subcommand or any Django administrative task."""
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'em_imaging.settings')
    try:
        from tandem.cli import run
    except ImportError as exc:
        raise ImportError(
            "Couldn't import Django. Are you sure it's installed and "
            "available on your PYTHONPATH environment variable? Did you "
            "forget to activate a virtual environment?"
        ) from exc
    sys.exit(run(sys.argv))


if __name__ == '__main__':
    main()
