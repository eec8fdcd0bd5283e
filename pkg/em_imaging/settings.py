from pathlib import Path
import os
from dotenv import load_dotenv
import dj_database_url

load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# The registry has no web surface; the key only satisfies Django's startup checks.
SECRET_KEY = os.environ.get('SECRET_KEY', 'django-insecure-tandem-registry-only')

DEBUG = os.environ.get('DEBUG', '1') == '1'  # Default to True for development

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'tandem',
]

MIDDLEWARE = []


# Database (run registry: datasets, checkpoints, run reports)

DATABASES = {
    'default': dj_database_url.config(
        default='sqlite:///' + str(BASE_DIR / 'db.sqlite3'),
        conn_max_age=600
    )
}


# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True


DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Toolkit defaults. Every value can be overridden by a scene config file or a command flag.
TANDEM = {
    'OUTPUT_DIR': os.environ.get('TANDEM_OUTPUT_DIR', str(BASE_DIR / 'runs')),
    # Training precision; gradient checks always run in float64.
    'DTYPE': os.environ.get('TANDEM_DTYPE', 'float32'),
    'CHECKPOINT_EVERY': int(os.environ.get('TANDEM_CHECKPOINT_EVERY', '50')),
    'DEFAULT_SCALE': os.environ.get('TANDEM_SCALE', 'desk'),
    'SOLVER': {
        'method': 'auto',
        'tolerance': 1e-8,
        'max_iterations': 2000,
    },
    'SCALES': {
        'paper': {
            'scene': {
                'domain_side_m': 9.45,
                'grid_n': 64,
                'eps_r_scatterer': 2.0,
                'n_tx': 8,
                'n_rx': 16,
                'antenna_radius_m': 9.0,
                'frequencies_hz': [60e6, 80e6, 100e6, 120e6],
            },
            'samples': 30000,
            'aae_split': 'aae',
            'fnn_split': 'fnn',
            'aae': {'lr': 0.0002, 'batch_size': 100, 'epochs': 30000},
            'fnn': {'lr': 0.001, 'batch_size': 30, 'l2': 1e-4, 'patience': 5, 'max_epochs': 200},
            'inn': {'lr': 0.0002, 'batch_size': 30, 'alpha': 1e-2, 'patience': 5, 'max_epochs': 200},
        },
        'desk': {
            'scene': {
                'domain_side_m': 9.45,
                'grid_n': 32,
                'eps_r_scatterer': 2.0,
                'n_tx': 8,
                'n_rx': 16,
                'antenna_radius_m': 9.0,
                'frequencies_hz': [60e6, 100e6],
            },
            'samples': 2400,
            'aae_split': 'desk',
            'fnn_split': 'desk',
            'aae': {'lr': 0.0002, 'batch_size': 100, 'epochs': 500},
            'fnn': {'lr': 0.001, 'batch_size': 30, 'l2': 1e-4, 'patience': 5, 'max_epochs': 60},
            'inn': {'lr': 0.0002, 'batch_size': 30, 'alpha': 1e-2, 'patience': 5, 'max_epochs': 60},
        },
    },
}


# Console logging
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {process:d} {thread:d} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': 'WARNING',
    },
    'loggers': {
        'django': {
            'handlers': ['console'],
            'level': os.getenv('DJANGO_LOG_LEVEL', 'INFO'),
            'propagate': False,
        },
        'tandem': {
            'handlers': ['console'],
            'level': os.getenv('TANDEM_LOG_LEVEL', 'INFO'),
            'propagate': False,
        },
    },
}
