"""
Django settings for the spectrum_site project.

The project has no web surface: it hosts the ``spectra`` app whose
management commands are the command-line front end of the spectrum
approximation library.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.2/ref/settings/
"""

from pathlib import Path
import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# Only needed because Django refuses to start without one; nothing is signed.
SECRET_KEY = os.getenv('SECRET_KEY', 'spectra-local-key-not-used-for-signing')

DEBUG = os.getenv('DEBUG', 'False') == 'True'

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'django.contrib.auth',
    'rest_framework',
    'spectra',
]

# No database: every computation is in memory and artifacts go to files.
DATABASES = {}


# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True


# ======================
# SPECTRA (library configuration)
# ======================
SPECTRA = {
    # Uniform unit-circle grid size used when a problem file gives none
    'GRID_POINTS': int(os.getenv('SPECTR_GRID', '512')),
    # Worker cap for Monte-Carlo trials (0 = auto)
    'THREADS': int(os.getenv('SPECTR_THREADS', '0')),
    # FIR length of the spectral-factor synthesis filter
    'TAPS': int(os.getenv('SPECTR_TAPS', '64')),
}


# ======================
# LOGGING
# ======================
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'plain': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'plain',
        },
    },
    'loggers': {
        'spectra': {
            'handlers': ['console'],
            'level': os.getenv('SPECTR_LOG_LEVEL', 'WARNING'),
            'propagate': False,
        },
    },
}
