"""
Django settings for the DFK_Controller project.

The project hosts the data-driven LPV controller design pipeline: plant
simulation and data acquisition, set-membership prior estimation, the sparse
l1 design program and closed-loop evaluation. Pipeline stages run as
management commands; runs are recorded in the database.
"""

from pathlib import Path
import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.getenv('SECRET_KEY', "django-insecure-dfk-local-development-key")

# SECURITY WARNING: don't run with debug turned on in production!
DEBUG = os.getenv('DEBUG', 'True').lower() == 'true'

ALLOWED_HOSTS = os.getenv('ALLOWED_HOSTS', 'localhost,127.0.0.1').split(',')


# Application definition

INSTALLED_APPS = [
    "django.contrib.admin",
    "django.contrib.auth",
    "django.contrib.contenttypes",
    "django.contrib.sessions",
    "django.contrib.messages",
    "django.contrib.staticfiles",
    "rest_framework",
    "dfk",
]

MIDDLEWARE = [
    "django.middleware.security.SecurityMiddleware",
    "django.contrib.sessions.middleware.SessionMiddleware",
    "django.middleware.common.CommonMiddleware",
    "django.middleware.csrf.CsrfViewMiddleware",
    "django.contrib.auth.middleware.AuthenticationMiddleware",
    "django.contrib.messages.middleware.MessageMiddleware",
    "django.middleware.clickjacking.XFrameOptionsMiddleware",
]

ROOT_URLCONF = "DFK_Controller.urls"

TEMPLATES = [
    {
        "BACKEND": "django.template.backends.django.DjangoTemplates",
        "DIRS": [],
        "APP_DIRS": True,
        "OPTIONS": {
            "context_processors": [
                "django.template.context_processors.request",
                "django.contrib.auth.context_processors.auth",
                "django.contrib.messages.context_processors.messages",
            ],
        },
    },
]

WSGI_APPLICATION = "DFK_Controller.wsgi.application"


# Database
# Pipeline runs are small records; SQLite is enough unless overridden.

DATABASES = {
    "default": {
        "ENGINE": os.getenv('DB_ENGINE', "django.db.backends.sqlite3"),
        "NAME": os.getenv('DB_NAME', str(BASE_DIR / "db.sqlite3")),
    }
}

# Internationalization

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = True

USE_TZ = True

# Static files (admin only)

STATIC_URL = "/static/"
STATIC_ROOT = BASE_DIR / "staticfiles"

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"

# REST Framework settings
REST_FRAMEWORK = {
    'DEFAULT_AUTHENTICATION_CLASSES': [
        'rest_framework.authentication.SessionAuthentication',
    ],
    'DEFAULT_PERMISSION_CLASSES': [
        'rest_framework.permissions.AllowAny',
    ],
    'DEFAULT_PAGINATION_CLASS': 'rest_framework.pagination.PageNumberPagination',
    'PAGE_SIZE': 20,
}

# Bundled experiment configurations
DFK_CONFIG_DIR = Path(os.getenv('DFK_CONFIG_DIR', BASE_DIR / 'configs'))


def _env_float(name, default):
    value = os.getenv(name)
    return float(value) if value is not None else default


def _env_int(name, default):
    value = os.getenv(name)
    return int(value) if value is not None else default


# Numerical defaults of the design pipeline
DFK_CONFIG = {
    'validation_inflation': _env_float('DFK_VALIDATION_INFLATION', 1.25),
    'knee_tolerance': _env_float('DFK_KNEE_TOLERANCE', 0.05),
    'lambda_s_window': _env_int('DFK_LAMBDA_S_WINDOW', 50),
    'lambda_s_inflation': _env_float('DFK_LAMBDA_S_INFLATION', 1.25),
    'lambda_b_inflation': _env_float('DFK_LAMBDA_B_INFLATION', 1.25),
    'lambda_b_radius': _env_float('DFK_LAMBDA_B_RADIUS', 0.2),
    'safety_margin': _env_float('DFK_SAFETY_MARGIN', 0.8),
    'sparsity_threshold': _env_float('DFK_SPARSITY_THRESHOLD', 1e-6),
    'lp_tolerance': _env_float('DFK_LP_TOLERANCE', 1e-7),
    'lp_max_iters': _env_int('DFK_LP_MAX_ITERS', 200000),
    # 0 keeps every neighbour pair
    'max_pairs': _env_int('DFK_MAX_PAIRS', 5000),
    'grid_density': _env_int('DFK_GRID_DENSITY', 21),
    'substeps': _env_int('DFK_SUBSTEPS', 10),
    'divergence_limit': _env_float('DFK_DIVERGENCE_LIMIT', 1e6),
    'montecarlo_workers': _env_int('DFK_MONTECARLO_WORKERS', 1),
}

# Logging configuration
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {process:d} {thread:d} {message}',
            'style': '{',
        },
        'simple': {
            'format': '{levelname} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
        'file': {
            'class': 'logging.FileHandler',
            'filename': os.getenv('DFK_LOG_FILE', str(BASE_DIR / 'dfk.log')),
            'formatter': 'verbose',
        },
    },
    'root': {
        'handlers': ['console', 'file'],
        'level': 'INFO',
    },
    'loggers': {
        'dfk': {
            'handlers': ['console', 'file'],
            'level': os.getenv('DFK_LOG_LEVEL', 'DEBUG'),
            'propagate': False,
        },
        'django': {
            'handlers': ['console', 'file'],
            'level': 'INFO',
            'propagate': False,
        },
    },
}
