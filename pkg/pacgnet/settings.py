"""
Django settings for the pacgnet project.

The project has no web surface: Django supplies the settings layer, the
app registry and the management-command runner that drives dataset
synthesis, training, evaluation and verification.

Values are read through django-environ from the process environment and
an optional `.env` file next to manage.py (see `.env.template`).
"""

import sys
from pathlib import Path

import environ

BASE_DIR = Path(__file__).resolve().parent.parent

env = environ.Env(
    DEBUG=(bool, False),
    SECRET_KEY=(str, 'pacgnet-desk-scale-not-secret'),
    LOGS_PATH=(str, None),
    RUNS_PATH=(str, None),
    GRADCHECK_TOLERANCE=(float, 1e-4),
    GRADCHECK_STEP=(float, 1e-5),
)
env.read_env(env_file=str(BASE_DIR / '.env'))


def _output_dir(variable, default_name):
    path = Path(env(variable)) if env(variable) else BASE_DIR / default_name
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        print(f"Warning: {variable} directory {path} is not usable: {e}", file=sys.stderr)
    return path


# Run-event logs (log_service) and default command outputs
LOGS_DIR = _output_dir('LOGS_PATH', 'logs')
RUNS_DIR = _output_dir('RUNS_PATH', 'runs')

SECRET_KEY = env('SECRET_KEY')
DEBUG = env('DEBUG')
ALLOWED_HOSTS = []

INSTALLED_APPS = [
    'log_service',  # Structured run-event logging
    'core',  # Run configuration, shared command plumbing, gradcheck
    'tensor_core',  # Rank-4 tensors with reverse-mode differentiation
    'nn_blocks',  # Parameter sets, layers, checkpoints
    'fusion',  # SCG, PFMG and the dual-stream pyramid
    'detection',  # Synthetic scenes, detection head, trainer
    'evaluation',  # mAP50 and the ablation protocol
]

# Commands never touch a database.
DATABASES = {}

# Gradient verification
# Central differences with GRADCHECK_STEP; an element passes when its
# relative error stays under GRADCHECK_TOLERANCE.
GRADCHECK_TOLERANCE = env('GRADCHECK_TOLERANCE')
GRADCHECK_STEP = env('GRADCHECK_STEP')

LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True
