"""
Django settings for the afd project.

The project has no database, views or admin: Django hosts the management
commands, the app registry and the test runner.
"""

from pathlib import Path
from loguru import logger
from tqdm import tqdm

# Remove the default console handler
# And setup console output for info and above
logger.remove()
logger.add(
    lambda msg: tqdm.write(msg, end=""),
    format="<level>{level: <7}</level> | <level>{message}</level>",
    level="INFO",
    colorize=True
)

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = 'django-insecure-afd-offline-tooling-only'

DEBUG = True

ALLOWED_HOSTS = []

INSTALLED_APPS = [
    'afd',
    'systems',
    'design',
    'diagnosis',
]

# No persistence: results are written as JSON / CSV files
DATABASES = {}

USE_TZ = True
