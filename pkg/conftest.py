import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'afd.settings')
django.setup()
