"""Configure Django before pytest collects the Django test cases."""
import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'spectrum_site.settings')
django.setup()
