"""
WSGI config for the DFK_Controller project.

Serves the admin and the read-only run API.
"""

import os

from django.core.wsgi import get_wsgi_application

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "DFK_Controller.settings")

application = get_wsgi_application()
