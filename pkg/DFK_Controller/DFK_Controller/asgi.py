"""
ASGI config for the DFK_Controller project.
"""

import os

from django.core.asgi import get_asgi_application

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "DFK_Controller.settings")

application = get_asgi_application()
