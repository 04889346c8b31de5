"""
URL configuration for the DFK_Controller project.

The admin browses recorded pipeline runs; `api/` exposes them read-only.
"""

from django.contrib import admin
from django.urls import include, path

urlpatterns = [
    path("admin/", admin.site.urls),
    path("", include("dfk.urls")),
]
