from django.urls import path, include
from rest_framework.routers import DefaultRouter
from . import views

router = DefaultRouter()
router.register(r'runs', views.PipelineRunViewSet)

app_name = 'dfk'

urlpatterns = [
    path('api/', include(router.urls)),
]
