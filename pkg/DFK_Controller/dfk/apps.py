from django.apps import AppConfig


class DfkConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'dfk'
    verbose_name = 'Direct Feedback Controller Design'
