from django.apps import AppConfig


class AfdConfig(AppConfig):
    name = 'afd'
    verbose_name = 'Active fault diagnosis'
