from django.apps import AppConfig


class DetectionConfig(AppConfig):
    name = 'detection'
    verbose_name = 'Synthetic scenes and the toy detector'
