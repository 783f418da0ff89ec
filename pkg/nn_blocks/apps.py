from django.apps import AppConfig


class NnBlocksConfig(AppConfig):
    name = 'nn_blocks'
    verbose_name = 'Network Building Blocks'
