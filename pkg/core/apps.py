from django.apps import AppConfig


class CoreConfig(AppConfig):
    """Run configuration, shared command plumbing and the gradcheck command."""
    name = 'core'
    verbose_name = 'pacgnet core'
