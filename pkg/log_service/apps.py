from django.apps import AppConfig


class LogServiceConfig(AppConfig):
    """
    Configuration for the log_service app.

    Provides structured JSON logging of run events. It has no models
    and needs no database.
    """
    name = 'log_service'
    verbose_name = 'pacgnet run-event logging'
