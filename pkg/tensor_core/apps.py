from django.apps import AppConfig


class TensorCoreConfig(AppConfig):
    """
    Configuration for the tensor_core app.

    Pure numerical library; it defines no models and no commands.
    """
    name = 'tensor_core'
    verbose_name = 'Tensor Core'
