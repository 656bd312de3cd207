from django.apps import AppConfig


class MultilayerGptConfig(AppConfig):
    name = "multilayer_gpt"
    verbose_name = "Multilayer GPT"

    def ready(self):
        from . import conf  # noqa
