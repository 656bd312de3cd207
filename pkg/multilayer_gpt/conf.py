from django.conf import settings as dj_settings
from django.core.signals import setting_changed
from django.test.utils import override_settings

from multilayer_gpt.exceptions import ConfigError

PREFIX = "MULTILAYER_GPT_"

DEFAULTS = {
    "NODES_PER_CURVE": 256,
    "MIN_NODES": 16,
    "QUADRATURE_TOL": 1e-8,
    "PIVOT_TOL": 1e-13,
    "ZERO_MEAN_TOL": 1e-10,
    "HARMONIC_TOL": 1e-10,
    "TINY_POWER": 1e-300,
    "FIT_CONDITION_MAX": 1e12,
    "CERTIFICATE_TOL": 1e-10,
    "CERTIFICATE_MAX_COMBINATIONS": 20,
    "PEEL_SIGNIFICANCE": 10.0,
    "RELATIVE_FLOOR": 1e-12,
    "RESIDUAL_FLOOR": 1e-10,
    "MISFIT_FACTOR": 100.0,
    "MISFIT_FLOOR": 1e-6,
    "MAX_ITERATIONS": 200,
    "MEASUREMENT_MARGIN": 1.05,
}


def coerce_setting(setting, value):
    default = DEFAULTS[setting]

    try:
        if isinstance(default, int):
            if float(value) != int(value):
                raise ValueError(value)
            return int(value)
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"setting {setting} expects a number, got {value!r}")


class Settings(object):
    def __getattr__(self, name):
        if name not in DEFAULTS:
            msg = "'%s' object has no attribute '%s'"
            raise AttributeError(msg % (self.__class__.__name__, name))

        value = self.get_setting(name)

        # Cache the result
        setattr(self, name, value)
        return value

    def get_setting(self, setting):
        if not dj_settings.configured:
            return DEFAULTS[setting]

        django_setting = f"{PREFIX}{setting}"
        value = getattr(dj_settings, django_setting, DEFAULTS[setting])
        return coerce_setting(setting, value)

    def change_setting(self, setting, value, enter, **kwargs):
        if not setting.startswith(PREFIX):
            return

        setting = setting[len(PREFIX) :]  # strip 'MULTILAYER_GPT_'

        # ensure a valid app setting is being overridden
        if setting not in DEFAULTS:
            return

        # if exiting, delete value to repopulate
        if enter:
            setattr(self, setting, coerce_setting(setting, value))
        else:
            self.__dict__.pop(setting, None)

    def override(self, mapping=None, **values):
        """
        Django `override_settings` for app settings named without the prefix,
        e.g. ``override(pivot_tol=1e-12)``. Unknown names raise ConfigError.
        """
        values = {**(mapping or {}), **values}

        prefixed = {}
        for setting, value in values.items():
            setting = setting.upper()
            if setting not in DEFAULTS:
                raise ConfigError(f"unknown setting {setting}")
            prefixed[f"{PREFIX}{setting}"] = coerce_setting(setting, value)

        return override_settings(**prefixed)


settings = Settings()
setting_changed.connect(settings.change_setting)
