import logging

from django.core.management.base import BaseCommand, CommandError

from multilayer_gpt import __version__
from multilayer_gpt.conf import settings as app_settings
from multilayer_gpt.constants import EXIT_DOMAIN_ERROR, EXIT_USAGE_ERROR
from multilayer_gpt.exceptions import MultilayerError
from multilayer_gpt.workbench import load_config


def usage_error(message):
    """CommandError for a bad invocation; exits with the usage status."""
    return CommandError(message, returncode=EXIT_USAGE_ERROR)


class ExperimentCommand(BaseCommand):
    """
    Command that runs on an experiment config. The config's `settings`
    section is active while `handle` runs, and domain errors leave as
    CommandError with the failing stage in brackets.
    """

    requires_system_checks = []
    requires_config = True

    def get_version(self):
        return __version__

    def add_arguments(self, parser):
        parser.add_argument(
            "--config",
            help="Experiment config (JSON).",
            metavar="PATH",
        )
        parser.add_argument(
            "--out",
            help="Output file for machine-readable results.",
            metavar="PATH",
        )
        parser.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            help=(
                "Override a config entry by dotted key, e.g. inversion.n_max=10. "
                "Repeatable."
            ),
            metavar="KEY=VALUE",
        )
        parser.add_argument(
            "--seed",
            type=int,
            help="Random seed; replaces the config seed.",
        )
        parser.add_argument(
            "--verbose",
            action="store_true",
            help="Log debug messages to stderr; same as --verbosity 2.",
        )

    def load_experiment(self, options):
        path = options.get("config")
        if path is None:
            if self.requires_config:
                raise usage_error("--config is required")
            return None

        overrides = list(options.get("overrides") or [])
        if options.get("seed") is not None:
            overrides.append(f"seed={options['seed']}")
        return load_config(path, overrides)

    def require_out(self, options):
        if not options.get("out"):
            raise usage_error("--out is required")
        return options["out"]

    def execute(self, *args, **options):
        debug = options.get("verbose") or int(options.get("verbosity", 1)) > 1
        logging.basicConfig(level=logging.DEBUG if debug else logging.WARNING)

        try:
            experiment = self.load_experiment(options)
            options["experiment"] = experiment
            overrides = experiment.settings if experiment is not None else {}

            with app_settings.override(overrides):
                return super().execute(*args, **options)
        except MultilayerError as exc:
            stage = f"[{exc.stage.value}] " if exc.stage is not None else ""
            raise CommandError(f"{stage}{exc}", returncode=EXIT_DOMAIN_ERROR)
