import os
import sys
from importlib import import_module

import django
from django.conf import settings as dj_settings
from django.core.management.base import (
    CommandError,
    CommandParser,
    handle_default_options,
)

from multilayer_gpt import __version__
from multilayer_gpt.constants import EXIT_OK, EXIT_USAGE_ERROR

PROG = "mlgpt"

APP = "multilayer_gpt"

COMMANDS = (
    "forward",
    "gpt",
    "spectrum",
    "multipoles",
    "invert",
    "certify",
    "neutral",
    "synth",
)


def setup(argv=()):
    """
    Configure a minimal Django project unless one is already set up.
    ``--settings`` and ``--pythonpath`` in `argv` are honoured first.
    """
    parser = CommandParser(add_help=False, allow_abbrev=False)
    parser.add_argument("--settings")
    parser.add_argument("--pythonpath")
    parser.add_argument("args", nargs="*")
    try:
        options, _ = parser.parse_known_args(argv)
        handle_default_options(options)
    except CommandError:
        pass  # the command's own parser reports it

    if not dj_settings.configured and "DJANGO_SETTINGS_MODULE" not in os.environ:
        dj_settings.configure(INSTALLED_APPS=[APP])
    django.setup()


def load_command_class(name):
    module = import_module(f"{APP}.management.commands.{name}")
    return module.Command


def synopsis():
    lines = [f"usage: {PROG} <command> [options]", "", "commands:"]
    for name in COMMANDS:
        lines.append(f"  {name:<12}{load_command_class(name).help}")
    lines.append("")
    lines.append(f"Run '{PROG} <command> --help' for the options of a command.")
    return "\n".join(lines) + "\n"


def main(argv=None, stdout=None, stderr=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr

    if argv and argv[0] in ("-h", "--help"):
        stdout.write(synopsis())
        return EXIT_OK
    if argv and argv[0] == "--version":
        stdout.write(f"{PROG} {__version__}\n")
        return EXIT_OK

    if not argv or argv[0] not in COMMANDS:
        stderr.write(synopsis())
        if argv:
            stderr.write(f"{PROG}: error: unknown command {argv[0]!r}\n")
        return EXIT_USAGE_ERROR

    setup(argv[1:])
    command = load_command_class(argv[0])(stdout=stdout, stderr=stderr)
    try:
        command.run_from_argv([PROG, *argv])
    except SystemExit as exc:
        return EXIT_OK if exc.code is None else exc.code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
