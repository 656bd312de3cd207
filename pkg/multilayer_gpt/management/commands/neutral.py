from math import sqrt

from multilayer_gpt.disks import hashin_shtrikman, neutral_shell_sigma
from multilayer_gpt.management.experiment import ExperimentCommand, usage_error
from multilayer_gpt.workbench import emit_json


class Command(ExperimentCommand):
    help = "Shell conductivity that makes a coated disk neutral (Hashin-Shtrikman)."
    requires_config = False

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            "--sigma2",
            type=float,
            help="Core conductivity.",
        )
        parser.add_argument(
            "--f1",
            type=float,
            help="Core area fraction r_2^2 / r_1^2, strictly between 0 and 1.",
        )
        parser.add_argument(
            "--sigma0",
            type=float,
            help="Conductivity the coated disk should mimic. Default = 1",
        )

    def handle(self, *args, **options):
        section = {}
        if options["experiment"] is not None:
            section = options["experiment"].section("neutral")

        section.setdefault("sigma0", 1.0)
        for name in ("sigma2", "f1", "sigma0"):
            if options[name] is not None:
                section[name] = options[name]
        sigma2, f1, sigma0 = (section.get(n) for n in ("sigma2", "f1", "sigma0"))

        if sigma2 is None or f1 is None:
            raise usage_error("--sigma2 and --f1 are required")

        sigma1 = neutral_shell_sigma(sigma2, f1, sigma0)
        effective = hashin_shtrikman(sigma1, sigma2, 1.0, sqrt(f1))

        self.stdout.write(f"sigma_1 = {sigma1:.17g}")
        self.stdout.write(f"sigma_0 = {effective:.17g}")

        if options.get("out"):
            emit_json(
                {"sigma0": sigma0, "sigma1": sigma1, "sigma2": sigma2, "f1": f1},
                options["out"],
            )
