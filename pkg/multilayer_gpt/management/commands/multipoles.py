from multilayer_gpt.disks import multipole_spectrum
from multilayer_gpt.management.experiment import ExperimentCommand, usage_error
from multilayer_gpt.models import ConcentricDisks, ensure_valid
from multilayer_gpt.workbench import write_multipoles


class Command(ExperimentCommand):
    help = "Tabulate the multipole coefficients c_n of a concentric-disk structure."

    def handle(self, *args, **options):
        experiment = options["experiment"]
        out = self.require_out(options)

        structure = experiment.require_structure()
        if not isinstance(structure, ConcentricDisks):
            raise usage_error("multipoles needs a structure given by radii")

        orders = experiment.section("multipoles").get("orders")
        if orders is None:
            orders = range(1, experiment.inversion.n_max + 1)

        spectrum = multipole_spectrum(ensure_valid(structure), orders)
        write_multipoles(spectrum, out)

        for n, value in spectrum.rows():
            self.stdout.write(f"c_{n} = {value:.17g}")
        self.stdout.write(
            self.style.SUCCESS(f"Wrote {len(spectrum.values)} orders to {out}")
        )
