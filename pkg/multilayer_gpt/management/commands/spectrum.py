from multilayer_gpt.layer_potentials import assemble, np_spectrum
from multilayer_gpt.management.experiment import ExperimentCommand
from multilayer_gpt.workbench import write_spectrum


class Command(ExperimentCommand):
    help = "Eigenvalues of the discretized Neumann-Poincare block operator."

    def handle(self, *args, **options):
        experiment = options["experiment"]
        out = self.require_out(options)

        system = assemble(experiment.require_structure(), experiment.nodes_per_curve)
        eigenvalues = np_spectrum(system)
        write_spectrum(eigenvalues, out)

        self.stdout.write(
            f"{len(eigenvalues)} eigenvalues, real parts in "
            f"[{eigenvalues.real.min():.9g}, {eigenvalues.real.max():.9g}], "
            f"max |imag| {abs(eigenvalues.imag).max():.3g}"
        )
        self.stdout.write(self.style.SUCCESS(f"Wrote spectrum to {out}"))
