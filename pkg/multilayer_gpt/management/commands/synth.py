from multilayer_gpt.management.experiment import ExperimentCommand
from multilayer_gpt.workbench import synth, write_measurements


class Command(ExperimentCommand):
    help = "Write a synthetic measurement file for the configured experiment."

    def handle(self, *args, **options):
        experiment = options["experiment"]
        out = self.require_out(options)

        measurements = synth(experiment)
        write_measurements(measurements, out)

        self.stdout.write(
            self.style.SUCCESS(
                f"Wrote {len(measurements)} samples "
                f"(noise {experiment.noise:g}) to {out}"
            )
        )
