from multilayer_gpt.inverse import invert
from multilayer_gpt.management.experiment import ExperimentCommand, usage_error
from multilayer_gpt.workbench import emit_report, read_measurements, synth


def measurements_for(experiment):
    geometry = experiment.measurement
    if geometry is None:
        raise usage_error("config needs a 'measurement' section")

    if geometry.file is None:
        return synth(experiment)

    center, radius = (0.0, 0.0), 0.0
    if experiment.structure is not None:
        center, radius = experiment.enclosing_circle()

    return read_measurements(
        geometry.file,
        background=experiment.background,
        enclosing_radius=radius,
        enclosing_center=center,
        noise_level=experiment.noise or None,
    )


class Command(ExperimentCommand):
    help = "Recover center, radii and conductivities from a measurement."

    def handle(self, *args, **options):
        experiment = options["experiment"]
        out = self.require_out(options)

        if experiment.layers is None:
            raise usage_error("set inversion.layers or give a structure")

        measurements = measurements_for(experiment)
        report = invert(measurements, experiment.layers, experiment.inversion)
        emit_report(report, out)

        x, y = report.center
        self.stdout.write(f"center = ({x:.12g}, {y:.12g})")
        self.stdout.write("radii  = " + ", ".join(f"{r:.12g}" for r in report.radii))
        self.stdout.write("sigmas = " + ", ".join(f"{s:.12g}" for s in report.sigmas))
        self.stdout.write(
            f"orders {list(report.orders)}: det L = {report.det_left:.6g}, "
            f"det R = {report.det_right:.6g}"
        )
        for warning in report.warnings:
            self.stdout.write(self.style.WARNING(f"warning: {warning}"))
        self.stdout.write(self.style.SUCCESS(f"Wrote report to {out}"))
