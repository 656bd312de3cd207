import numpy as np

from multilayer_gpt.management.experiment import ExperimentCommand, usage_error
from multilayer_gpt.workbench import (
    boundary_densities,
    forward_values,
    write_densities,
    write_field,
)


def grid_points(experiment, grid):
    """Grid nodes outside the circle enclosing the inclusion."""
    try:
        xs = np.linspace(*grid["x"][:2], int(grid["x"][2]))
        ys = np.linspace(*grid["y"][:2], int(grid["y"][2]))
    except (KeyError, IndexError, TypeError, ValueError):
        raise usage_error(
            "forward.grid needs x and y entries of the form [start, stop, count]"
        )

    xx, yy = np.meshgrid(xs, ys, indexing="ij")
    points = np.stack([xx.ravel(), yy.ravel()], axis=1)

    center, radius = experiment.enclosing_circle()
    keep = np.linalg.norm(points - np.asarray(center), axis=1) > radius
    return points[keep]


class Command(ExperimentCommand):
    help = "Evaluate u - H on the measurement circle or on a grid."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            "--densities",
            help="Also write the boundary-integral interface densities here.",
            metavar="PATH",
        )

    def handle(self, *args, **options):
        experiment = options["experiment"]
        out = self.require_out(options)

        grid = experiment.section("forward").get("grid")
        if grid is not None:
            points = grid_points(experiment, grid)
        elif experiment.measurement is not None:
            points = experiment.measurement.points()
        else:
            raise usage_error("config needs a 'measurement' section or forward.grid")

        values = forward_values(experiment, points)
        write_field(points, values, out)

        self.stdout.write(
            self.style.SUCCESS(
                f"Wrote u - H at {len(points)} points ({experiment.solver.value}) "
                f"to {out}"
            )
        )

        if options.get("densities"):
            system, density = boundary_densities(experiment)
            write_densities(density, system.parameters, options["densities"])
            self.stdout.write(
                self.style.SUCCESS(
                    f"Wrote densities on {density.layers} interfaces "
                    f"to {options['densities']}"
                )
            )
