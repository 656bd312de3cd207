from pathlib import Path

from multilayer_gpt.layer_potentials import (
    assemble,
    cgpt_from_table,
    first_order_tensor,
    gpt,
)
from multilayer_gpt.management.experiment import ExperimentCommand
from multilayer_gpt.workbench import write_cgpt, write_gpt_table


def cgpt_path(out):
    out = Path(out)
    return out.with_name(f"{out.stem}_cgpt{out.suffix or '.csv'}")


class Command(ExperimentCommand):
    help = "Compute GPT and contracted GPT tables with the boundary-integral solver."

    def handle(self, *args, **options):
        experiment = options["experiment"]
        out = self.require_out(options)

        section = experiment.section("gpt")
        max_degree = int(section.get("max_degree", 2))
        order = int(section.get("order", max_degree))

        system = assemble(experiment.require_structure(), experiment.nodes_per_curve)
        table = gpt(system, max(max_degree, order))
        write_gpt_table(table, out)
        write_cgpt(cgpt_from_table(table, order), cgpt_path(out))

        tensor = first_order_tensor(table)
        self.stdout.write(f"M = [[{tensor[0, 0]:.12g}, {tensor[0, 1]:.12g}],")
        self.stdout.write(f"     [{tensor[1, 0]:.12g}, {tensor[1, 1]:.12g}]]")
        self.stdout.write(
            self.style.SUCCESS(f"Wrote GPTs up to degree {table.max_degree} to {out}")
        )
