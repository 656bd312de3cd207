from multilayer_gpt.disks import cert_matrices
from multilayer_gpt.management.experiment import ExperimentCommand, usage_error
from multilayer_gpt.models import ConcentricDisks, ensure_valid
from multilayer_gpt.workbench import emit_json


class Command(ExperimentCommand):
    help = "Print det L_N and det R_N of a disk structure at the given orders."

    def handle(self, *args, **options):
        experiment = options["experiment"]
        structure = experiment.require_structure()

        if not isinstance(structure, ConcentricDisks):
            raise usage_error("certify needs a structure given by radii")

        orders = experiment.section("certify").get("orders")
        if orders is None:
            orders = range(1, structure.layers + 1)

        certificate = cert_matrices(ensure_valid(structure), list(orders))

        self.stdout.write(f"orders  = {list(certificate.orders)}")
        self.stdout.write(f"det L_N = {certificate.det_left:.17g}")
        self.stdout.write(f"det R_N = {certificate.det_right:.17g}")
        if certificate.passed():
            self.stdout.write(self.style.SUCCESS("certificates pass"))
        else:
            self.stdout.write(self.style.WARNING("certificates fail"))

        if options.get("out"):
            emit_json(certificate.to_dict(), options["out"])
