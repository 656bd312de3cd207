import json
from math import factorial, sqrt
from pathlib import Path

import numpy as np
import pytest

from multilayer_gpt.models import (
    ConcentricDisks,
    HarmonicBackground,
    LayeredShape,
    SmoothCurve,
)

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture()
def unit_disk():
    return ConcentricDisks((1.0,), (3.0,))


@pytest.fixture()
def three_layer():
    return ConcentricDisks((1.0, 0.6, 0.3), (2.0, 5.0, 0.5))


@pytest.fixture()
def neutral_disks():
    return ConcentricDisks((1.0, 1.0 / sqrt(2.0)), (2.0 * sqrt(3.0) - 3.0, 3.0))


@pytest.fixture()
def linear_background():
    return HarmonicBackground.linear(1.0, 0.0)


@pytest.fixture()
def full_background():
    """a_n^c = a_n^s = 2^-n for n = 1..12."""
    return HarmonicBackground.from_terms([(n, 2.0**-n, 2.0**-n) for n in range(1, 13)])


@pytest.fixture()
def alternating_background():
    """a_n^c = 2^-n, a_n^s = (-2)^-n; the phase of A_n changes with n."""
    return HarmonicBackground.from_terms(
        [(n, 2.0**-n, (-2.0) ** -n) for n in range(1, 13)]
    )


@pytest.fixture()
def exponential_background():
    """Re f for f(z) = e^z + e^((1 + i) z / 2), truncated at order 12."""
    coefficients = {
        n: (1.0 + ((1.0 + 1.0j) / 2.0) ** n) / factorial(n) for n in range(1, 13)
    }
    return HarmonicBackground.from_power_series(coefficients)


@pytest.fixture()
def ellipse_shape():
    outer = SmoothCurve.ellipse(1.0, 0.7, angle=0.3)
    inner = SmoothCurve.ellipse(0.45, 0.3, center=(0.05, -0.03), angle=-0.4)
    return LayeredShape((outer, inner), (2.5, 0.4))


def random_shapes(count, seed, sigma_low=0.2, sigma_high=6.0):
    """Nested ellipse-perturbed circles with random conductivities."""
    rng = np.random.default_rng(seed)
    shapes = []
    while len(shapes) < count:
        layers = int(rng.integers(2, 4))
        curves = []
        radius = 1.0
        for _ in range(layers):
            squash = rng.uniform(0.8, 1.0)
            curves.append(
                SmoothCurve.ellipse(
                    radius,
                    radius * squash,
                    center=tuple(rng.uniform(-0.02, 0.02, 2) * radius),
                    angle=rng.uniform(0.0, np.pi),
                )
            )
            radius *= rng.uniform(0.4, 0.5)
        sigmas = rng.uniform(sigma_low, sigma_high, layers)
        shapes.append(LayeredShape(curves, sigmas))
    return shapes


@pytest.fixture()
def experiment_data():
    return json.loads((FIXTURES / "three_layer.json").read_text())


@pytest.fixture()
def experiment_path(tmp_path, experiment_data):
    def write(data=None, name="experiment.json"):
        path = tmp_path / name
        path.write_text(json.dumps(experiment_data if data is None else data))
        return path

    return write
