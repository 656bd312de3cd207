import logging
from dataclasses import dataclass, field
from math import comb
from typing import Optional, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from multilayer_gpt import utils
from multilayer_gpt.conf import settings
from multilayer_gpt.constants import (
    BACKGROUND_SIGMA,
    OrderClass,
    StructureKind,
    ViolationCode,
)
from multilayer_gpt.exceptions import (
    AdjacentEqualConductivity,
    ConfigError,
    InvalidStructure,
    NonPhysicalEstimate,
)

logger = logging.getLogger(__name__)


def _floats(values):
    return tuple(float(v) for v in values)


@dataclass(frozen=True)
class Violation:
    code: ViolationCode
    index: Optional[int] = None
    message: str = ""

    def __str__(self):
        where = f" at k={self.index}" if self.index is not None else ""
        return f"{self.code.value}{where}: {self.message}"


@dataclass(frozen=True)
class Contrasts:
    lambdas: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "lambdas", _floats(self.lambdas))

    def __len__(self):
        return len(self.lambdas)

    def __iter__(self):
        return iter(self.lambdas)

    def __getitem__(self, index):
        return self.lambdas[index]

    def as_array(self):
        return np.array(self.lambdas)


@dataclass(frozen=True)
class HarmonicBackground:
    """
    Harmonic polynomial H = constant + Re sum_n A_n z^n.

    `terms` maps the order n >= 1 to the complex coefficient A_n = a_n^c - i a_n^s,
    so that the order-n part reads a_n^c r^n cos(n theta) + a_n^s r^n sin(n theta).
    """

    constant: float = 0.0
    terms: dict = field(default_factory=dict)

    def __post_init__(self):
        terms = {}
        for n, value in dict(self.terms).items():
            n = int(n)
            if n < 1:
                raise ValueError(f"harmonic order must be >= 1, got {n}")
            terms[n] = complex(value)

        object.__setattr__(self, "constant", float(self.constant))
        object.__setattr__(self, "terms", dict(sorted(terms.items())))

    @classmethod
    def from_terms(cls, terms, constant=0.0):
        """Build from (n, a^c, a^s) triples."""
        return cls(constant, {int(n): complex(ac, -as_) for n, ac, as_ in terms})

    @classmethod
    def from_power_series(
        cls, coefficients, real_part=1.0, imag_part=0.0, constant=0.0
    ):
        """
        H = real_part * Re f + imag_part * Im f for the entire function
        f(z) = sum_n b_n z^n given by `coefficients` ({n: b_n}); b_0 is dropped.
        """
        weight = complex(real_part, -imag_part)
        terms = {
            n: weight * complex(b) for n, b in dict(coefficients).items() if n >= 1
        }
        return cls(constant, terms)

    @classmethod
    def linear(cls, ax=1.0, ay=0.0):
        return cls.from_terms([(1, ax, ay)])

    @property
    def max_order(self):
        return max(self.terms, default=0)

    @property
    def orders(self):
        return [n for n, value in self.terms.items() if value != 0]

    def coefficient(self, n):
        return self.terms.get(n, 0j)

    def cosine(self, n):
        return self.coefficient(n).real

    def sine(self, n):
        return -self.coefficient(n).imag

    def evaluate(self, points):
        z = utils.complex_points(points)
        total = np.zeros(np.shape(z), dtype=complex)
        for n, value in self.terms.items():
            total += value * z**n
        return self.constant + total.real

    def gradient(self, points):
        """(dH/dx, dH/dy) = (Re f', -Im f') stacked on the last axis."""
        z = utils.complex_points(points)
        derivative = np.zeros(np.shape(z), dtype=complex)
        for n, value in self.terms.items():
            derivative += n * value * z ** (n - 1)
        return np.stack([derivative.real, -derivative.imag], axis=-1)

    def recentered(self, center):
        """Same function expanded in powers of (z - center)."""
        z0 = complex(*center)
        if z0 == 0:
            return self

        terms = {}
        for m in range(1, self.max_order + 1):
            terms[m] = sum(
                value * comb(n, m) * z0 ** (n - m)
                for n, value in self.terms.items()
                if n >= m
            )
        constant = float(self.evaluate(np.array(center, dtype=float)))
        return HarmonicBackground(constant, terms)

    def scaled(self, factor):
        return HarmonicBackground(
            factor * self.constant, {n: factor * v for n, v in self.terms.items()}
        )

    def monomial_coefficients(self):
        """Coefficients of x^p y^q (constant excluded)."""
        polynomial = {}
        for n, value in self.terms.items():
            for alpha, (ac, as_) in utils.harmonic_coefficients(n).items():
                polynomial[alpha] = polynomial.get(alpha, 0.0) + (
                    value.real * ac - value.imag * as_
                )
        return polynomial

    def to_dict(self):
        return {
            "constant": self.constant,
            "terms": [
                {"n": n, "ac": self.cosine(n), "as": self.sine(n)}
                for n in self.terms
            ],
        }

    @classmethod
    def from_dict(cls, data):
        try:
            terms = [
                (t["n"], t.get("ac", 0.0), t.get("as", 0.0))
                for t in data.get("terms", [])
            ]
            return cls.from_terms(terms, constant=data.get("constant", 0.0))
        except (AttributeError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed background: {exc}")


@dataclass(frozen=True)
class SmoothCurve:
    """
    Closed curve t -> (x(t), y(t)) given by trigonometric coefficients:

        x(t) = sum_k cos_x[k] cos(kt) + sin_x[k] sin(kt)

    and likewise for y. Counterclockwise orientation is expected.
    """

    cos_x: Tuple[float, ...]
    sin_x: Tuple[float, ...]
    cos_y: Tuple[float, ...]
    sin_y: Tuple[float, ...]
    nodes: Optional[int] = None

    def __post_init__(self):
        size = max(len(self.cos_x), len(self.sin_x), len(self.cos_y), len(self.sin_y))
        for name in ("cos_x", "sin_x", "cos_y", "sin_y"):
            values = list(_floats(getattr(self, name)))
            values += [0.0] * (size - len(values))
            object.__setattr__(self, name, tuple(values))

        if self.nodes is not None:
            object.__setattr__(self, "nodes", int(self.nodes))

    @classmethod
    def circle(cls, radius, center=(0.0, 0.0), nodes=None):
        return cls.ellipse(radius, radius, center=center, nodes=nodes)

    @classmethod
    def ellipse(cls, a, b, center=(0.0, 0.0), angle=0.0, nodes=None):
        c, s = np.cos(angle), np.sin(angle)
        return cls(
            cos_x=(center[0], a * c),
            sin_x=(0.0, -b * s),
            cos_y=(center[1], a * s),
            sin_y=(0.0, b * c),
            nodes=nodes,
        )

    @classmethod
    def from_samples(cls, x, y, modes=None, nodes=None):
        """Trigonometric interpolant of equispaced samples over one period."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        m = len(x)
        modes = (m - 1) // 2 if modes is None else modes

        def split(samples):
            spectrum = np.fft.rfft(samples) / m
            cos = 2.0 * spectrum.real[: modes + 1]
            sin = -2.0 * spectrum.imag[: modes + 1]
            cos[0] /= 2.0
            sin[0] = 0.0
            return cos, sin

        cos_x, sin_x = split(x)
        cos_y, sin_y = split(y)
        return cls(cos_x, sin_x, cos_y, sin_y, nodes=nodes)

    @property
    def degree(self):
        return len(self.cos_x) - 1

    @property
    def node_count(self):
        return self.nodes if self.nodes is not None else settings.NODES_PER_CURVE

    def with_nodes(self, nodes):
        return SmoothCurve(self.cos_x, self.sin_x, self.cos_y, self.sin_y, nodes=nodes)

    def translated(self, offset):
        cos_x = list(self.cos_x)
        cos_y = list(self.cos_y)
        cos_x[0] += offset[0]
        cos_y[0] += offset[1]
        return SmoothCurve(cos_x, self.sin_x, cos_y, self.sin_y, nodes=self.nodes)

    def parameters(self, m=None):
        m = self.node_count if m is None else m
        return 2.0 * np.pi * np.arange(m) / m

    def _series(self, cos, sin, t, order):
        k = np.arange(len(cos))
        phase = np.outer(t, k) + order * np.pi / 2.0
        scale = k.astype(float) ** order
        return (np.cos(phase) * (scale * np.array(cos))).sum(axis=1) + (
            np.sin(phase) * (scale * np.array(sin))
        ).sum(axis=1)

    def derivative(self, t=None, order=1):
        t = self.parameters() if t is None else np.atleast_1d(t)
        x = self._series(self.cos_x, self.sin_x, t, order)
        y = self._series(self.cos_y, self.sin_y, t, order)
        return np.stack([x, y], axis=-1)

    def points(self, t=None):
        return self.derivative(t, order=0)

    def speed(self, t=None):
        return np.linalg.norm(self.derivative(t), axis=-1)

    def normals(self, t=None):
        d = self.derivative(t)
        speed = np.linalg.norm(d, axis=-1)[:, None]
        return np.stack([d[:, 1], -d[:, 0]], axis=-1) / speed

    def curvature(self, t=None):
        d1 = self.derivative(t)
        d2 = self.derivative(t, order=2)
        cross = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        return cross / np.linalg.norm(d1, axis=-1) ** 3

    def weights(self, m=None):
        """Trapezoid weights |gamma'(t_j)| 2pi/m."""
        m = self.node_count if m is None else m
        return self.speed(self.parameters(m)) * 2.0 * np.pi / m

    def area(self, m=None):
        """Signed enclosed area; positive for counterclockwise curves."""
        t = self.parameters(m)
        p = self.points(t)
        d = self.derivative(t)
        integrand = p[:, 0] * d[:, 1] - p[:, 1] * d[:, 0]
        return 0.5 * integrand.mean() * 2.0 * np.pi

    def winding(self, points, m=None):
        return utils.winding_number(self.points(self.parameters(m)), points)

    def max_radius(self, center=(0.0, 0.0)):
        p = self.points(self.parameters(max(self.node_count, 4 * self.degree + 4)))
        return float(np.max(np.linalg.norm(p - np.asarray(center), axis=-1)))

    def to_dict(self):
        return {
            "cos_x": list(self.cos_x),
            "sin_x": list(self.sin_x),
            "cos_y": list(self.cos_y),
            "sin_y": list(self.sin_y),
        }


@dataclass(frozen=True)
class ConcentricDisks:
    radii: Tuple[float, ...]
    sigmas: Tuple[float, ...]
    center: Tuple[float, float] = (0.0, 0.0)

    kind = StructureKind.disks

    def __post_init__(self):
        object.__setattr__(self, "radii", _floats(self.radii))
        object.__setattr__(self, "sigmas", _floats(self.sigmas))
        object.__setattr__(self, "center", _floats(self.center))

    @classmethod
    def from_contrasts(cls, radii, lambdas, center=(0.0, 0.0)):
        return cls(radii, sigmas_from_contrasts(lambdas), center)

    @property
    def layers(self):
        return len(self.radii)

    @property
    def outer_radius(self):
        return self.radii[0]

    def translated(self, offset):
        return ConcentricDisks(
            self.radii,
            self.sigmas,
            (self.center[0] + offset[0], self.center[1] + offset[1]),
        )

    def as_shape(self, nodes=None):
        curves = tuple(
            SmoothCurve.circle(r, self.center, nodes=nodes) for r in self.radii
        )
        return LayeredShape(curves, self.sigmas)

    def to_dict(self):
        return {
            "radii": list(self.radii),
            "sigmas": list(self.sigmas),
            "center": list(self.center),
        }


@dataclass(frozen=True)
class LayeredShape:
    curves: Tuple[SmoothCurve, ...]
    sigmas: Tuple[float, ...]

    kind = StructureKind.shape

    def __post_init__(self):
        object.__setattr__(self, "curves", tuple(self.curves))
        object.__setattr__(self, "sigmas", _floats(self.sigmas))

    @property
    def layers(self):
        return len(self.curves)

    def translated(self, offset):
        curves = tuple(c.translated(offset) for c in self.curves)
        return LayeredShape(curves, self.sigmas)

    def with_nodes(self, nodes):
        curves = tuple(c.with_nodes(nodes) for c in self.curves)
        return LayeredShape(curves, self.sigmas)

    def max_radius(self, center=(0.0, 0.0)):
        return self.curves[0].max_radius(center)

    def to_dict(self):
        return {
            "curves": [c.to_dict() for c in self.curves],
            "sigmas": list(self.sigmas),
        }


def structure_from_dict(data, nodes=None):
    """Disks when `radii` is present, nested curves when `curves` is."""
    try:
        if "radii" in data:
            return ConcentricDisks(
                data["radii"], data["sigmas"], tuple(data.get("center", (0.0, 0.0)))
            )
        if "curves" in data:
            curves = [
                SmoothCurve(
                    c.get("cos_x", ()),
                    c.get("sin_x", ()),
                    c.get("cos_y", ()),
                    c.get("sin_y", ()),
                    nodes=nodes,
                )
                for c in data["curves"]
            ]
            return LayeredShape(curves, data["sigmas"])
    except (AttributeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed structure: {exc}")

    raise ConfigError("structure needs either 'radii' or 'curves'")


def contrasts_of(structure):
    return contrasts_from_sigmas(structure.sigmas)


def contrasts_from_sigmas(sigmas):
    sigmas = (BACKGROUND_SIGMA,) + tuple(sigmas)
    lambdas = []

    for k in range(1, len(sigmas)):
        outer, inner = sigmas[k - 1], sigmas[k]
        if inner == outer:
            raise AdjacentEqualConductivity(k)
        lambdas.append((inner + outer) / (2.0 * (inner - outer)))

    return Contrasts(lambdas)


def sigmas_from_contrasts(lambdas):
    """Invert the contrast map layer by layer starting from the unit background."""
    sigmas = []
    previous = BACKGROUND_SIGMA

    for k, lam in enumerate(lambdas, start=1):
        if abs(lam) <= 0.5:
            raise NonPhysicalEstimate(
                f"lambda_{k} = {lam!r} gives a non-positive conductivity"
            )
        previous = previous * (2.0 * lam + 1.0) / (2.0 * lam - 1.0)
        sigmas.append(previous)

    return tuple(sigmas)


def classify_order(background, probe_orders):
    """FULL when both a_n^c and a_n^s are nonzero for every probed order."""
    for n in probe_orders:
        if background.cosine(n) == 0 or background.sine(n) == 0:
            return OrderClass.partial
    return OrderClass.full


def _validate_sigmas(sigmas, count):
    violations = []

    if len(sigmas) != count:
        violations.append(
            Violation(
                ViolationCode.length_mismatch,
                message=f"{count} interfaces but {len(sigmas)} conductivities",
            )
        )

    previous = BACKGROUND_SIGMA
    for k, sigma in enumerate(sigmas, start=1):
        if not sigma > 0:
            violations.append(
                Violation(ViolationCode.non_positive_sigma, k, f"sigma_{k} = {sigma!r}")
            )
        elif sigma == previous:
            violations.append(
                Violation(
                    ViolationCode.adjacent_equal_conductivity,
                    k,
                    f"sigma_{k} equals sigma_{k - 1} = {previous!r}",
                )
            )
        previous = sigma

    return violations


def _validate_disks(disks):
    violations = []

    for k, r in enumerate(disks.radii, start=1):
        if not r > 0:
            violations.append(
                Violation(ViolationCode.non_positive_radius, k, f"r_{k} = {r!r}")
            )

    for k in range(1, len(disks.radii)):
        if not disks.radii[k - 1] > disks.radii[k]:
            violations.append(
                Violation(
                    ViolationCode.radii_not_decreasing,
                    k + 1,
                    f"r_{k + 1} = {disks.radii[k]!r} is not below "
                    f"r_{k} = {disks.radii[k - 1]!r}",
                )
            )

    return violations


def _validate_curves(shape):
    violations = []
    sampled = []

    for k, curve in enumerate(shape.curves, start=1):
        t = curve.parameters()
        points = curve.points(t)
        sampled.append(points)

        if np.min(curve.speed(t)) <= 0:
            violations.append(
                Violation(ViolationCode.vanishing_speed, k, "speed vanishes at a node")
            )
            continue
        if not utils.polygon_is_simple(points):
            violations.append(
                Violation(ViolationCode.curve_not_simple, k, "curve self-intersects")
            )
            continue
        if curve.area() <= 0:
            violations.append(
                Violation(
                    ViolationCode.clockwise_curve, k, "curve is not counterclockwise"
                )
            )

    for k in range(1, len(sampled)):
        outer, inner = sampled[k - 1], sampled[k]
        if np.min(cdist(outer, inner)) <= 0:
            violations.append(
                Violation(ViolationCode.curves_intersect, k + 1, "curves touch")
            )
        elif np.any(utils.winding_number(outer, inner) == 0):
            violations.append(
                Violation(
                    ViolationCode.curves_not_nested,
                    k + 1,
                    f"curve {k + 1} is not enclosed by curve {k}",
                )
            )

    return violations


def validate(structure):
    """List of invariant violations; empty when the structure is well formed."""
    count = structure.layers
    if count == 0:
        return [Violation(ViolationCode.empty_structure, message="no layers")]

    if isinstance(structure, ConcentricDisks):
        violations = _validate_disks(structure)
    else:
        violations = _validate_curves(structure)

    violations += _validate_sigmas(structure.sigmas, count)

    if violations:
        logger.debug(
            "[multilayer_gpt:validate]",
            extra={"violations": [v.code.value for v in violations]},
        )
    return violations


def ensure_valid(structure):
    violations = validate(structure)
    if violations:
        raise InvalidStructure(violations)
    return structure
