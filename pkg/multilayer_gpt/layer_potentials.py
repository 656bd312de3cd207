"""
Nystrom discretization of the multi-interface transmission problem.

Every interface is sampled at equispaced parameter nodes and integrated with
the periodic trapezoid rule. The block operator K*_A has the Neumann-Poincare
operators of each interface on its diagonal and the normal derivatives of the
single layer potentials of the other interfaces off the diagonal; the
diagonal kernel values of K* are replaced by their curvature limit.
"""
import logging
from dataclasses import dataclass
from functools import cached_property
from math import factorial
from typing import List, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import linalg

from multilayer_gpt import utils
from multilayer_gpt.conf import settings
from multilayer_gpt.disks import density_coefficients
from multilayer_gpt.exceptions import (
    CurveTooCoarse,
    NonHarmonicCoefficients,
    PointInsideInclusion,
    SingularSystem,
)
from multilayer_gpt.models import (
    ConcentricDisks,
    HarmonicBackground,
    contrasts_of,
    ensure_valid,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class BlockNpSystem:
    shape: object
    lambdas: Tuple[float, ...]
    nodes_per_curve: int
    parameters: np.ndarray
    points: np.ndarray
    normals: np.ndarray
    speeds: np.ndarray
    weights: np.ndarray
    curvatures: np.ndarray
    kernel: np.ndarray

    @property
    def layers(self):
        return len(self.lambdas)

    @property
    def size(self):
        return len(self.points)

    def block(self, k):
        m = self.nodes_per_curve
        return slice(k * m, (k + 1) * m)

    @cached_property
    def matrix(self):
        """I^lambda - K*_A."""
        diagonal = np.repeat(np.asarray(self.lambdas), self.nodes_per_curve)
        return np.diag(diagonal) - self.kernel

    @cached_property
    def factorization(self):
        lu, piv = linalg.lu_factor(self.matrix, check_finite=False)
        scale = np.linalg.norm(self.matrix, ord=np.inf)
        smallest = np.min(np.abs(np.diag(lu)))
        if smallest < settings.PIVOT_TOL * scale:
            raise SingularSystem(
                f"pivot {smallest:.3e} below {settings.PIVOT_TOL} x matrix norm "
                f"{scale:.3e}"
            )
        return lu, piv

    def project_zero_mean(self, values):
        """Remove the weighted mean of each interface block (columnwise)."""
        values = np.array(values, dtype=float, copy=True)
        for k in range(self.layers):
            block = self.block(k)
            w = self.weights[block]
            mean = w @ values[block] / w.sum()
            values[block] -= mean
        return values

    def solve(self, rhs):
        solution = linalg.lu_solve(self.factorization, rhs, check_finite=False)
        return self.project_zero_mean(solution)


@dataclass(frozen=True, eq=False)
class DensityField:
    values: np.ndarray
    nodes_per_curve: int

    @property
    def layers(self):
        return len(self.values) // self.nodes_per_curve

    def interface(self, k):
        m = self.nodes_per_curve
        return self.values[k * m : (k + 1) * m]

    def rows(self, parameters):
        """(interface, parameter, value) rows, interfaces numbered from 1."""
        return [
            (k + 1, float(t), float(v))
            for k in range(self.layers)
            for t, v in zip(parameters[: self.nodes_per_curve], self.interface(k))
        ]


@dataclass(frozen=True, eq=False)
class GptTable:
    indices: List[Tuple[int, int]]
    values: np.ndarray
    max_degree: int

    def __getitem__(self, key):
        alpha, beta = key
        return float(self.values[self.position(alpha), self.position(beta)])

    def position(self, alpha):
        return self.indices.index(tuple(alpha))

    def vector(self, coefficients):
        vector = np.zeros(len(self.indices))
        for alpha, value in coefficients.items():
            if sum(alpha) == 0:
                continue
            if sum(alpha) > self.max_degree:
                raise ValueError(
                    f"degree of {alpha} exceeds table degree {self.max_degree}"
                )
            vector[self.position(alpha)] += value
        return vector

    def contract(self, a, b):
        """sum_{alpha, beta} a_alpha b_beta M_{alpha beta}."""
        return float(self.vector(a) @ self.values @ self.vector(b))

    def rows(self):
        return [
            (alpha[0], alpha[1], beta[0], beta[1], float(self.values[i, j]))
            for i, alpha in enumerate(self.indices)
            for j, beta in enumerate(self.indices)
        ]


@dataclass(frozen=True, eq=False)
class CgptBlock:
    cc: np.ndarray
    cs: np.ndarray
    sc: np.ndarray
    ss: np.ndarray

    @property
    def order(self):
        return self.cc.shape[0]

    def disk_multipoles(self):
        """c_n = -M^cc_nn / (2 pi n), valid for concentric disks about the origin."""
        return {
            n: float(-self.cc[n - 1, n - 1] / (2.0 * np.pi * n))
            for n in range(1, self.order + 1)
        }


def _check_resolution(shape, m):
    if m < settings.MIN_NODES or m % 2:
        raise CurveTooCoarse(
            f"need an even node count of at least {settings.MIN_NODES}, got {m}"
        )

    for k, curve in enumerate(shape.curves, start=1):
        coarse = curve.weights(m).sum()
        fine = curve.weights(2 * m).sum()
        error = abs(coarse - fine) / fine
        if error > settings.QUADRATURE_TOL:
            raise CurveTooCoarse(
                f"curve {k}: perimeter changes by {error:.2e} "
                f"between {m} and {2 * m} nodes"
            )


def assemble(shape, nodes_per_curve=None):
    if isinstance(shape, ConcentricDisks):
        shape = shape.as_shape()

    ensure_valid(shape)
    m = settings.NODES_PER_CURVE if nodes_per_curve is None else int(nodes_per_curve)
    _check_resolution(shape, m)

    lambdas = contrasts_of(shape).lambdas
    parameters = shape.curves[0].parameters(m)

    points = np.concatenate([c.points(parameters) for c in shape.curves])
    normals = np.concatenate([c.normals(parameters) for c in shape.curves])
    speeds = np.concatenate([c.speed(parameters) for c in shape.curves])
    curvatures = np.concatenate([c.curvature(parameters) for c in shape.curves])
    weights = speeds * 2.0 * np.pi / m

    diff = points[:, None, :] - points[None, :, :]
    distance2 = np.einsum("ijk,ijk->ij", diff, diff)
    np.fill_diagonal(distance2, 1.0)
    numerator = np.einsum("ijk,ik->ij", diff, normals)

    kernel = numerator / (2.0 * np.pi * distance2) * weights[None, :]
    kernel[np.diag_indices_from(kernel)] = curvatures * weights / (4.0 * np.pi)

    logger.debug(
        "[multilayer_gpt:assemble]",
        extra={"layers": len(lambdas), "nodes_per_curve": m, "size": len(points)},
    )
    return BlockNpSystem(
        shape,
        lambdas,
        m,
        parameters,
        points,
        normals,
        speeds,
        weights,
        curvatures,
        kernel,
    )


def solve_densities(system, background):
    rhs = np.einsum("ij,ij->i", system.normals, background.gradient(system.points))
    density = DensityField(system.solve(rhs), system.nodes_per_curve)

    logger.debug(
        "[multilayer_gpt:solve_densities]",
        extra={"size": system.size, "norm": float(np.linalg.norm(density.values))},
    )
    return density


def gpt(system, max_degree):
    if max_degree < 1:
        raise ValueError(f"max_degree must be >= 1, got {max_degree}")

    indices = utils.multi_indices(max_degree)
    rhs = utils.monomial_normal_derivatives(system.points, system.normals, indices)
    densities = system.solve(rhs)
    moments = utils.monomials(system.points, indices)

    values = moments.T @ (system.weights[:, None] * densities)
    logger.debug(
        "[multilayer_gpt:gpt]", extra={"max_degree": max_degree, "entries": values.size}
    )
    return GptTable(indices, values, max_degree)


def cgpt_from_table(table, order):
    blocks = {name: np.zeros((order, order)) for name in ("cc", "cs", "sc", "ss")}
    harmonic = {n: utils.harmonic_coefficients(n) for n in range(1, order + 1)}

    def contraction(m, n, first, second):
        a = {alpha: pair[first] for alpha, pair in harmonic[m].items()}
        b = {beta: pair[second] for beta, pair in harmonic[n].items()}
        return table.contract(a, b)

    for m in range(1, order + 1):
        for n in range(1, order + 1):
            blocks["cc"][m - 1, n - 1] = contraction(m, n, 0, 0)
            blocks["cs"][m - 1, n - 1] = contraction(m, n, 0, 1)
            blocks["sc"][m - 1, n - 1] = contraction(m, n, 1, 0)
            blocks["ss"][m - 1, n - 1] = contraction(m, n, 1, 1)

    return CgptBlock(**blocks)


def cgpt(system, order):
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    return cgpt_from_table(gpt(system, order), order)


def first_order_tensor(table):
    e1, e2 = (1, 0), (0, 1)
    return np.array(
        [[table[e1, e1], table[e1, e2]], [table[e2, e1], table[e2, e2]]]
    )


def far_field_eval(system, densities, points):
    """(u - H) = sum_k S_k[phi_k] by direct quadrature; one point or an array."""
    points = np.asarray(points, dtype=float)
    single = points.ndim == 1
    targets = np.atleast_2d(points)

    outer = system.points[system.block(0)]
    inside = utils.winding_number(outer, targets) != 0
    if np.any(inside):
        raise PointInsideInclusion(
            f"{int(inside.sum())} evaluation point(s) inside the outer interface"
        )

    diff = targets[:, None, :] - system.points[None, :, :]
    log_distance = 0.5 * np.log(np.einsum("ijk,ijk->ij", diff, diff))
    values = log_distance @ (densities.values * system.weights) / (2.0 * np.pi)
    return float(values[0]) if single else values


def far_field_series(table, background, points):
    """
    Truncated multipolar expansion of u - H from a GPT table:

        sum (-1)^|alpha| / (alpha! beta!) d^alpha G(x) M_{alpha beta} d^beta H(0)
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    total = np.zeros(len(points))

    derivatives = {}
    for beta in table.indices:
        m = sum(beta)
        value = 1j ** beta[1] * factorial(m) * background.coefficient(m)
        derivatives[beta] = value.real

    for i, alpha in enumerate(table.indices):
        green = utils.green_derivative(alpha, points)
        sign = (-1) ** sum(alpha) / utils.multi_factorial(alpha)
        for j, beta in enumerate(table.indices):
            if derivatives[beta] == 0:
                continue
            total += (
                sign
                * green
                * table.values[i, j]
                * derivatives[beta]
                / utils.multi_factorial(beta)
            )
    return total


def np_spectrum(system):
    """Eigenvalues of the discretized K*_A, sorted by real part."""
    eigenvalues = linalg.eigvals(system.kernel, check_finite=False)
    order = np.lexsort((eigenvalues.imag, eigenvalues.real))
    return eigenvalues[order]


def _coefficients(value):
    if isinstance(value, HarmonicBackground):
        return value.monomial_coefficients()
    return {tuple(alpha): float(v) for alpha, v in dict(value).items()}


def _harmonic(coefficients):
    if not utils.is_harmonic(coefficients, settings.HARMONIC_TOL):
        raise NonHarmonicCoefficients(f"polynomial {coefficients} is not harmonic")
    return coefficients


def _degree(*coefficient_sets):
    return max(
        (sum(alpha) for coefficients in coefficient_sets for alpha in coefficients),
        default=1,
    )


def check_symmetry(system, pairs, table=None):
    """Largest |sum a_alpha b_beta (M_{alpha beta} - M_{beta alpha})| over the pairs."""
    pairs = [
        (_harmonic(_coefficients(a)), _harmonic(_coefficients(b))) for a, b in pairs
    ]
    if table is None:
        table = gpt(system, _degree(*[c for pair in pairs for c in pair]))

    asymmetry = 0.0
    for a, b in pairs:
        asymmetry = max(asymmetry, abs(table.contract(a, b) - table.contract(b, a)))

    logger.debug("[multilayer_gpt:check_symmetry]", extra={"asymmetry": asymmetry})
    return asymmetry


def boundary_energies(system, coefficients):
    """
    integral of |grad f|^2 over each layer A_k, through the Green identity
    int_{inside Gamma_k} |grad f|^2 = oint_{Gamma_k} f df/dnu ds.
    """
    inside = []
    for k in range(system.layers):
        block = system.block(k)
        points = system.points[block]
        value = utils.polynomial_value(coefficients, points)
        gradient = utils.polynomial_gradient(coefficients, points)
        flux = np.einsum("ij,ij->i", gradient, system.normals[block])
        inside.append(float(np.sum(value * flux * system.weights[block])))

    inside.append(0.0)
    return np.array([inside[k] - inside[k + 1] for k in range(system.layers)])


def disk_energies(disks, coefficients, radial_nodes=32, angular_nodes=None):
    """Same layer energies for concentric disks by polar tensor-product quadrature."""
    angular_nodes = settings.NODES_PER_CURVE if angular_nodes is None else angular_nodes
    theta = 2.0 * np.pi * np.arange(angular_nodes) / angular_nodes
    nodes, weights = leggauss(radial_nodes)

    radii = list(disks.radii) + [0.0]
    energies = []
    for k in range(disks.layers):
        outer, inner = radii[k], radii[k + 1]
        r = 0.5 * (outer - inner) * nodes + 0.5 * (outer + inner)
        wr = 0.5 * (outer - inner) * weights * r

        rr, tt = np.meshgrid(r, theta, indexing="ij")
        points = np.stack(
            [disks.center[0] + rr * np.cos(tt), disks.center[1] + rr * np.sin(tt)],
            axis=-1,
        ).reshape(-1, 2)
        grad = utils.polynomial_gradient(coefficients, points)
        density = np.einsum("ij,ij->i", grad, grad).reshape(rr.shape)

        energies.append(float(wr @ density.sum(axis=1) * 2.0 * np.pi / angular_nodes))
    return np.array(energies)


def layer_energies(structure, coefficients, system=None):
    coefficients = _coefficients(coefficients)
    if isinstance(structure, ConcentricDisks):
        return disk_energies(structure, coefficients)
    if system is None:
        system = assemble(structure)
    return boundary_energies(system, coefficients)


def check_positivity(system, coefficients, energies=None, table=None):
    """
    (s - L, U - s) for the quadratic form s = sum a_alpha a_beta M_{alpha beta}
    and the layer-energy bounds

        L = sum_k (sigma_k - 1) / sigma_k E_k,  U = sum_k (sigma_k - 1) E_k
    """
    coefficients = _harmonic(_coefficients(coefficients))
    if table is None:
        table = gpt(system, _degree(coefficients))
    if energies is None:
        energies = boundary_energies(system, coefficients)

    sigmas = np.asarray(system.shape.sigmas)
    form = table.contract(coefficients, coefficients)
    lower = float(np.sum((sigmas - 1.0) / sigmas * energies))
    upper = float(np.sum((sigmas - 1.0) * energies))

    logger.debug(
        "[multilayer_gpt:check_positivity]",
        extra={"form": form, "lower": lower, "upper": upper},
    )
    return form - lower, upper - form


def density_reference(disks, background, system):
    """Nodewise densities of concentric disks from the closed-form coefficients."""
    local = background.recentered(disks.center)
    values = np.zeros(system.size)
    theta = system.parameters
    for n, coefficient in local.terms.items():
        phi = density_coefficients(disks, n, coefficient)
        for k in range(disks.layers):
            values[system.block(k)] += (phi[k] * np.exp(1j * n * theta)).real
    return DensityField(values, system.nodes_per_curve)
