"""
Closed-form engine for N concentric disks.

For an order n the generalized polarization matrix (GPM) has diagonal
-2 lambda_i, entries -1 below the diagonal and (r_j / r_i)^(2n) above it.
With Upsilon = diag(r_k^(2n)) the multipole coefficient is

    c_n = e^T Upsilon GPM^{-1} e

and outside the disks u - H = sum_n c_n Re(a_n e^{in theta}) / r^n.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np
from scipy import linalg

from multilayer_gpt import utils
from multilayer_gpt.conf import settings
from multilayer_gpt.exceptions import (
    DegenerateDenominator,
    IndexOutOfRange,
    PointInsideInclusion,
    SingularGpm,
    SingularSystem,
)
from multilayer_gpt.models import contrasts_of

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Gpm:
    order: int
    matrix: np.ndarray
    upsilon: np.ndarray
    radii: Tuple[float, ...]
    lambdas: Tuple[float, ...]

    @property
    def size(self):
        return len(self.radii)

    @property
    def ratios(self):
        """t_{i,j} = (r_j / r_i)^(2n) above the diagonal, zero elsewhere."""
        return np.triu(self.matrix, k=1)

    def _factor(self):
        lu, piv = linalg.lu_factor(self.matrix, check_finite=False)
        scale = max(np.abs(self.matrix).max(), 1.0)
        if np.min(np.abs(np.diag(lu))) < settings.PIVOT_TOL * scale:
            raise SingularGpm(f"GPM of order {self.order} is numerically singular")
        return lu, piv

    def solve(self, rhs, transpose=False):
        return linalg.lu_solve(self._factor(), rhs, trans=1 if transpose else 0)

    def adjugate(self):
        """Cofactor-based adjugate; reference value for the closed forms."""
        size = self.size
        cofactors = np.empty((size, size))
        for i in range(size):
            for j in range(size):
                minor = np.delete(np.delete(self.matrix, i, axis=0), j, axis=1)
                determinant = linalg.det(minor) if minor.size else 1.0
                cofactors[i, j] = (-1) ** (i + j) * determinant
        return cofactors.T


@dataclass(frozen=True)
class MultipoleSpectrum:
    center: Tuple[float, float]
    values: Dict[int, float]
    errors: Dict[int, float] = field(default_factory=dict)
    residual: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(
            self, "values", {int(n): float(v) for n, v in sorted(self.values.items())}
        )
        object.__setattr__(
            self, "errors", {int(n): float(v) for n, v in sorted(self.errors.items())}
        )

    @property
    def orders(self):
        return list(self.values)

    def __getitem__(self, n):
        return self.values[n]

    def __contains__(self, n):
        return n in self.values

    def error(self, n):
        return self.errors.get(n, 0.0)

    def rows(self):
        return [(n, c) for n, c in self.values.items()]


def _layers(structure):
    return tuple(structure.radii), tuple(contrasts_of(structure).lambdas)


def gpm_matrix(radii, lambdas, n):
    radii = np.asarray(radii, dtype=float)
    size = len(radii)

    matrix = np.tril(-np.ones((size, size)), k=-1)
    matrix[np.diag_indices(size)] = -2.0 * np.asarray(lambdas, dtype=float)

    i, j = np.triu_indices(size, k=1)
    matrix[i, j] = utils.power_ratio(radii[j], radii[i], n, settings.TINY_POWER)
    return matrix


def gpm_from_layers(radii, lambdas, n):
    if n < 1:
        raise IndexOutOfRange(f"order must be >= 1, got {n}")

    radii = tuple(float(r) for r in radii)
    upsilon = np.exp(2.0 * n * np.log(np.asarray(radii)))
    return Gpm(n, gpm_matrix(radii, lambdas, n), upsilon, radii, tuple(lambdas))


def gpm(structure, n):
    radii, lambdas = _layers(structure)
    return gpm_from_layers(radii, lambdas, n)


def multipole_from_layers(radii, lambdas, n):
    matrix = gpm_from_layers(radii, lambdas, n)
    y = matrix.solve(np.ones(matrix.size))
    return float(matrix.upsilon @ y)


def multipole(structure, n):
    value = multipole_from_layers(*_layers(structure), n)
    logger.debug("[multilayer_gpt:multipole]", extra={"order": n, "c_n": value})
    return value


def multipole_spectrum(structure, orders):
    radii, lambdas = _layers(structure)
    values = {n: multipole_from_layers(radii, lambdas, n) for n in orders}
    return MultipoleSpectrum(structure.center, values)


def multipole_gradient(radii, lambdas, n):
    """
    (c_n, dc_n/dlambda) using dc/dlambda_j = 2 z_j y_j, where GPM y = e and
    GPM^T z = Upsilon e.
    """
    matrix = gpm_from_layers(radii, lambdas, n)
    lu = matrix._factor()
    y = linalg.lu_solve(lu, np.ones(matrix.size))
    z = linalg.lu_solve(lu, matrix.upsilon, trans=1)
    return float(matrix.upsilon @ y), 2.0 * z * y


def density_coefficients(structure, n, a_n=1.0):
    """
    Fourier coefficients of the interface densities for the background term
    Re(a_n z^n): phi_k = -2 n a_n r_k^(n-1) y_k with GPM y = e.
    """
    matrix = gpm(structure, n)
    try:
        y = matrix.solve(np.ones(matrix.size))
    except SingularGpm as exc:
        raise SingularSystem(str(exc))

    radii = np.asarray(matrix.radii)
    phi = -2.0 * n * complex(a_n) * radii ** (n - 1) * y
    return phi if np.iscomplexobj(a_n) or isinstance(a_n, complex) else phi.real


def e_matrix(structure, n):
    """
    Interface system E phi = 2 n a_n e for the order-n density coefficients.
    Entries scale like r^(+-n); only meant for small n.
    """
    radii, lambdas = _layers(structure)
    radii = np.asarray(radii)
    size = len(radii)
    matrix = np.empty((size, size))

    for k in range(size):
        for ell in range(size):
            if ell == k:
                matrix[k, ell] = 2.0 * lambdas[k] / radii[k] ** (n - 1)
            elif ell < k:
                matrix[k, ell] = radii[ell] ** (1 - n)
            else:
                matrix[k, ell] = -radii[ell] ** (n + 1) / radii[k] ** (2 * n)
    return matrix


def f_matrix(structure, n):
    """Diagonal scaling diag(r_k^(n-1)) with e_matrix @ f_matrix == -GPM."""
    return np.diag(np.asarray(structure.radii) ** (n - 1))


def field_eval(structure, background, points):
    """(u - H) outside the disks; accepts one point or an array of points."""
    points = np.asarray(points, dtype=float)
    single = points.ndim == 1

    w = utils.complex_points(np.atleast_2d(points)) - complex(*structure.center)
    if np.any(np.abs(w) <= structure.radii[0]):
        raise PointInsideInclusion(
            f"evaluation point within radius {structure.radii[0]} of the center"
        )

    local = background.recentered(structure.center)
    radii, lambdas = _layers(structure)
    total = np.zeros(w.shape)

    for n, coefficient in local.terms.items():
        if coefficient == 0:
            continue
        c_n = multipole_from_layers(radii, lambdas, n)
        total += c_n * (coefficient / np.conj(w) ** n).real

    return float(total[0]) if single else total


def _check_indices(size, i, j):
    if not (1 <= i < j <= size + 1):
        raise IndexOutOfRange(f"need 1 <= i < j <= {size + 1}, got i={i}, j={j}")


def _ratio(radii, n, a, b):
    """(r_b / r_a)^(2n) for 1-based layer indices."""
    return float(np.exp(2.0 * n * (np.log(radii[b - 1]) - np.log(radii[a - 1]))))


def _k_table(size, n, lambdas, radii):
    table = {(i, size + 1): 1.0 for i in range(1, size + 1)}
    for j in range(size, 1, -1):
        for i in range(1, j):
            table[i, j] = (_ratio(radii, n, i, j) + 1.0) * table[j, j + 1] - (
                1.0 - 2.0 * lambdas[j - 1]
            ) * table[i, j + 1]
    return table


def _l_table(size, n, lambdas, radii):
    table = {(i, size + 1): radii[i - 1] ** (2 * n) for i in range(1, size + 1)}
    for j in range(size, 1, -1):
        for i in range(1, j):
            table[i, j] = (_ratio(radii, n, j, i) + 1.0) * table[j, j + 1] + (
                -2.0 * lambdas[j - 1] - 1.0
            ) * table[i, j + 1]
    return table


def k_term(size, i, j, n, lambdas, radii):
    _check_indices(size, i, j)
    return _k_table(size, n, lambdas, radii)[i, j]


def l_term(size, i, j, n, lambdas, radii):
    _check_indices(size, i, j)
    return _l_table(size, n, lambdas, radii)[i, j]


def _adjugate_col(radii, lambdas, n):
    size = len(radii)
    table = _k_table(size, n, lambdas, radii)
    column = np.empty(size)
    product = 1.0
    for i in range(1, size + 1):
        column[i - 1] = (-1) ** (size - i) * product * table[i, i + 1]
        product *= 1.0 - 2.0 * lambdas[i - 1]
    return column


def _adjugate_row(radii, lambdas, n):
    size = len(radii)
    table = _l_table(size, n, lambdas, radii)
    row = np.empty(size)
    product = 1.0
    for i in range(1, size + 1):
        row[i - 1] = product * table[i, i + 1]
        product *= -2.0 * lambdas[i - 1] - 1.0
    return row


def adjugate_col(structure, n):
    """GPM* e from the K recursion."""
    return _adjugate_col(*_layers(structure), n)


def adjugate_row(structure, n):
    """e^T Upsilon GPM* from the L recursion."""
    return _adjugate_row(*_layers(structure), n)


@dataclass(frozen=True, eq=False)
class Certificate:
    orders: Tuple[int, ...]
    left: np.ndarray
    right: np.ndarray
    det_left: float
    det_right: float

    @property
    def bound_left(self):
        return utils.hadamard_bound(self.left, axis=1)

    @property
    def bound_right(self):
        return utils.hadamard_bound(self.right, axis=0)

    @property
    def left_ratio(self):
        bound = self.bound_left
        return abs(self.det_left) / bound if bound > 0 else 0.0

    @property
    def right_ratio(self):
        bound = self.bound_right
        return abs(self.det_right) / bound if bound > 0 else 0.0

    def passed(self, tol=None):
        tol = settings.CERTIFICATE_TOL if tol is None else tol
        return self.left_ratio > tol and self.right_ratio > tol

    def to_dict(self):
        return {
            "orders": list(self.orders),
            "det_left": self.det_left,
            "det_right": self.det_right,
            "left_ratio": self.left_ratio,
            "right_ratio": self.right_ratio,
        }


def cert_matrices_from_layers(radii, lambdas, orders):
    orders = tuple(int(n) for n in orders)
    if len(orders) != len(radii) or any(a >= b for a, b in zip(orders, orders[1:])):
        raise IndexOutOfRange(
            f"need {len(radii)} strictly increasing orders, got {list(orders)}"
        )

    left = np.array([_adjugate_row(radii, lambdas, n) for n in orders])
    right = np.array([_adjugate_col(radii, lambdas, n) for n in orders]).T
    return Certificate(
        orders, left, right, float(linalg.det(left)), float(linalg.det(right))
    )


def cert_matrices(structure, orders):
    certificate = cert_matrices_from_layers(*_layers(structure), orders)
    logger.debug(
        "[multilayer_gpt:cert_matrices]",
        extra={
            "orders": certificate.orders,
            "det_left": certificate.det_left,
            "det_right": certificate.det_right,
        },
    )
    return certificate


def closed_form_det_r3(radii, lambdas):
    """det R_3 at orders (1, 2, 3)."""
    r1, r2, r3 = (r * r for r in radii)
    l1, l2, l3 = lambdas
    factor = -l3 * r1 * r2 * r3 - l2 * r1 * r3**2 + l3 * r2**3 + l2 * r3**3
    return (
        -2.0
        * r3
        * (2 * l1 - 1) ** 2
        * (2 * l2 - 1)
        * (r1 - r2)
        * (r2 - r3)
        * factor
        / (r1**3 * r2**3)
    )


def closed_form_det_l3(radii, lambdas):
    """det L_3 at orders (1, 2, 3)."""
    r1, r2, r3 = (r * r for r in radii)
    l1, l2, l3 = lambdas
    factor = (
        4 * l2 * l3 * r1 * r2 + r1 * r3**3 / r2**2 - 4 * l2 * l3 * r2 * r3 - r3**2
    )
    return (
        -2.0
        * l3
        * r1
        * r3
        * (2 * l1 + 1) ** 2
        * (2 * l2 + 1)
        * (r1 - r2)
        * (r2 - r3)
        * factor
    )


def r3_vanishing_lambda3(radii, lambda2):
    """lambda_3 at which the closed form of det R_3 vanishes."""
    r1, r2, r3 = (r * r for r in radii)
    return lambda2 * r3**2 * (r1 - r3) / (r2 * (r2**2 - r1 * r3))


def hashin_shtrikman(sigma1, sigma2, r1, r2):
    """Coated disk: core sigma2 of radius r2 inside a shell sigma1 of radius r1."""
    f1 = r2**2 / r1**2
    f2 = 1.0 - f1
    denominator = 2.0 * sigma1 + f2 * (sigma2 - sigma1)
    if denominator == 0:
        raise DegenerateDenominator("2 sigma_1 + f_2 (sigma_2 - sigma_1) vanishes")
    return sigma1 + 2.0 * sigma1 * f1 * (sigma2 - sigma1) / denominator


def neutral_shell_sigma(sigma2, f1, sigma0=1.0):
    """
    Shell conductivity sigma_1 that makes a coated disk look like the
    background sigma0: the positive root of

        f2 s^2 + (1 + f1)(sigma2 - sigma0) s - sigma0 f2 sigma2 = 0
    """
    f2 = 1.0 - f1
    if not 0 < f1 < 1:
        raise DegenerateDenominator(f"volume fraction must lie in (0, 1), got {f1}")

    b = (1.0 + f1) * (sigma2 - sigma0)
    c = -sigma0 * f2 * sigma2
    root = np.sqrt(b * b - 4.0 * f2 * c)
    # the roots have opposite signs; pick the stable form of the positive one
    if b >= 0:
        return float(-2.0 * c / (b + root))
    return float((-b + root) / (2.0 * f2))
