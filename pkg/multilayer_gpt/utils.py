import logging
from math import comb, factorial

import numpy as np

logger = logging.getLogger(__name__)


def power_ratio(inner, outer, n, tiny):
    """(inner/outer)^(2n) evaluated in log space; values below `tiny` flush to 0."""
    value = np.exp(2.0 * n * (np.log(inner) - np.log(outer)))
    return np.where(value < tiny, 0.0, value)


def multi_indices(max_degree, min_degree=1):
    """Multi-indices (p, q) of x^p y^q by total degree, then by descending p."""
    return [
        (degree - q, q)
        for degree in range(min_degree, max_degree + 1)
        for q in range(degree + 1)
    ]


def harmonic_coefficients(n):
    """
    Coefficients a^c_alpha, a^s_alpha with

        r^n cos(n theta) = sum a^c_alpha x^alpha
        r^n sin(n theta) = sum a^s_alpha x^alpha

    returned as {alpha: (a^c, a^s)} over |alpha| = n.
    """
    coefficients = {}
    for q in range(n + 1):
        unit = 1j**q
        weight = comb(n, q)
        coefficients[(n - q, q)] = (weight * unit.real, weight * unit.imag)
    return coefficients


def cosine_polynomial(n):
    return {alpha: ac for alpha, (ac, _) in harmonic_coefficients(n).items()}


def sine_polynomial(n):
    return {alpha: as_ for alpha, (_, as_) in harmonic_coefficients(n).items()}


def polynomial_laplacian(coefficients):
    laplacian = {}
    for (p, q), value in coefficients.items():
        if p >= 2:
            key = (p - 2, q)
            laplacian[key] = laplacian.get(key, 0.0) + p * (p - 1) * value
        if q >= 2:
            key = (p, q - 2)
            laplacian[key] = laplacian.get(key, 0.0) + q * (q - 1) * value
    return laplacian


def is_harmonic(coefficients, tol):
    scale = max((abs(v) for v in coefficients.values()), default=0.0)
    laplacian = polynomial_laplacian(coefficients)
    residual = max((abs(v) for v in laplacian.values()), default=0.0)
    return residual <= tol * max(scale, 1.0)


def monomials(points, indices):
    """Columns x^p y^q for each (p, q) in `indices`, rows per point."""
    x = points[..., 0][..., None]
    y = points[..., 1][..., None]
    p = np.array([i[0] for i in indices])
    q = np.array([i[1] for i in indices])
    return x**p * y**q


def monomial_normal_derivatives(points, normals, indices):
    """Columns nu . grad(x^p y^q)."""
    x = points[:, 0][:, None]
    y = points[:, 1][:, None]
    p = np.array([i[0] for i in indices], dtype=float)
    q = np.array([i[1] for i in indices], dtype=float)

    dx = p * x ** np.maximum(p - 1, 0) * y**q
    dy = q * x**p * y ** np.maximum(q - 1, 0)
    return normals[:, 0][:, None] * dx + normals[:, 1][:, None] * dy


def multi_factorial(alpha):
    return factorial(alpha[0]) * factorial(alpha[1])


def winding_number(polygon, points):
    """Winding number of a closed polygon (vertices in order) around each point."""
    points = np.atleast_2d(points)
    rel = polygon[None, :, :] - points[:, None, :]
    angles = np.arctan2(rel[..., 1], rel[..., 0])
    steps = np.diff(np.concatenate([angles, angles[:, :1]], axis=1), axis=1)
    steps = (steps + np.pi) % (2.0 * np.pi) - np.pi
    return np.rint(steps.sum(axis=1) / (2.0 * np.pi)).astype(int)


def polygon_is_simple(polygon):
    """True when no two non-adjacent edges of the closed polygon intersect."""
    a = polygon
    b = np.roll(polygon, -1, axis=0)
    m = len(polygon)

    def orient(p, q, r):
        return (q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1]) - (
            q[..., 1] - p[..., 1]
        ) * (r[..., 0] - p[..., 0])

    i, j = np.triu_indices(m, k=2)
    keep = ~((i == 0) & (j == m - 1))
    i, j = i[keep], j[keep]

    d1 = orient(a[i], b[i], a[j])
    d2 = orient(a[i], b[i], b[j])
    d3 = orient(a[j], b[j], a[i])
    d4 = orient(a[j], b[j], b[i])
    crossing = (d1 * d2 < 0) & (d3 * d4 < 0)
    return not bool(crossing.any())


def hadamard_bound(matrix, axis):
    return float(np.prod(np.linalg.norm(matrix, axis=axis)))


def complex_points(points):
    points = np.asarray(points, dtype=float)
    return points[..., 0] + 1j * points[..., 1]


def polynomial_value(coefficients, points):
    points = np.atleast_2d(points)
    total = np.zeros(len(points))
    for (p, q), value in coefficients.items():
        total += value * points[:, 0] ** p * points[:, 1] ** q
    return total


def polynomial_gradient(coefficients, points):
    points = np.atleast_2d(points)
    x, y = points[:, 0], points[:, 1]
    grad = np.zeros((len(points), 2))
    for (p, q), value in coefficients.items():
        if p:
            grad[:, 0] += value * p * x ** (p - 1) * y**q
        if q:
            grad[:, 1] += value * q * x**p * y ** (q - 1)
    return grad


def green_derivative(alpha, points):
    """d^alpha of G(x) = ln|x| / (2 pi) at each point (alpha != 0)."""
    p, q = alpha
    m = p + q
    z = complex_points(np.atleast_2d(points))
    value = (1j**q) * (-1) ** (m - 1) * factorial(m - 1) / z**m
    return value.real / (2.0 * np.pi)
