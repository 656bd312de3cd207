"""
Reconstruction of concentric layered disks from one boundary measurement.

The pipeline locates the center, extracts the multipole coefficients c_n
about it, peels radii off the high-order tail of c_n and refines them, then
solves for the contrasts at N chosen orders. A last joint fit on the raw
samples polishes every parameter before the L/R certificates are checked.
"""
import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import linalg, optimize

from multilayer_gpt import utils
from multilayer_gpt.conf import settings
from multilayer_gpt.constants import Stage
from multilayer_gpt.disks import (
    MultipoleSpectrum,
    cert_matrices_from_layers,
    field_eval,
    multipole_from_layers,
    multipole_gradient,
)
from multilayer_gpt.exceptions import (
    CertificateFailed,
    ConfigError,
    DegenerateDipole,
    GeometryConflict,
    IllConditionedFit,
    MultilayerError,
    NewtonDiverged,
    NoConvergence,
    NonPhysicalEstimate,
    PeelExhausted,
    SingularGpm,
)
from multilayer_gpt.models import (
    ConcentricDisks,
    HarmonicBackground,
    contrasts_from_sigmas,
    sigmas_from_contrasts,
)

logger = logging.getLogger(__name__)

_PENALTY = 1e60
_RATIO_EDGE = 1e-12
_NOISE_MARGIN = 3.0
_REFINEMENT_STARTS = 3


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    points: np.ndarray
    values: np.ndarray
    background: Optional[HarmonicBackground] = None
    tabulated: Optional[np.ndarray] = None
    enclosing_radius: float = 0.0
    enclosing_center: Tuple[float, float] = (0.0, 0.0)
    noise_level: Optional[float] = None

    def __post_init__(self):
        points = np.atleast_2d(np.asarray(self.points, dtype=float))
        values = np.asarray(self.values, dtype=float)
        if points.shape != (len(values), 2):
            raise GeometryConflict(
                f"{len(points)} sample points but {len(values)} measured values"
            )

        object.__setattr__(self, "points", points)
        object.__setattr__(self, "values", values)
        if self.tabulated is not None:
            tabulated = np.asarray(self.tabulated, dtype=float)
            object.__setattr__(self, "tabulated", tabulated)

        distance = np.linalg.norm(points - np.asarray(self.enclosing_center), axis=1)
        if len(points) and np.min(distance) <= self.enclosing_radius:
            raise GeometryConflict(
                f"sample point within the enclosing radius {self.enclosing_radius}"
            )

    def __len__(self):
        return len(self.values)

    def background_values(self):
        if self.tabulated is not None:
            return self.tabulated
        return self.require_background().evaluate(self.points)

    def perturbation(self):
        """u - H at the sample points."""
        return self.values - self.background_values()

    def require_background(self):
        if self.background is None:
            raise ConfigError(
                "inversion needs background coefficients, not only H samples"
            )
        return self.background

    def translated(self, offset):
        offset = np.asarray(offset, dtype=float)
        background = self.background
        if background is not None:
            background = background.recentered(tuple(-offset))
        return MeasurementSet(
            self.points + offset,
            self.values,
            background,
            self.tabulated,
            self.enclosing_radius,
            tuple(np.asarray(self.enclosing_center) + offset),
            self.noise_level,
        )


@dataclass(frozen=True)
class InversionOptions:
    n_max: int = 12
    orders: Optional[Tuple[int, ...]] = None
    center: Optional[Tuple[float, float]] = None
    search_box: Optional[Tuple[float, float, float, float]] = None
    grid: int = 5
    ridge: float = 0.0
    refine: bool = True

    @classmethod
    def from_dict(cls, data):
        data = dict(data or {})
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown inversion options: {sorted(unknown)}")
        for key in ("orders", "center", "search_box"):
            if data.get(key) is not None:
                data[key] = tuple(data[key])
        return cls(**data)


@dataclass(frozen=True)
class RadiiEstimate:
    radii: Tuple[float, ...]
    sigmas: Tuple[float, ...]
    peeled_radii: Tuple[float, ...]
    peeled_sigmas: Tuple[float, ...]
    residual: float
    repaired: bool = False
    converged: bool = True


@dataclass(frozen=True)
class CenterEstimate:
    center: Tuple[float, float]
    residual: float
    converged: bool = True


@dataclass(frozen=True)
class StructureFit:
    """Joint fit of center, radii and conductivities on the raw samples."""

    center: Tuple[float, float]
    radii: Tuple[float, ...]
    sigmas: Tuple[float, ...]
    residual: float
    converged: bool


@dataclass(frozen=True, eq=False)
class SigmaEstimate:
    sigmas: Tuple[float, ...]
    lambdas: Tuple[float, ...]
    orders: Tuple[int, ...]
    certificate: object
    attempts: int
    residual: float = 0.0
    converged: bool = True


@dataclass(frozen=True)
class InverseReport:
    center: Tuple[float, float]
    radii: Tuple[float, ...]
    sigmas: Tuple[float, ...]
    residuals: Dict[int, float]
    orders: Tuple[int, ...]
    det_left: float
    det_right: float
    certificates_passed: bool
    converged: Dict[str, bool]
    misfit: bool
    multipoles: Dict[int, float] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)

    @property
    def max_residual(self):
        return max((abs(v) for v in self.residuals.values()), default=0.0)

    def to_dict(self):
        return {
            "center": list(self.center),
            "radii": list(self.radii),
            "sigmas": list(self.sigmas),
            "residuals": {str(n): v for n, v in self.residuals.items()},
            "orders": list(self.orders),
            "det_left": self.det_left,
            "det_right": self.det_right,
            "certificates_passed": self.certificates_passed,
            "converged": dict(self.converged),
            "misfit": self.misfit,
            "multipoles": {str(n): v for n, v in self.multipoles.items()},
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            center=tuple(data["center"]),
            radii=tuple(data["radii"]),
            sigmas=tuple(data["sigmas"]),
            residuals={int(n): float(v) for n, v in data["residuals"].items()},
            orders=tuple(data["orders"]),
            det_left=float(data["det_left"]),
            det_right=float(data["det_right"]),
            certificates_passed=bool(data["certificates_passed"]),
            converged={str(k): bool(v) for k, v in data["converged"].items()},
            misfit=bool(data["misfit"]),
            multipoles={
                int(n): float(v) for n, v in data.get("multipoles", {}).items()
            },
            warnings=list(data.get("warnings", [])),
        )


def _multipole_columns(points, background, center, orders):
    """Columns Re(B_n / conj(x - center)^n) for the re-expanded background."""
    local = background.recentered(center)
    w = utils.complex_points(points) - complex(*center)
    return np.stack(
        [(local.coefficient(n) / np.conj(w) ** n).real for n in orders], axis=1
    )


def extract_multipoles(measurements, center, n_max, ridge=0.0):
    """
    Least-squares fit of u - H = sum_n c_n Re(B_n e^{in theta}) / r^n about
    `center`, with per-order standard errors.
    """
    if n_max < 1:
        raise IllConditionedFit(f"n_max must be >= 1, got {n_max}")
    if len(measurements) < 2 * n_max + 1:
        raise IllConditionedFit(
            f"{len(measurements)} samples cannot resolve {n_max} orders"
        )

    background = measurements.require_background().recentered(center)
    orders = [n for n in range(1, n_max + 1) if background.coefficient(n) != 0]
    if not orders:
        raise IllConditionedFit(
            "background has no term of order 1..n_max about the center"
        )

    design = _multipole_columns(
        measurements.points, measurements.background, center, orders
    )
    data = measurements.perturbation()

    scale = np.linalg.norm(design, axis=0)
    scaled = design / scale
    if ridge > 0:
        scaled = np.vstack([scaled, np.sqrt(ridge) * np.eye(len(orders))])
        target = np.concatenate([data, np.zeros(len(orders))])
    else:
        target = data

    singular = linalg.svdvals(scaled)
    condition = singular[0] / singular[-1] if singular[-1] > 0 else np.inf
    if condition > settings.FIT_CONDITION_MAX:
        raise IllConditionedFit(
            f"design condition {condition:.3e} exceeds {settings.FIT_CONDITION_MAX:.1e}"
        )

    solution, _, _, _ = linalg.lstsq(scaled, target)
    coefficients = solution / scale

    residual = data - design @ coefficients
    dof = max(len(data) - len(orders), 1)
    variance = residual @ residual / dof
    normal = scaled.T @ scaled
    errors = np.sqrt(variance * np.diag(linalg.inv(normal))) / scale

    rms = float(np.sqrt(np.mean(residual**2)))
    logger.debug(
        "[multilayer_gpt:extract_multipoles]",
        extra={"orders": orders, "condition": condition, "rms": rms},
    )
    return MultipoleSpectrum(
        center,
        dict(zip(orders, coefficients)),
        dict(zip(orders, errors)),
        rms,
    )


def _dipole_residual(z, points, data, background):
    """Residual of the best symmetric dipole at z (variable projection)."""
    h = background.gradient(np.asarray(z))
    w = points - z
    g = w / (2.0 * np.pi * np.einsum("ij,ij->i", w, w))[:, None]
    design = -np.stack(
        [g[:, 0] * h[0], g[:, 0] * h[1] + g[:, 1] * h[0], g[:, 1] * h[1]], axis=1
    )
    tensor, _, _, _ = linalg.lstsq(design, data)
    return data - design @ tensor, tensor, h


def _multipole_residual(z, points, data, background, orders):
    design = _multipole_columns(points, background, tuple(z), orders)
    coefficients, _, _, _ = linalg.lstsq(design, data)
    return data - design @ coefficients


def _solve(residuals, start, max_nfev=None):
    # gtol is what stops zero-residual fits at the roundoff floor
    return optimize.least_squares(
        residuals,
        start,
        jac="3-point",
        xtol=1e-15,
        ftol=1e-15,
        gtol=1e-15,
        max_nfev=max_nfev or settings.MAX_ITERATIONS,
    )


def _converged(fit, scale):
    """Stopped on a tolerance, or at the evaluation cap with a small residual."""
    if not np.all(np.isfinite(fit.x)):
        return False
    if fit.status > 0:
        return True
    rms = np.sqrt(2.0 * fit.cost / max(len(fit.fun), 1))
    return fit.status == 0 and rms <= 1e-6 * scale


def _search_starts(measurements, search_box, grid):
    if search_box is None:
        centroid = measurements.points.mean(axis=0)
        half = 0.5 * np.min(np.linalg.norm(measurements.points - centroid, axis=1))
        search_box = (
            centroid[0] - half,
            centroid[0] + half,
            centroid[1] - half,
            centroid[1] + half,
        )

    xs = np.linspace(search_box[0], search_box[1], grid)
    ys = np.linspace(search_box[2], search_box[3], grid)
    return [np.array([x, y]) for x in xs for y in ys]


def residual_floor(measurements):
    """Relative RMS residual that a correct model reaches on these samples."""
    noise = measurements.noise_level or 0.0
    return max(_NOISE_MARGIN * noise, settings.RESIDUAL_FLOOR)


def _box_center(measurements, search_box):
    if search_box is None:
        return measurements.points.mean(axis=0)
    return np.array(
        [0.5 * (search_box[0] + search_box[1]), 0.5 * (search_box[2] + search_box[3])]
    )


def _refinement_starts(fits, measurements, search_box):
    """Distinct dipole endpoints, best first, and the middle of the search box."""
    starts = []
    for fit in sorted(fits, key=lambda fit: fit.cost):
        if not any(np.allclose(fit.x, start, atol=1e-6) for start in starts):
            starts.append(fit.x)
        if len(starts) == _REFINEMENT_STARTS:
            break
    starts.append(_box_center(measurements, search_box))
    return starts


def locate_center(
    measurements, background=None, search_box=None, grid=5, n_max=None
):
    """
    Multi-start dipole fit, then a multi-start refinement against the full
    multipole model of concentric disks about the candidate center.

    When that model covers every order of the background, a center whose
    residual stays above `residual_floor` is rejected with NoConvergence.
    """
    background = background or measurements.require_background()
    points = measurements.points
    data = measurements.perturbation()

    if not np.any(data):
        raise DegenerateDipole("measured perturbation vanishes")

    scale = np.sqrt(np.mean(data**2))

    fits = []
    for start in _search_starts(measurements, search_box, grid):
        fit = _solve(lambda z: _dipole_residual(z, points, data, background)[0], start)
        if np.all(np.isfinite(fit.x)):
            fits.append(fit)

    best = min(fits, key=lambda fit: fit.cost, default=None)
    if best is None or not _converged(best, scale):
        raise NoConvergence(
            f"dipole fit did not converge in {settings.MAX_ITERATIONS} steps"
        )

    residual, tensor, h = _dipole_residual(best.x, points, data, background)
    moment = np.array([[tensor[0], tensor[1]], [tensor[1], tensor[2]]]) @ h
    model = np.sqrt(np.mean((data - residual) ** 2))
    if np.linalg.norm(moment) == 0 or model <= settings.RELATIVE_FLOOR * scale:
        raise DegenerateDipole("fitted dipole moment M grad H(z) vanishes")

    if n_max is None:
        n_max = background.max_order
    n_max = max(1, min(n_max, (len(measurements) - 1) // 2))
    complete = n_max >= background.max_order

    chosen = best
    if n_max > 1:
        orders = list(range(1, n_max + 1))
        refined = []
        for start in _refinement_starts(fits, measurements, search_box):
            fit = _solve(
                lambda z: _multipole_residual(z, points, data, background, orders),
                start,
            )
            if np.all(np.isfinite(fit.x)):
                refined.append(fit)

        chosen = min(refined, key=lambda fit: fit.cost, default=None)
        if chosen is None or not _converged(chosen, scale):
            raise NoConvergence("multipole refinement of the center did not converge")

    relative = float(np.sqrt(2.0 * chosen.cost / len(data)) / scale)
    floor = residual_floor(measurements)
    logger.debug(
        "[multilayer_gpt:locate]",
        extra={
            "dipole": tuple(best.x),
            "center": tuple(chosen.x),
            "residual": relative,
            "floor": floor,
        },
    )
    if complete and relative > floor:
        raise NoConvergence(
            f"no center reproduces the samples: residual {relative:.3e} "
            f"stays above {floor:.1e}"
        )

    return CenterEstimate(
        (float(chosen.x[0]), float(chosen.x[1])), relative, bool(chosen.status > 0)
    )


def locate(measurements, background=None, search_box=None, grid=5, n_max=None):
    """Center of the inclusion; see `locate_center`."""
    return locate_center(measurements, background, search_box, grid, n_max).center


def _scales(spectrum, orders):
    values = np.array([spectrum[n] for n in orders])
    errors = np.array([spectrum.error(n) for n in orders])
    floor = settings.RELATIVE_FLOOR * np.abs(values)
    scale = np.maximum(errors, floor)
    largest = max(np.max(np.abs(values)), np.finfo(float).tiny)
    fallback = settings.RELATIVE_FLOOR * largest
    return values, np.where(scale > 0, scale, fallback)


def _lambdas_from_weights(weights):
    lambdas = []
    total = 1.0
    for w in weights:
        lambdas.append(-total / (2.0 * w))
        total += w
    return lambdas


def _pick_pair(orders, residual, significant, ceiling):
    """Consecutive significant orders whose ratio is most stable; largest n on ties."""
    candidates = []
    for i in range(len(orders) - 1):
        n, m = orders[i], orders[i + 1]
        if m != n + 1 or not (significant[i] and significant[i + 1]):
            continue
        ratio = residual[i + 1] / residual[i]
        if not 0 < ratio < ceiling:
            continue

        variation = np.inf
        if i + 2 < len(orders) and orders[i + 2] == m + 1 and significant[i + 2]:
            following = residual[i + 2] / residual[i + 1]
            variation = abs(following - ratio) / ratio
        candidates.append((variation, -n, i, ratio))

    if not candidates:
        return None
    _, _, i, ratio = min(candidates)
    return i, ratio


def peel(spectrum, layers):
    """Sequential large-n estimates of (r_k, w_k) from the multipole tail."""
    orders = [n for n in spectrum.orders]
    values, scale = _scales(spectrum, orders)
    floor = scale
    residual = values.copy()
    n = np.array(orders, dtype=float)

    radii, weights = [], []
    repaired = False
    ceiling = np.inf

    for k in range(1, layers + 1):
        significant = np.abs(residual) > settings.PEEL_SIGNIFICANCE * floor
        picked = _pick_pair(orders, residual, significant, ceiling)

        if picked is None:
            picked = _pick_pair(orders, residual, significant, np.inf)
            if picked is None:
                raise PeelExhausted(f"no significant multipole pair left for layer {k}")
            i, ratio = picked
            logger.warning(
                "[multilayer_gpt:peel]",
                extra={"layer": k, "ratio": ratio, "repair": "radius ordering"},
            )
            ratio = 0.81 * ceiling
            repaired = True
        else:
            i, ratio = picked

        radius2 = ratio
        weight = residual[i] / radius2 ** orders[i]
        radii.append(float(np.sqrt(radius2)))
        weights.append(float(weight))

        residual = residual - weight * radius2**n
        ceiling = radius2

    lambdas = _lambdas_from_weights(weights)
    for k, lam in enumerate(lambdas):
        if abs(lam) <= 0.5:
            logger.warning(
                "[multilayer_gpt:peel]",
                extra={"layer": k + 1, "lambda": lam, "repair": "contrast magnitude"},
            )
            lambdas[k] = np.copysign(0.5 + 1e-3, lam if lam != 0 else 1.0)
            repaired = True

    return tuple(radii), tuple(lambdas), repaired


def _pack(radii, sigmas):
    """Unconstrained parameters; ratios are clipped off 0 and 1 first."""
    tiny = np.finfo(float).tiny
    radii = np.asarray(radii, dtype=float)
    ratios = np.clip(radii[1:] / radii[:-1], _RATIO_EDGE, 1.0 - _RATIO_EDGE)
    return np.concatenate(
        [
            [np.log(max(radii[0], tiny))],
            np.log(ratios / (1.0 - ratios)),
            np.log(np.maximum(np.asarray(sigmas, dtype=float), tiny)),
        ]
    )


def _unpack(params, layers):
    radii = [np.exp(params[0])]
    for logit in params[1:layers]:
        radii.append(radii[-1] / (1.0 + np.exp(-logit)))
    return tuple(radii), tuple(np.exp(params[layers:]))


def _layer_lambdas(sigmas):
    previous = np.concatenate([[1.0], sigmas[:-1]])
    with np.errstate(divide="ignore", invalid="ignore"):
        return (np.asarray(sigmas) + previous) / (2.0 * (np.asarray(sigmas) - previous))


def model_multipoles(radii, sigmas, orders):
    lambdas = _layer_lambdas(np.asarray(sigmas))
    return np.array([multipole_from_layers(radii, lambdas, n) for n in orders])


def _refine(spectrum, radii, sigmas):
    orders = spectrum.orders
    values, scale = _scales(spectrum, orders)
    layers = len(radii)

    def residuals(params):
        r, s = _unpack(params, layers)
        try:
            model = model_multipoles(r, s, orders)
        except (SingularGpm, FloatingPointError, ValueError):
            return np.full(len(orders), _PENALTY)
        if not np.all(np.isfinite(model)):
            return np.full(len(orders), _PENALTY)
        return (model - values) / scale

    fit = _solve(
        residuals,
        _pack(radii, sigmas),
        max_nfev=settings.MAX_ITERATIONS * (2 * layers + 1),
    )
    r, s = _unpack(fit.x, layers)
    return r, s, fit


def recover_radii(spectrum, layers, orders=None, refine=True):
    """Peel radii and contrasts off the large-n tail, then refine on every order."""
    if orders is not None:
        spectrum = MultipoleSpectrum(
            spectrum.center,
            {n: spectrum[n] for n in orders},
            {n: spectrum.error(n) for n in orders if n in spectrum.errors},
            spectrum.residual,
        )

    peeled_radii, peeled_lambdas, repaired = peel(spectrum, layers)
    peeled_sigmas = sigmas_from_contrasts(peeled_lambdas)

    if not refine:
        if repaired:
            raise NonPhysicalEstimate(
                "peeled estimates needed repair and refinement is off"
            )
        return RadiiEstimate(
            peeled_radii, peeled_sigmas, peeled_radii, peeled_sigmas, np.nan
        )

    starts = [(peeled_radii, peeled_sigmas)]
    geometric = tuple(peeled_radii[0] * 0.6**k for k in range(layers))
    starts.append((geometric, peeled_sigmas))

    best = None
    for radii, sigmas in starts:
        candidate = _refine(spectrum, radii, sigmas)
        if best is None or candidate[2].cost < best[2].cost:
            best = candidate

    radii, sigmas, fit = best
    if not np.all(np.isfinite(fit.x)) or fit.status < 0:
        raise NoConvergence(f"radius refinement stopped: {fit.message}")
    converged = bool(fit.status > 0)
    if not converged:
        logger.warning(
            "[multilayer_gpt:recover_radii]",
            extra={"message": fit.message, "cost": float(fit.cost)},
        )
    residual = float(np.max(np.abs(fit.fun))) if len(fit.fun) else 0.0

    logger.debug(
        "[multilayer_gpt:recover_radii]",
        extra={"peeled": peeled_radii, "radii": radii, "residual": residual},
    )
    return RadiiEstimate(
        tuple(float(r) for r in radii),
        tuple(float(s) for s in sigmas),
        peeled_radii,
        peeled_sigmas,
        residual,
        repaired,
        converged,
    )


def _order_combinations(first, available, size):
    yield tuple(first)
    count = 1
    for combination in itertools.combinations(sorted(available), size):
        if count >= settings.CERTIFICATE_MAX_COMBINATIONS:
            return
        if combination == tuple(first):
            continue
        count += 1
        yield combination


def _newton(radii, targets, orders, starts):
    scale = np.maximum(np.abs(targets), np.finfo(float).tiny)

    def equations(lambdas):
        values, jacobian = [], []
        for n in orders:
            c, gradient = multipole_gradient(radii, lambdas, n)
            values.append(c)
            jacobian.append(gradient)
        return (np.array(values) - targets) / scale, np.array(jacobian) / scale[:, None]

    for start in starts:
        try:
            solution = optimize.root(equations, start, jac=True, method="hybr")
        except (SingularGpm, FloatingPointError):
            continue
        lambdas = solution.x
        if (
            solution.success
            and np.all(np.isfinite(lambdas))
            and np.all(np.abs(lambdas) > 0.5)
            and np.max(np.abs(solution.fun)) < 1e-8
        ):
            return solution
    return None


def recover_sigmas(spectrum, radii, orders=None, initial_sigmas=None):
    """
    Solve c_n(lambda) = c_n at N orders, starting from the given sigmas and a
    +-1 grid of contrasts, and certify the solution with det L_N and det R_N.
    Order combinations are walked lexicographically when a certificate fails.
    """
    layers = len(radii)
    available = spectrum.orders
    if len(available) < layers:
        raise CertificateFailed(
            f"{len(available)} orders cannot determine {layers} contrasts"
        )

    first = tuple(orders) if orders is not None else tuple(sorted(available)[:layers])
    missing = [n for n in first if n not in spectrum]
    if missing:
        raise CertificateFailed(f"orders {missing} are not in the spectrum")

    starts = []
    if initial_sigmas is not None:
        starts.append(np.asarray(contrasts_from_sigmas(initial_sigmas).lambdas))
    starts += [
        np.array(signs, dtype=float)
        for signs in itertools.product((1.0, -1.0), repeat=layers)
    ]

    converged_any = False
    attempts = 0
    for combination in _order_combinations(first, available, layers):
        attempts += 1
        targets = np.array([spectrum[n] for n in combination])
        solution = _newton(radii, targets, combination, starts)
        if solution is None:
            logger.warning(
                "[multilayer_gpt:recover_sigmas]",
                extra={"orders": combination, "failure": "newton"},
            )
            continue

        converged_any = True
        lambdas = solution.x
        certificate = cert_matrices_from_layers(radii, lambdas, combination)
        if certificate.passed():
            sigmas = sigmas_from_contrasts(lambdas)
            logger.debug(
                "[multilayer_gpt:recover_sigmas]",
                extra={"orders": combination, "sigmas": sigmas, "attempts": attempts},
            )
            return SigmaEstimate(
                sigmas,
                tuple(float(v) for v in lambdas),
                combination,
                certificate,
                attempts,
                residual=float(np.max(np.abs(solution.fun))),
                converged=bool(solution.success),
            )

        logger.warning(
            "[multilayer_gpt:recover_sigmas]",
            extra={
                "orders": combination,
                "failure": "certificate",
                "left_ratio": certificate.left_ratio,
                "right_ratio": certificate.right_ratio,
            },
        )

    if converged_any:
        raise CertificateFailed(
            f"no certified order combination among {attempts} tried"
        )
    raise NewtonDiverged(
        f"contrast equations did not converge for {attempts} combinations"
    )


def order_residuals(spectrum, radii, sigmas):
    """(c_model - c_measured) / max(error, MISFIT_FLOOR |c|) per order."""
    orders = spectrum.orders
    model = model_multipoles(radii, sigmas, orders)
    residuals = {}
    for n, value in zip(orders, model):
        measured = spectrum[n]
        scale = max(spectrum.error(n), settings.MISFIT_FLOOR * abs(measured))
        residuals[n] = float((value - measured) / scale) if scale > 0 else 0.0
    return residuals


def fit_structure(measurements, center, radii, sigmas, fixed_center=False):
    """
    Least-squares fit of center, radii and conductivities together against
    the raw perturbation samples, using the exact disk field as the model.
    Residuals are relative to the RMS of the perturbation.
    """
    background = measurements.require_background()
    points = measurements.points
    data = measurements.perturbation()
    scale = np.sqrt(np.mean(data**2))
    if scale == 0:
        raise DegenerateDipole("measured perturbation vanishes")

    layers = len(radii)
    offset = 0 if fixed_center else 2

    def split(params):
        z = tuple(center) if fixed_center else (params[0], params[1])
        r, s = _unpack(params[offset:], layers)
        return z, r, s

    def residuals(params):
        z, r, s = split(params)
        try:
            model = field_eval(ConcentricDisks(r, s, z), background, points)
        except (MultilayerError, FloatingPointError, ValueError):
            return np.full(len(data), _PENALTY)
        if not np.all(np.isfinite(model)):
            return np.full(len(data), _PENALTY)
        return (model - data) / scale

    start = _pack(radii, sigmas)
    if not fixed_center:
        start = np.concatenate([np.asarray(center, dtype=float), start])

    fit = _solve(
        residuals, start, max_nfev=settings.MAX_ITERATIONS * (2 * layers + 3)
    )
    if not np.all(np.isfinite(fit.x)) or fit.status < 0:
        raise NoConvergence(f"joint structure fit stopped: {fit.message}")

    z, r, s = split(fit.x)
    residual = float(np.sqrt(np.mean(fit.fun**2)))
    logger.debug(
        "[multilayer_gpt:fit_structure]",
        extra={"center": z, "radii": r, "residual": residual, "status": fit.status},
    )
    return StructureFit(
        (float(z[0]), float(z[1])),
        tuple(float(v) for v in r),
        tuple(float(v) for v in s),
        residual,
        bool(fit.status > 0),
    )


def _stage(stage, operation, *args, **kwargs):
    try:
        return operation(*args, **kwargs)
    except MultilayerError as exc:
        exc.stage = stage
        raise


def invert(measurements, layers, options=None):
    """
    Center, spectrum, radii, contrasts, then a joint fit of every parameter
    on the raw samples. The certificate and the per-order residuals are
    evaluated at the final parameters.
    """
    options = options or InversionOptions()
    warnings = []
    converged = {}

    if options.center is not None:
        center = tuple(float(c) for c in options.center)
    else:
        located = _stage(
            Stage.locate,
            locate_center,
            measurements,
            search_box=options.search_box,
            grid=options.grid,
            n_max=options.n_max,
        )
        center = located.center
        converged[Stage.locate.value] = located.converged

    spectrum = _stage(
        Stage.extract,
        extract_multipoles,
        measurements,
        center,
        options.n_max,
        options.ridge,
    )
    radii = _stage(Stage.radii, recover_radii, spectrum, layers, refine=options.refine)
    converged[Stage.radii.value] = radii.converged
    if radii.repaired:
        warnings.append("peeled estimates were repaired before refinement")

    sigmas = _stage(
        Stage.sigmas,
        recover_sigmas,
        spectrum,
        radii.radii,
        options.orders,
        radii.sigmas,
    )
    converged[Stage.sigmas.value] = sigmas.converged
    if sigmas.attempts > 1:
        warnings.append(f"certificates passed at orders {list(sigmas.orders)}")

    final_radii, final_sigmas = radii.radii, tuple(float(s) for s in sigmas.sigmas)
    structure_misfit = False
    if options.refine:
        structure = _stage(
            Stage.structure,
            fit_structure,
            measurements,
            center,
            final_radii,
            final_sigmas,
            fixed_center=options.center is not None,
        )
        converged[Stage.structure.value] = structure.converged
        final_radii, final_sigmas = structure.radii, structure.sigmas
        structure_misfit = structure.residual > residual_floor(measurements)

        if structure.center != center:
            center = structure.center
            spectrum = _stage(
                Stage.extract,
                extract_multipoles,
                measurements,
                center,
                options.n_max,
                options.ridge,
            )

    certificate = cert_matrices_from_layers(
        final_radii,
        contrasts_from_sigmas(final_sigmas).lambdas,
        sigmas.orders,
    )
    certified = bool(certificate.passed())
    if not certified:
        warnings.append(
            f"certificate fails at the final parameters, orders {list(sigmas.orders)}"
        )

    for stage, ok in converged.items():
        if not ok:
            warnings.append(f"{stage} stage stopped before converging")

    residuals = order_residuals(spectrum, final_radii, final_sigmas)
    worst = max((abs(v) for v in residuals.values()), default=0.0)
    misfit = worst > settings.MISFIT_FACTOR or structure_misfit
    if misfit:
        warnings.append("terminal residual exceeds the misfit threshold")
        logger.warning(
            "[multilayer_gpt:invert]",
            extra={"layers": layers, "max_residual": worst},
        )

    return InverseReport(
        center=tuple(float(c) for c in center),
        radii=tuple(final_radii),
        sigmas=tuple(final_sigmas),
        residuals=residuals,
        orders=sigmas.orders,
        det_left=certificate.det_left,
        det_right=certificate.det_right,
        certificates_passed=certified,
        converged=converged,
        misfit=misfit,
        multipoles=dict(spectrum.values),
        warnings=warnings,
    )
