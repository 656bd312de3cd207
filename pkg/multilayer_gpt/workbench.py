import csv
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from multilayer_gpt import disks, layer_potentials
from multilayer_gpt.conf import settings
from multilayer_gpt.constants import (
    CGPT_COLUMNS,
    DENSITY_COLUMNS,
    FIELD_COLUMNS,
    GPT_COLUMNS,
    MEASUREMENT_COLUMNS,
    MEASUREMENT_H_COLUMN,
    MULTIPOLE_COLUMNS,
    SIGNIFICANT_DIGITS,
    SPECTRUM_COLUMNS,
    ForwardSolver,
)
from multilayer_gpt.exceptions import (
    ConfigError,
    GeometryConflict,
    MeasurementFileError,
    OutputError,
)
from multilayer_gpt.inverse import InverseReport, InversionOptions, MeasurementSet
from multilayer_gpt.models import (
    ConcentricDisks,
    HarmonicBackground,
    ensure_valid,
    structure_from_dict,
)

logger = logging.getLogger(__name__)

COMMAND_SECTIONS = ("forward", "gpt", "spectrum", "multipoles", "certify", "neutral")


def format_value(value):
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return f"{float(value):.{SIGNIFICANT_DIGITS}g}"


def _parse_override(value):
    try:
        return json.loads(value)
    except json.JSONDecodeError:
        return value


def apply_overrides(data, overrides):
    """Apply `dotted.key=value` overrides to a parsed config mapping."""
    data = json.loads(json.dumps(data))

    for override in overrides or ():
        key, sep, raw = override.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {override!r} is not of the form key=value")

        target = data
        parts = key.split(".")
        for part in parts[:-1]:
            if isinstance(target, list):
                try:
                    target = target[int(part)]
                except (ValueError, IndexError):
                    raise ConfigError(f"override {key!r}: no list entry {part!r}")
                continue
            target = target.setdefault(part, {})
            if not isinstance(target, (dict, list)):
                raise ConfigError(f"override {key!r}: {part!r} is not a section")

        last = parts[-1]
        if isinstance(target, list):
            try:
                target[int(last)] = _parse_override(raw)
            except (ValueError, IndexError):
                raise ConfigError(f"override {key!r}: no list entry {last!r}")
        else:
            target[last] = _parse_override(raw)

    return data


@dataclass(frozen=True)
class MeasurementGeometry:
    radius: float
    count: int
    center: Tuple[float, float] = (0.0, 0.0)
    arc: Optional[Tuple[float, float]] = None
    file: Optional[str] = None

    @classmethod
    def from_dict(cls, data):
        try:
            arc = data.get("arc")
            return cls(
                radius=float(data["radius"]),
                count=int(data.get("count", 0)),
                center=tuple(float(c) for c in data.get("center", (0.0, 0.0))),
                arc=tuple(float(a) for a in arc) if arc is not None else None,
                file=data.get("file"),
            )
        except (AttributeError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed measurement section: {exc}")

    def check(self):
        if self.radius <= 0:
            raise ConfigError(f"measurement radius must be positive, got {self.radius}")
        if self.file is None and self.count < 1:
            raise ConfigError("measurement count must be positive")

    def points(self):
        if self.arc is None:
            theta = 2.0 * np.pi * np.arange(self.count) / self.count
        else:
            theta = np.linspace(self.arc[0], self.arc[1], self.count)
        return np.stack(
            [
                self.center[0] + self.radius * np.cos(theta),
                self.center[1] + self.radius * np.sin(theta),
            ],
            axis=1,
        )


@dataclass(frozen=True)
class ExperimentConfig:
    structure: Optional[object]
    background: HarmonicBackground
    measurement: Optional[MeasurementGeometry] = None
    noise: float = 0.0
    seed: Optional[int] = None
    solver: ForwardSolver = ForwardSolver.analytic
    nodes_per_curve: Optional[int] = None
    layers: Optional[int] = None
    inversion: InversionOptions = field(default_factory=InversionOptions)
    settings: dict = field(default_factory=dict)
    sections: dict = field(default_factory=dict)
    path: Optional[str] = None

    @classmethod
    def from_dict(cls, data, path=None):
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object", path=path)

        structure = None
        if "structure" in data:
            structure = structure_from_dict(
                data["structure"], nodes=data.get("nodes_per_curve")
            )

        inversion = dict(data.get("inversion", {}))
        layers = inversion.pop("layers", None)
        if layers is None:
            layers = getattr(structure, "layers", None)

        try:
            solver = ForwardSolver(data.get("solver", ForwardSolver.analytic.value))
        except ValueError:
            raise ConfigError(f"unknown solver {data.get('solver')!r}", path=path)

        config = cls(
            structure=structure,
            background=HarmonicBackground.from_dict(data.get("background", {})),
            measurement=(
                MeasurementGeometry.from_dict(data["measurement"])
                if "measurement" in data
                else None
            ),
            noise=float(data.get("noise", 0.0)),
            seed=data.get("seed"),
            solver=solver,
            nodes_per_curve=data.get("nodes_per_curve"),
            layers=int(layers) if layers is not None else None,
            inversion=InversionOptions.from_dict(inversion),
            settings=dict(data.get("settings", {})),
            sections={
                key: value
                for key, value in data.items()
                if key in COMMAND_SECTIONS
            },
            path=str(path) if path is not None else None,
        )
        config.check()
        return config

    def section(self, name):
        return dict(self.sections.get(name, {}))

    def with_seed(self, seed):
        return replace(self, seed=seed)

    def require_structure(self):
        if self.structure is None:
            raise ConfigError("missing 'structure' section", path=self.path)
        return self.structure

    def extent(self, center):
        self.require_structure()
        if isinstance(self.structure, ConcentricDisks):
            offset = np.subtract(self.structure.center, center)
            return float(np.linalg.norm(offset) + self.structure.radii[0])
        return self.structure.max_radius(center)

    def enclosing_circle(self):
        """Center and radius of a circle containing the whole inclusion."""
        structure = self.require_structure()
        if isinstance(structure, ConcentricDisks):
            return structure.center, structure.radii[0]
        curve = structure.curves[0]
        center = (curve.cos_x[0], curve.cos_y[0])
        return center, structure.max_radius(center)

    def check(self):
        if self.noise < 0:
            raise ConfigError("noise level must be non-negative", path=self.path)
        if self.noise > 0 and self.seed is None:
            raise ConfigError(
                "a seed is required when noise is positive", path=self.path
            )

        geometry = self.measurement
        if geometry is None:
            return
        geometry.check()
        if geometry.file is not None or self.structure is None:
            return

        extent = self.extent(geometry.center)
        if geometry.radius <= extent:
            raise GeometryConflict(
                f"measurement circle of radius {geometry.radius} meets the inclusion "
                f"(extent {extent:.6g})"
            )
        if geometry.radius < settings.MEASUREMENT_MARGIN * extent:
            raise GeometryConflict(
                f"measurement radius {geometry.radius} is within "
                f"{settings.MEASUREMENT_MARGIN:.2f} x inclusion extent {extent:.6g}"
            )


def load_config(path, overrides=()):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path=path)

    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, path=path, line=exc.lineno, column=exc.colno)

    data = apply_overrides(data, overrides)
    logger.debug(
        "[multilayer_gpt:load_config]",
        extra={"path": str(path), "overrides": list(overrides or ())},
    )
    return ExperimentConfig.from_dict(data, path=path)


def forward_values(config, points):
    """u - H at `points` from the configured forward solver."""
    structure = config.require_structure()
    if config.solver is ForwardSolver.analytic:
        if not isinstance(structure, ConcentricDisks):
            raise ConfigError(
                "the analytic solver needs a disk structure", path=config.path
            )
        return disks.field_eval(ensure_valid(structure), config.background, points)

    system, density = boundary_densities(config)
    return layer_potentials.far_field_eval(system, density, points)


def boundary_densities(config):
    """Assembled system and interface densities for the configured H."""
    structure = config.require_structure()
    system = layer_potentials.assemble(structure, config.nodes_per_curve)
    return system, layer_potentials.solve_densities(system, config.background)


def synth(config):
    geometry = config.measurement
    if geometry is None:
        raise ConfigError("missing 'measurement' section", path=config.path)

    points = geometry.points()
    background = config.background.evaluate(points)
    perturbation = forward_values(config, points)

    noise = np.zeros(len(points))
    if config.noise > 0:
        rng = np.random.default_rng(config.seed)
        scale = config.noise * np.sqrt(np.mean(perturbation**2))
        noise = rng.normal(0.0, scale, len(points))

    logger.debug(
        "[multilayer_gpt:synth]",
        extra={
            "samples": len(points),
            "noise": config.noise,
            "solver": config.solver.value,
        },
    )
    return MeasurementSet(
        points,
        background + perturbation + noise,
        config.background,
        enclosing_radius=config.extent(geometry.center),
        enclosing_center=geometry.center,
        noise_level=config.noise or None,
    )


def _open_for_write(path):
    path = Path(path)
    try:
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True)
        return path.open("w", newline="")
    except OSError as exc:
        raise OutputError(f"cannot write: {exc.strerror}", path=path)


def write_table(path, columns, rows):
    with _open_for_write(path) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(v) for v in row])


def read_table(path, columns, error=MeasurementFileError, optional=()):
    """Rows of floats; the header must list `columns` (plus any of `optional`)."""
    path = Path(path)
    try:
        handle = path.open(newline="")
    except OSError as exc:
        raise error(f"cannot read: {exc.strerror}", path=path)

    with handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        expected = list(columns)
        allowed = [expected + list(optional[:k]) for k in range(len(optional) + 1)]
        if header is None or [h.strip() for h in header] not in allowed:
            raise error(
                f"header must be {','.join(expected)}, got {','.join(header or [])}",
                path=path,
                line=1,
            )

        rows = []
        for line, record in enumerate(reader, start=2):
            if not record:
                continue
            if len(record) != len(header):
                raise error(
                    f"expected {len(header)} fields, got {len(record)}",
                    path=path,
                    line=line,
                    column=min(len(record), len(header)) + 1,
                )
            row = []
            for column, cell in enumerate(record, start=1):
                try:
                    row.append(float(cell))
                except ValueError:
                    raise error(
                        f"not a number: {cell!r}", path=path, line=line, column=column
                    )
            rows.append(tuple(row))

    return [h.strip() for h in header], rows


def write_measurements(measurements, path, include_background=False):
    columns = list(MEASUREMENT_COLUMNS)
    rows = [list(p) + [u] for p, u in zip(measurements.points, measurements.values)]
    if include_background:
        columns.append(MEASUREMENT_H_COLUMN)
        h = measurements.background_values()
        rows = [row + [value] for row, value in zip(rows, h)]
    write_table(path, columns, rows)


def read_measurements(
    path,
    background=None,
    enclosing_radius=0.0,
    enclosing_center=(0.0, 0.0),
    noise_level=None,
):
    header, rows = read_table(
        path, MEASUREMENT_COLUMNS, optional=(MEASUREMENT_H_COLUMN,)
    )
    if not rows:
        raise MeasurementFileError("no samples", path=path, line=2)

    table = np.array(rows)
    tabulated = table[:, 3] if MEASUREMENT_H_COLUMN in header else None
    try:
        return MeasurementSet(
            table[:, :2],
            table[:, 2],
            background,
            tabulated,
            enclosing_radius,
            tuple(enclosing_center),
            noise_level,
        )
    except GeometryConflict as exc:
        raise MeasurementFileError(str(exc), path=path)


def emit_json(data, path):
    with _open_for_write(path) as handle:
        json.dump(data, handle, indent=2, sort_keys=True)
        handle.write("\n")


def emit_report(report, path):
    emit_json(report.to_dict(), path)


def read_report(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read report: {exc.strerror}", path=path)

    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, path=path, line=exc.lineno, column=exc.colno)

    try:
        return InverseReport.from_dict(data)
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise ConfigError(f"malformed report: {exc}", path=path)


def emit_plotdata(series, path, columns=MULTIPOLE_COLUMNS):
    """
    CSV plot data. `series` is a mapping (written as key, value rows) or an
    iterable of rows matching `columns`.
    """
    rows = list(series.items()) if isinstance(series, dict) else list(series)
    write_table(path, columns, rows)


def read_plotdata(path, columns=MULTIPOLE_COLUMNS):
    _, rows = read_table(path, columns, error=ConfigError)
    return rows


def write_multipoles(spectrum, path):
    emit_plotdata(spectrum.values, path, MULTIPOLE_COLUMNS)


def write_gpt_table(table, path):
    write_table(path, GPT_COLUMNS, table.rows())


def write_cgpt(block, path):
    rows = []
    for name in ("cc", "cs", "sc", "ss"):
        matrix = getattr(block, name)
        rows += [
            (name, m + 1, n + 1, matrix[m, n])
            for m in range(block.order)
            for n in range(block.order)
        ]
    with _open_for_write(path) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(CGPT_COLUMNS)
        for name, m, n, value in rows:
            writer.writerow([name, m, n, format_value(value)])


def write_densities(density, parameters, path):
    write_table(path, DENSITY_COLUMNS, density.rows(parameters))


def write_spectrum(eigenvalues, path):
    rows = [(i, v.real, v.imag) for i, v in enumerate(eigenvalues)]
    write_table(path, SPECTRUM_COLUMNS, rows)


def write_field(points, values, path):
    rows = [(p[0], p[1], v) for p, v in zip(points, values)]
    write_table(path, FIELD_COLUMNS, rows)
