class MultilayerError(Exception):
    """Common base class for multilayer-gpt exceptions"""

    stage = None


class InvalidStructure(MultilayerError):
    def __init__(self, violations):
        self.violations = list(violations)
        detail = "; ".join(str(v) for v in self.violations)
        super().__init__(f"invalid structure: {detail}")


class AdjacentEqualConductivity(MultilayerError):
    def __init__(self, index):
        self.index = index
        super().__init__(f"sigma_{index} equals sigma_{index - 1}; contrast undefined")


class CurveTooCoarse(MultilayerError):
    pass


class SingularSystem(MultilayerError):
    pass


class PointInsideInclusion(MultilayerError):
    pass


class NonHarmonicCoefficients(MultilayerError):
    pass


class SingularGpm(MultilayerError):
    pass


class IndexOutOfRange(MultilayerError):
    pass


class DegenerateDenominator(MultilayerError):
    pass


class IllConditionedFit(MultilayerError):
    pass


class NoConvergence(MultilayerError):
    pass


class DegenerateDipole(MultilayerError):
    pass


class PeelExhausted(MultilayerError):
    pass


class NonPhysicalEstimate(MultilayerError):
    pass


class CertificateFailed(MultilayerError):
    pass


class NewtonDiverged(MultilayerError):
    pass


class GeometryConflict(MultilayerError):
    pass


class _LocatedError(MultilayerError):
    def __init__(self, message, path=None, line=None, column=None):
        self.path = path
        self.line = line
        self.column = column

        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")

        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class ConfigError(_LocatedError):
    pass


class MeasurementFileError(_LocatedError):
    pass


class OutputError(_LocatedError):
    pass
