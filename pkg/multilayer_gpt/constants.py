from enum import Enum

BACKGROUND_SIGMA = 1.0

DEFAULT_CONFIG_NAME = "experiment.json"

MEASUREMENT_COLUMNS = ("x", "y", "u")
MEASUREMENT_H_COLUMN = "h"
GPT_COLUMNS = ("alpha_x", "alpha_y", "beta_x", "beta_y", "value")
DENSITY_COLUMNS = ("interface", "parameter", "value")
SPECTRUM_COLUMNS = ("index", "real", "imag")
CGPT_COLUMNS = ("block", "m", "n", "value")
MULTIPOLE_COLUMNS = ("n", "c_n")
FIELD_COLUMNS = ("x", "y", "value")

SIGNIFICANT_DIGITS = 17

EXIT_OK = 0
EXIT_DOMAIN_ERROR = 1
EXIT_USAGE_ERROR = 2


class OrderClass(Enum):
    full = "FULL"
    partial = "PARTIAL"


class StructureKind(Enum):
    disks = "disks"
    shape = "shape"


class ViolationCode(Enum):
    length_mismatch = "LengthMismatch"
    empty_structure = "EmptyStructure"
    non_positive_radius = "NonPositiveRadius"
    radii_not_decreasing = "RadiiNotDecreasing"
    non_positive_sigma = "NonPositiveSigma"
    adjacent_equal_conductivity = "AdjacentEqualConductivity"
    vanishing_speed = "VanishingSpeed"
    curve_not_simple = "CurveNotSimple"
    clockwise_curve = "ClockwiseCurve"
    curves_not_nested = "CurvesNotNested"
    curves_intersect = "CurvesIntersect"


class Stage(Enum):
    locate = "locate"
    extract = "extract"
    radii = "radii"
    sigmas = "sigmas"
    structure = "structure"


class ForwardSolver(Enum):
    analytic = "analytic"
    bem = "bem"
