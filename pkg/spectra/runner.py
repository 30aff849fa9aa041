"""Experiment runs: configuration merging, shape adapters and per-command tables."""

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from django.conf import settings

import weylkit
from spectra import serializers
from spectra.asymptotics import (
    eigenvalue_solve,
    evaluate_expansion,
    expansion_coefficients,
    fit_sqrt_coefficient,
    windowed_mean_residual,
)
from spectra.core import (
    DEFAULT_TAIL_CUTOFF,
    DEFAULT_TOLERANCE,
    SmoothingConfig,
    count_direct,
    count_smoothed,
    density_smoothed,
    fit_heat_coefficients,
    heat_trace,
    laplace_forward_check,
)
from spectra.errors import (
    ConfigError,
    DegeneratePointError,
    NonConvergenceError,
    SchemaError,
    SpectralError,
    TruncationError,
    UnsupportedDataError,
)
from spectra.regions import blob_with_holes, gauss_bonnet_defect, planar_heat_coefficients
from spectra.shapes import (
    BOUNDARY_CHOICES,
    DIRICHLET,
    Ball3DShape,
    BoxShape,
    ball3d_counting_series,
    ball3d_heat_coefficients,
    ball3d_spectrum,
    ball_heat_coefficients,
    box_heat_coefficients,
    box_heat_trace,
    box_spectrum,
    box_weyl_majorant,
    disk_spectrum,
    series_majorant,
)
from spectra.tables import FORMATS, config_hash, emit_table
from spectra.transform import (
    density_series,
    evaluate_counting_series,
    evaluate_heat_series,
    inverse_check_2d_leading,
    transform_coefficients,
)

logger = logging.getLogger(__name__)

COMMANDS = ("spectrum", "count", "heat", "coeffs", "transform", "solve", "density", "verify")
SPACINGS = ("linear", "log")
SHAPE_KINDS = ("box", "ball3d", "ball", "disk", "region", "blob")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

VERIFY_LAPLACE_TIMES = (0.01, 0.1, 1.0)
# window means tile [bound/6, bound]; at bound 3000 the windows are 100 wide
VERIFY_WINDOW_START = 1 / 6
VERIFY_WINDOW_COUNT = 25
VERIFY_SQRT_FIT_START = 0.1

FLOAT_FIELDS = ("lambda_max", "lambda_min", "t_min", "t_max", "tail_cutoff", "tolerance", "beta")
INT_FIELDS = ("lambda_count", "t_count", "n_min", "n_max", "n_step", "workers")
POSITIVE_FIELDS = ("lambda_max", "tail_cutoff", "tolerance", "beta")
PATH_FIELDS = ("coefficients_file", "spectrum_file", "series_file", "output")


def _checked_number(name, value, integral):
    # config files are JSON, so bool and str values can reach here
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(
            f"{name} must be a number, got {type(value).__name__} {value!r}", field=name
        )
    if not math.isfinite(value):
        raise ConfigError(f"{name} must be finite", field=name)
    if integral:
        if value != int(value):
            raise ConfigError(f"{name} must be an integer, got {value!r}", field=name)
        return int(value)
    return float(value)


@dataclass(frozen=True)
class Grid:
    start: float
    stop: float
    count: int
    spacing: str = "linear"

    def __post_init__(self):
        if self.count < 1:
            raise ConfigError("Grid is empty", count=self.count)
        if not (0 < self.start <= self.stop):
            raise ConfigError(
                f"Grid bounds must satisfy 0 < start <= stop, got [{self.start}, {self.stop}]"
            )
        if self.spacing not in SPACINGS:
            raise ConfigError(f"Unknown grid spacing {self.spacing!r}")

    def values(self) -> list[float]:
        if self.count == 1:
            return [float(self.stop)]
        if self.spacing == "log":
            points = np.geomspace(self.start, self.stop, self.count)
        else:
            points = np.linspace(self.start, self.stop, self.count)
        return [float(x) for x in points]


@dataclass(frozen=True)
class RunConfig:
    command: str
    shape: dict | None = None
    coefficients_file: str | None = None
    spectrum_file: str | None = None
    series_file: str | None = None
    lambda_max: float | None = None
    lambda_min: float | None = None
    lambda_count: int = 100
    lambda_spacing: str = "linear"
    t_min: float = 1e-3
    t_max: float = 1.0
    t_count: int = 10
    t_spacing: str = "log"
    n_min: int = 1
    n_max: int = 100
    n_step: int = 1
    format: str = "csv"
    output: str | None = None
    tail_cutoff: float = DEFAULT_TAIL_CUTOFF
    tolerance: float = DEFAULT_TOLERANCE
    beta: float | None = None
    workers: int | None = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"Unknown command {self.command!r}", commands=list(COMMANDS))
        if self.format not in FORMATS:
            raise ConfigError(f"Unknown format {self.format!r}", formats=list(FORMATS))
        if (self.shape is None) == (self.coefficients_file is None):
            raise ConfigError("Give exactly one of a shape or a coefficient file")
        if self.shape is not None and not isinstance(self.shape, dict):
            raise ConfigError("shape must be an object", field="shape")
        for name in PATH_FIELDS:
            value = getattr(self, name)
            if value is not None and not isinstance(value, str):
                raise ConfigError(f"{name} must be a path string", field=name)
        for name in FLOAT_FIELDS + INT_FIELDS:
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, _checked_number(name, value, name in INT_FIELDS))
        for name in POSITIVE_FIELDS:
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise ConfigError(f"{name} must be positive, got {value}", field=name)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in dataclasses.fields(cls)]

    @classmethod
    def from_options(cls, options: dict, config_file: dict | None = None):
        """Built-in defaults < settings < config file < explicit options."""
        merged = {
            "tail_cutoff": getattr(settings, "WEYLKIT_TAIL_CUTOFF", DEFAULT_TAIL_CUTOFF),
            "tolerance": getattr(settings, "WEYLKIT_SMOOTHING_TOLERANCE", DEFAULT_TOLERANCE),
        }
        names = set(cls.field_names())
        for source in (config_file or {}, options):
            unknown = sorted(set(source) - names)
            if unknown:
                raise ConfigError(f"Unknown options: {', '.join(unknown)}", unknown=unknown)
            merged.update({key: value for key, value in source.items() if value is not None})
        if "command" not in merged:
            raise ConfigError("No command given")
        try:
            return cls(**merged)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def digest(self) -> str:
        # the output location does not change the artifact
        return config_hash({k: v for k, v in self.as_dict().items() if k != "output"})

    def lambda_grid(self) -> Grid:
        top = self.truncation_bound()
        start = self.lambda_min if self.lambda_min is not None else top / max(self.lambda_count, 1)
        return Grid(start, top, self.lambda_count, self.lambda_spacing)

    def t_grid(self) -> Grid:
        return Grid(self.t_min, self.t_max, self.t_count, self.t_spacing)

    def n_values(self) -> list[int]:
        if self.n_min < 1 or self.n_step < 1 or self.n_max < self.n_min:
            raise ConfigError(
                "n range must satisfy 1 <= n_min <= n_max with a positive step"
            )
        return list(range(self.n_min, self.n_max + 1, self.n_step))

    def truncation_bound(self) -> float:
        if self.lambda_max is None:
            raise ConfigError(f"The {self.command} command needs --lambda-max")
        return float(self.lambda_max)


class ShapeModel:
    """Adapter giving every shape source the same surface; unsupported pieces raise."""

    tag = "shape"
    dimension = 0
    # number of small-t heat coefficients verify fits; 0 skips the fit
    heat_fit_terms = 0

    def spectrum(self, bound, workers=None):
        raise UnsupportedDataError(f"No exact spectrum oracle for {self.tag}")

    @property
    def has_spectrum(self) -> bool:
        return False

    def heat_coefficients(self):
        raise NotImplementedError

    def counting_series(self):
        return transform_coefficients(self.heat_coefficients())

    def majorant(self):
        return series_majorant(self.counting_series())

    def exact_heat_trace(self, t):
        return None

    def summary(self) -> dict:
        return {}


class BoxModel(ShapeModel):
    has_spectrum = True

    def __init__(self, shape: BoxShape):
        self.shape = shape
        self.tag = shape.tag
        self.dimension = shape.dimension

    def spectrum(self, bound, workers=None):
        return box_spectrum(self.shape, bound, workers)

    def heat_coefficients(self):
        return box_heat_coefficients(self.shape)

    def majorant(self):
        return box_weyl_majorant(self.shape)

    @property
    def heat_fit_terms(self):
        # the box heat series is exact up to exponentially small terms
        return self.dimension + 1

    def exact_heat_trace(self, t):
        return box_heat_trace(self.shape, t)


class BallModel(ShapeModel):
    """D-ball; the exact oracle exists for the Dirichlet disk and 3-ball."""

    def __init__(self, dimension: int, radius: float, boundary_condition: str = DIRICHLET):
        self.dimension = dimension
        self.radius = radius
        self.boundary_condition = boundary_condition
        if dimension == 3:
            self.shape = Ball3DShape(radius, boundary_condition)
            self.tag = self.shape.tag
        else:
            self.tag = f"ball(D={dimension};R={radius!r};{boundary_condition})"

    @property
    def has_spectrum(self) -> bool:
        return self.boundary_condition == DIRICHLET and self.dimension in (2, 3)

    def spectrum(self, bound, workers=None):
        if self.has_spectrum and self.dimension == 3:
            return ball3d_spectrum(self.shape, bound, workers)
        if self.has_spectrum:
            return disk_spectrum(self.radius, bound, workers)
        return super().spectrum(bound, workers)

    def heat_coefficients(self):
        if self.dimension == 3 and self.boundary_condition == DIRICHLET:
            return ball3d_heat_coefficients(self.shape)
        return ball_heat_coefficients(self.dimension, self.radius, self.boundary_condition)

    def counting_series(self):
        if self.dimension == 3 and self.boundary_condition == DIRICHLET:
            return ball3d_counting_series(self.shape)
        return super().counting_series()


class RegionModel(ShapeModel):
    dimension = 2

    def __init__(self, region, tag="region"):
        self.region = region
        self.tag = f"{tag}(r={region.hole_count})"

    def heat_coefficients(self):
        return planar_heat_coefficients(self.region)

    def summary(self) -> dict:
        return {
            "area": self.region.area,
            "perimeter": self.region.perimeter,
            "hole_count": self.region.hole_count,
            "gauss_bonnet_defect": gauss_bonnet_defect(self.region),
        }


class CoefficientModel(ShapeModel):
    def __init__(self, hk, tag):
        self.hk = hk
        self.dimension = hk.dimension
        self.tag = tag

    def heat_coefficients(self):
        return self.hk


class StoredDataModel(ShapeModel):
    """A shape model whose spectrum or counting series comes from a file instead."""

    def __init__(self, base: ShapeModel, spectrum=None, series=None):
        for name, stored in (("spectrum", spectrum), ("counting series", series)):
            dimension = getattr(stored, "dimension", None)
            if dimension is not None and dimension != base.dimension:
                raise ConfigError(
                    f"The stored {name} is {dimension}-dimensional but {base.tag} is "
                    f"{base.dimension}-dimensional"
                )
        self.base = base
        self.stored_spectrum = spectrum
        self.stored_series = series
        self.tag = base.tag
        self.dimension = base.dimension
        self.heat_fit_terms = base.heat_fit_terms

    @property
    def has_spectrum(self) -> bool:
        return self.stored_spectrum is not None or self.base.has_spectrum

    def spectrum(self, bound, workers=None):
        if self.stored_spectrum is None:
            return self.base.spectrum(bound, workers)
        return self.stored_spectrum.truncated(bound)

    def heat_coefficients(self):
        return self.base.heat_coefficients()

    def counting_series(self):
        if self.stored_series is None:
            return self.base.counting_series()
        return self.stored_series

    def majorant(self):
        return self.base.majorant()

    def exact_heat_trace(self, t):
        return self.base.exact_heat_trace(t)

    def summary(self) -> dict:
        return self.base.summary()


def _float_list(value) -> list[float]:
    if isinstance(value, str):
        value = value.split(",")
    return [float(item) for item in value]


def build_model(config: RunConfig) -> ShapeModel:
    model = _base_model(config)
    if config.spectrum_file is None and config.series_file is None:
        return model
    spectrum = series = None
    if config.spectrum_file is not None:
        spectrum = serializers.spectrum_from_dict(serializers.load(config.spectrum_file))
    if config.series_file is not None:
        series = serializers.series_from_dict(serializers.load(config.series_file))
    return StoredDataModel(model, spectrum, series)


def _base_model(config: RunConfig) -> ShapeModel:
    if config.coefficients_file is not None:
        hk = serializers.coefficients_from_dict(serializers.load(config.coefficients_file))
        return CoefficientModel(hk, f"coefficients({Path(config.coefficients_file).name})")

    spec = dict(config.shape)
    kind = spec.get("kind")
    try:
        boundary = spec.get("boundary", DIRICHLET)
        if boundary not in dict(BOUNDARY_CHOICES):
            raise ConfigError(f"Unknown boundary condition {boundary!r}")
        if kind == "box":
            sides = _float_list(spec.get("L", [1.0]))
            dimension = int(spec.get("D", len(sides)))
            if len(sides) == 1:
                sides = sides * dimension
            if len(sides) != dimension:
                raise ConfigError(f"{len(sides)} side lengths given for D={dimension}")
            return BoxModel(BoxShape(tuple(sides)))
        if kind == "ball3d":
            return BallModel(3, float(spec.get("R", 1.0)), boundary)
        if kind == "ball":
            return BallModel(int(spec.get("D", 3)), float(spec.get("R", 1.0)), boundary)
        if kind == "disk":
            return BallModel(2, float(spec.get("R", 1.0)), DIRICHLET)
        if kind == "region":
            data = spec if "outer" in spec else serializers.load(spec["file"])
            return RegionModel(serializers.region_from_dict(data))
        if kind == "blob":
            return RegionModel(blob_with_holes(int(spec.get("holes", 0))), "blob")
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"Incomplete {kind} shape: {exc}") from exc
    except SpectralError:
        raise
    except ValueError as exc:
        raise ConfigError(f"Invalid {kind} shape: {exc}") from exc
    raise ConfigError(f"Unknown shape kind {kind!r}", kinds=list(SHAPE_KINDS))


@dataclass
class RunResult:
    exit_code: int
    rows: list[dict] = field(default_factory=list)
    artifacts: list[str] = field(default_factory=list)
    text: str = ""
    summary: dict = field(default_factory=dict)
    error: dict | None = None


def _term_kind(cs, twice_k) -> str:
    return "convergent" if twice_k <= cs.dimension else "continued"


def _series_rows(cs) -> list[dict]:
    rows = [
        {
            "term": _term_kind(cs, term.twice_k),
            "k": term.twice_k / 2,
            "exponent": term.exponent,
            "delta_order": "",
            "coefficient": term.coefficient,
        }
        for term in cs.power_terms
    ]
    rows.extend(
        {
            "term": "delta",
            "k": term.twice_k / 2,
            "exponent": "",
            "delta_order": term.order,
            "coefficient": term.weight,
        }
        for term in cs.delta_terms
    )
    return rows


def _smoothed_cell(spectrum, lam, cfg, majorant):
    # the schedule is increasing and the bound decreases with beta
    tail = majorant.shifted_tail_bound(lam, cfg.beta_schedule[0], cfg.tail_cutoff)
    try:
        return count_smoothed(spectrum, lam, cfg), "ok", tail
    except DegeneratePointError as exc:
        return exc.limit, "degenerate", 0.0
    except TruncationError:
        return math.nan, "uncertified", math.inf
    except NonConvergenceError as exc:
        return exc.last_values[-1], "non_convergent", tail


def _spectrum_rows(config, model, provenance):
    spectrum = model.spectrum(config.truncation_bound(), config.workers)
    provenance["truncation_bound"] = spectrum.truncation_bound
    counts = spectrum.cumulative_counts
    rows = [
        {
            "level": index + 1,
            "eigenvalue": value,
            "multiplicity": mult,
            "cumulative_count": int(counts[index]),
        }
        for index, (value, mult) in enumerate(spectrum.entries)
    ]
    return rows, {"spectrum": serializers.spectrum_to_dict(spectrum)}


def _count_rows(config, model, provenance):
    spectrum = model.spectrum(config.truncation_bound(), config.workers)
    provenance["truncation_bound"] = spectrum.truncation_bound
    cfg = SmoothingConfig.for_spectrum(spectrum, config.tail_cutoff, config.tolerance)
    provenance["error_bound_columns"] = "tail_bound"
    cs = model.counting_series()
    majorant = model.majorant()
    rows = []
    for lam in config.lambda_grid().values():
        smoothed, status, tail = _smoothed_cell(spectrum, lam, cfg, majorant)
        rows.append(
            {
                "lambda": lam,
                "n_direct": count_direct(spectrum, lam),
                "n_smoothed": smoothed,
                "smoothing_status": status,
                "tail_bound": tail,
                "n_series": evaluate_counting_series(cs, lam).value,
            }
        )
    return rows, {}


def _heat_rows(config, model, provenance):
    hk = model.heat_coefficients()
    spectrum = None
    if model.has_spectrum and config.lambda_max is not None:
        spectrum = model.spectrum(config.truncation_bound(), config.workers)
        provenance["truncation_bound"] = spectrum.truncation_bound
        provenance["error_bound_columns"] = "tail_bound"
        majorant = model.majorant()
    rows = []
    for t in config.t_grid().values():
        row = {"t": t, "series": evaluate_heat_series(hk, t)}
        if spectrum is not None:
            trace = heat_trace(spectrum, t, majorant)
            row["trace"] = trace.value
            row["tail_bound"] = trace.tail_bound
        exact = model.exact_heat_trace(t)
        if exact is not None:
            row["exact"] = exact
        rows.append(row)
    return rows, {}


def _coeffs_rows(config, model, provenance):
    hk = model.heat_coefficients()
    cs = model.counting_series()
    rows = []
    for twice_k, value in hk.items():
        delta = [term for term in cs.delta_terms if term.twice_k == twice_k]
        rows.append(
            {
                "k": twice_k / 2,
                "heat_coefficient": value,
                "term": "delta" if delta else _term_kind(cs, twice_k),
                "exponent": (cs.dimension - twice_k) / 2,
                "counting_coefficient": (
                    delta[0].weight if delta else cs.power_coefficient(twice_k)
                ),
            }
        )
    extras = {"coefficients": serializers.coefficients_to_dict(hk)}
    summary = model.summary()
    if summary:
        extras["summary"] = summary
    return rows, extras


def _transform_rows(config, model, provenance):
    cs = model.counting_series()
    return _series_rows(cs), {"series": serializers.series_to_dict(cs)}


def _solve_rows(config, model, provenance):
    cs = model.counting_series()
    asymptotics = expansion_coefficients(model.heat_coefficients())
    spectrum = None
    if model.has_spectrum and config.lambda_max is not None:
        spectrum = model.spectrum(config.truncation_bound(), config.workers)
        provenance["truncation_bound"] = spectrum.truncation_bound
    rows = []
    for n in config.n_values():
        row = {
            "n": n,
            "lambda_solved": eigenvalue_solve(cs, n),
            "lambda_expansion": evaluate_expansion(asymptotics, n),
        }
        if spectrum is not None:
            row["lambda_oracle"] = (
                spectrum.eigenvalue_at(n) if n <= spectrum.total_count else math.nan
            )
        rows.append(row)
    return rows, {}


def _density_rows(config, model, provenance):
    density = density_series(model.counting_series())
    spectrum = cfg = None
    if model.has_spectrum:
        spectrum = model.spectrum(config.truncation_bound(), config.workers)
        provenance["truncation_bound"] = spectrum.truncation_bound
        provenance["error_bound_columns"] = "tail_bound"
        cfg = SmoothingConfig.for_spectrum(spectrum, config.tail_cutoff, config.tolerance)
        beta = config.beta if config.beta is not None else cfg.beta_schedule[0]
        provenance["beta"] = beta
        majorant = model.majorant()
    rows = []
    for lam in config.lambda_grid().values():
        row = {"lambda": lam, "density_series": evaluate_counting_series(density, lam).value}
        if spectrum is not None:
            try:
                row["density_smoothed"] = density_smoothed(spectrum, lam, cfg, beta)
            except TruncationError:
                row["density_smoothed"] = math.nan
                row["tail_bound"] = math.inf
            else:
                # kernel terms dropped on either side of the cutoff
                below = math.exp(-cfg.tail_cutoff) * count_direct(spectrum, lam)
                above = majorant.shifted_tail_bound(lam, beta, cfg.tail_cutoff)
                row["tail_bound"] = beta * (below + above)
        rows.append(row)
    return rows, {}


def _window_means(spectrum, cs, bound):
    edges = np.linspace(bound * VERIFY_WINDOW_START, bound, VERIFY_WINDOW_COUNT + 1)
    windows = []
    for start, stop in zip(edges[:-1], edges[1:]):
        start, stop = float(start), float(stop)
        mean = windowed_mean_residual(spectrum, cs, start, stop)
        leading = abs(cs.leading.coefficient) * ((start + stop) / 2) ** cs.leading.exponent
        windows.append(
            {"start": start, "stop": stop, "mean_residual": mean, "over_leading": mean / leading}
        )
    return windows


def _sqrt_fit(spectrum, hk, cs, bound):
    """Which sqrt(lam) coefficient of a planar staircase the oracle supports.

    The transform gives -L/(4 pi); the other candidate in circulation is -L/pi.
    """
    fitted = fit_sqrt_coefficient(
        spectrum, hk.coefficients[0], bound * VERIFY_SQRT_FIT_START, bound
    )
    derived = cs.power_coefficient(1)
    displayed = 4 * derived
    supported = "derived" if abs(fitted - derived) <= abs(fitted - displayed) else "displayed"
    return {
        "fitted": fitted,
        "derived": derived,
        "displayed": displayed,
        "relative_deviation": abs(fitted - derived) / abs(derived) if derived else math.nan,
        "supported_form": supported,
    }


def _small_t_fit(spectrum, hk, terms):
    fitted = fit_heat_coefficients(spectrum, hk.dimension, terms)
    scale = (4 * math.pi) ** (-hk.dimension / 2)
    expected = [scale * hk.coefficients.get(twice_k, 0.0) for twice_k in range(terms)]
    deviations = [
        abs(got - want) / abs(want) for got, want in zip(fitted, expected) if want
    ]
    return {
        "fitted": [float(value) for value in fitted],
        "expected": expected,
        "max_relative_deviation": max(deviations, default=0.0),
    }


def _verify_rows(config, model, provenance):
    if not model.has_spectrum:
        raise UnsupportedDataError(f"verify needs an exact spectrum oracle; {model.tag} has none")
    spectrum = model.spectrum(config.truncation_bound(), config.workers)
    bound = spectrum.truncation_bound
    provenance["truncation_bound"] = bound
    provenance["error_bound_columns"] = "tail_bound"
    cs = model.counting_series()
    hk = model.heat_coefficients()
    planar = cs.dimension == 2
    rows = []
    for lam in config.lambda_grid().values():
        series = evaluate_counting_series(cs, lam)
        direct = count_direct(spectrum, lam)
        row = {
            "lambda": lam,
            "n_direct": direct,
            "n_series": series.value,
            "residual": direct - series.value,
            "last_term": series.last_term,
            # count_direct refuses lambda above the truncation bound, so nothing is missing
            "tail_bound": 0.0,
        }
        if planar:
            row["inverse_check"] = inverse_check_2d_leading(cs, hk, lam)
        rows.append(row)

    residuals = np.array([row["residual"] for row in rows])
    leading = abs(cs.leading.coefficient) * bound**cs.leading.exponent
    windows = _window_means(spectrum, cs, bound)
    summary = {
        "shape": model.tag,
        "truncation_bound": bound,
        "total_count": spectrum.total_count,
        "mean_residual": float(np.mean(residuals)),
        "max_abs_residual": float(np.max(np.abs(residuals))),
        "mean_residual_over_leading": float(np.mean(residuals)) / leading,
        "laplace_residuals": {
            repr(t): laplace_forward_check(spectrum, t) for t in VERIFY_LAPLACE_TIMES
        },
        "window_means": windows,
        "max_window_mean_over_leading": max(abs(w["over_leading"]) for w in windows),
    }
    if planar:
        summary["sqrt_coefficient"] = _sqrt_fit(spectrum, hk, cs, bound)
        summary["inverse_check_at_bound"] = inverse_check_2d_leading(cs, hk, bound)
    if model.heat_fit_terms:
        summary["small_t_fit"] = _small_t_fit(spectrum, hk, model.heat_fit_terms)
    logger.info(
        f"Verified {model.tag} up to {bound}: mean residual {summary['mean_residual']:.4g}"
    )
    return rows, {"summary": summary}


HANDLERS = {
    "spectrum": _spectrum_rows,
    "count": _count_rows,
    "heat": _heat_rows,
    "coeffs": _coeffs_rows,
    "transform": _transform_rows,
    "solve": _solve_rows,
    "density": _density_rows,
    "verify": _verify_rows,
}


def resolve_output(output: str | None) -> Path | None:
    if output is None:
        return None
    path = Path(output)
    if not path.is_absolute():
        path = Path(settings.WEYLKIT_OUTPUT_DIR) / path
    return path


def _write_sidecars(path: Path | None, extras: dict, result: RunResult):
    for name, payload in extras.items():
        if name == "summary":
            result.summary = payload
        if path is not None:
            sidecar = serializers.dump(payload, path.with_name(f"{path.name}.{name}.json"))
            result.artifacts.append(str(sidecar))


def run(config: RunConfig) -> RunResult:
    provenance = {
        "tool": "weylkit",
        "version": weylkit.__version__,
        "command": config.command,
        "config_hash": config.digest,
    }
    try:
        model = build_model(config)
        provenance["shape"] = model.tag
        rows, extras = HANDLERS[config.command](config, model, provenance)
        path = resolve_output(config.output)
        result = RunResult(EXIT_OK, rows)
        result.text = emit_table(rows, config.format, path, provenance)
        if path is not None:
            result.artifacts.append(str(path))
        _write_sidecars(path, extras, result)
        return result
    except (ConfigError, SchemaError) as exc:
        logger.error(f"{config.command} rejected: {exc.message}")
        return RunResult(EXIT_USAGE, error=exc.as_dict())
    except SpectralError as exc:
        logger.error(f"{config.command} failed: {exc.message}")
        return RunResult(EXIT_NUMERICAL, error=exc.as_dict())
    except OSError as exc:
        logger.error(f"{config.command} could not write its output: {exc}")
        return RunResult(EXIT_IO, error={"error": "io", "message": str(exc)})
