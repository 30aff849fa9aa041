"""JSON file formats for spectra, coefficient tables, counting series and regions.

Floats go through ``repr`` via the json module, which round-trips every double exactly.
"""

import json
from pathlib import Path

from spectra.core import Spectrum
from spectra.errors import SchemaError
from spectra.regions import PlanarRegion
from spectra.transform import CountingSeries, DeltaTerm, HeatKernelCoefficients, PowerTerm


def _require(data, *keys):
    if not isinstance(data, dict):
        raise SchemaError("Expected a JSON object", got=type(data).__name__)
    missing = [key for key in keys if key not in data]
    if missing:
        raise SchemaError(f"Missing keys: {', '.join(missing)}", missing=missing)


def spectrum_to_dict(spectrum: Spectrum) -> dict:
    return {
        "dimension": spectrum.dimension,
        "shape_tag": spectrum.shape_tag,
        "truncation_bound": spectrum.truncation_bound,
        "entries": [[value, mult] for value, mult in spectrum.entries],
    }


def spectrum_from_dict(data) -> Spectrum:
    _require(data, "truncation_bound", "entries")
    try:
        return Spectrum.from_entries(
            ((value, mult) for value, mult in data["entries"]),
            data["truncation_bound"],
            data.get("shape_tag", ""),
            data.get("dimension"),
        )
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"Invalid spectrum: {exc}") from exc


def coefficients_to_dict(hk: HeatKernelCoefficients) -> dict:
    return {
        "dimension": hk.dimension,
        "coefficients": {str(twice_k): value for twice_k, value in hk.items()},
    }


def coefficients_from_dict(data) -> HeatKernelCoefficients:
    _require(data, "dimension", "coefficients")
    try:
        return HeatKernelCoefficients(
            int(data["dimension"]),
            {int(key): float(value) for key, value in data["coefficients"].items()},
        )
    except (AttributeError, TypeError, ValueError) as exc:
        raise SchemaError(f"Invalid coefficient table: {exc}") from exc


def series_to_dict(cs: CountingSeries) -> dict:
    return {
        "dimension": cs.dimension,
        "derivative_order": cs.derivative_order,
        "power_terms": [term._asdict() for term in cs.power_terms],
        "delta_terms": [term._asdict() for term in cs.delta_terms],
    }


def series_from_dict(data) -> CountingSeries:
    _require(data, "dimension", "power_terms")
    try:
        return CountingSeries(
            int(data["dimension"]),
            tuple(PowerTerm(**term) for term in data["power_terms"]),
            tuple(DeltaTerm(**term) for term in data.get("delta_terms", [])),
            int(data.get("derivative_order", 0)),
        )
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"Invalid counting series: {exc}") from exc


def region_to_dict(region: PlanarRegion) -> dict:
    return {
        "outer": region.outer.tolist(),
        "holes": [hole.tolist() for hole in region.holes],
        "area": region.area,
        "perimeter": region.perimeter,
    }


def region_from_dict(data) -> PlanarRegion:
    _require(data, "outer")
    try:
        return PlanarRegion.from_points(data["outer"], data.get("holes", []))
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"Invalid region: {exc}") from exc


def dump(data: dict, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path} is not valid JSON: {exc}") from exc
