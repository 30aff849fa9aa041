"""Flat planar regions with holes: geometry, discrete Gauss-Bonnet and heat coefficients."""

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from spectra.errors import ResolutionError, TopologyError
from spectra.transform import HeatKernelCoefficients

logger = logging.getLogger(__name__)

MIN_CURVE_POINTS = 16
DEFECT_TOLERANCE = 1e-6 * 2 * math.pi
# vertices per hole tested for containment
CONTAINMENT_SAMPLES = 64


def _as_curve(points) -> np.ndarray:
    curve = np.asarray(points, dtype=float)
    if curve.ndim != 2 or curve.shape[1] != 2:
        raise ValueError("A boundary curve is a sequence of [x, y] points")
    if len(curve) > 1 and np.array_equal(curve[0], curve[-1]):
        curve = curve[:-1]
    if len(curve) < 3:
        raise ValueError("A closed boundary curve needs at least three points")
    return curve


def signed_area(curve: np.ndarray) -> float:
    x, y = curve[:, 0], curve[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def curve_length(curve: np.ndarray) -> float:
    return float(np.sum(np.hypot(*(np.roll(curve, -1, axis=0) - curve).T)))


def winding_numbers(curve: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Winding number of a closed polyline around each query point."""
    z = (curve[:, 0] + 1j * curve[:, 1])[None, :] - (points[:, 0] + 1j * points[:, 1])[:, None]
    turns = np.angle(np.roll(z, -1, axis=1) / z)
    return np.rint(turns.sum(axis=1) / (2 * math.pi)).astype(int)


def _sample(curve: np.ndarray) -> np.ndarray:
    step = max(1, len(curve) // CONTAINMENT_SAMPLES)
    return curve[::step]


def turning_angles(curve: np.ndarray) -> np.ndarray:
    """Signed exterior angle at every vertex of a closed polyline."""
    edges = np.roll(curve, -1, axis=0) - curve
    previous = np.roll(edges, 1, axis=0)
    cross = previous[:, 0] * edges[:, 1] - previous[:, 1] * edges[:, 0]
    dot = np.einsum("ij,ij->i", previous, edges)
    return np.arctan2(cross, dot)


def total_curvature(curve) -> float:
    """Discrete integral of the signed curvature along a closed curve."""
    return float(np.sum(turning_angles(_as_curve(curve))))


@dataclass(frozen=True, eq=False)
class PlanarRegion:
    outer: np.ndarray
    holes: tuple[np.ndarray, ...] = ()
    area: float = 0.0
    perimeter: float = 0.0

    @classmethod
    def from_points(cls, outer: Sequence, holes: Sequence = ()):
        """Build a region, orienting the outer curve counter-clockwise and holes clockwise."""
        outer_curve = _as_curve(outer)
        if signed_area(outer_curve) < 0:
            outer_curve = outer_curve[::-1]

        hole_curves = []
        for hole in holes:
            curve = _as_curve(hole)
            if signed_area(curve) > 0:
                curve = curve[::-1]
            hole_curves.append(curve)

        for index, curve in enumerate(hole_curves):
            if np.any(winding_numbers(outer_curve, _sample(curve)) == 0):
                raise ValueError(f"Hole {index} is not inside the outer boundary")
            for other_index, other in enumerate(hole_curves):
                if other_index != index and np.any(
                    winding_numbers(other, _sample(curve)) != 0
                ):
                    raise ValueError(f"Holes {index} and {other_index} overlap")

        area = signed_area(outer_curve) + sum(signed_area(c) for c in hole_curves)
        if area <= 0:
            raise ValueError("Region area must be positive")
        perimeter = curve_length(outer_curve) + sum(curve_length(c) for c in hole_curves)
        return cls(outer_curve, tuple(hole_curves), area, perimeter)

    @property
    def hole_count(self) -> int:
        return len(self.holes)

    @property
    def euler_characteristic(self) -> int:
        return 1 - self.hole_count

    @property
    def curves(self) -> tuple[np.ndarray, ...]:
        return (self.outer, *self.holes)


def _check_resolution(curve: np.ndarray):
    if len(curve) < MIN_CURVE_POINTS:
        raise ResolutionError(
            f"A boundary curve has {len(curve)} points; at least "
            f"{MIN_CURVE_POINTS} are needed",
            estimate=math.inf,
        )
    angles = turning_angles(curve)
    sharpest = float(np.max(np.abs(angles)))
    if sharpest >= math.pi / 2:
        raise ResolutionError(
            f"Turning angle {sharpest} is too large for the curve to be resolved",
            estimate=sharpest,
        )
    coarse = float(np.sum(turning_angles(curve[::2])))
    estimate = abs(float(np.sum(angles)) - coarse)
    if estimate > DEFECT_TOLERANCE:
        raise ResolutionError(
            f"Curvature quadrature changes by {estimate} when the sampling is halved",
            estimate=estimate,
        )


def gauss_bonnet_defect(region: PlanarRegion) -> float:
    """Summed boundary curvature minus 2 pi chi; zero for a valid flat region."""
    total = 0.0
    for curve in region.curves:
        _check_resolution(curve)
        total += float(np.sum(turning_angles(curve)))
    defect = total - 2 * math.pi * region.euler_characteristic
    logger.debug(
        f"Boundary curvature {total} over {len(region.curves)} curves, defect {defect}"
    )
    return defect


def planar_heat_coefficients(
    region: PlanarRegion, tolerance: float = DEFECT_TOLERANCE
) -> HeatKernelCoefficients:
    """B_0 = S, B_{1/2} = -(sqrt(pi)/2) L, B_1 = (2 pi/3)(1 - r)."""
    defect = gauss_bonnet_defect(region)
    if abs(defect) > tolerance:
        raise TopologyError(
            f"Boundary curvature does not match {region.hole_count} holes "
            f"(defect {defect})",
            defect=defect,
        )
    return HeatKernelCoefficients(
        2,
        {
            0: region.area,
            1: -math.sqrt(math.pi) / 2 * region.perimeter,
            2: 2 * math.pi / 3 * region.euler_characteristic,
        },
    )


def circle_points(radius: float, samples: int, center=(0.0, 0.0)) -> np.ndarray:
    theta = 2 * math.pi * np.arange(samples) / samples
    return np.column_stack(
        (center[0] + radius * np.cos(theta), center[1] + radius * np.sin(theta))
    )


def blob_points(
    radius: float,
    samples: int,
    center=(0.0, 0.0),
    lobes: int = 3,
    depth: float = 0.2,
    phase: float = 0.0,
) -> np.ndarray:
    """Smooth star-shaped curve r(theta) = radius * (1 + depth cos(lobes theta + phase))."""
    theta = 2 * math.pi * np.arange(samples) / samples
    r = radius * (1 + depth * np.cos(lobes * theta + phase))
    return np.column_stack(
        (center[0] + r * np.cos(theta), center[1] + r * np.sin(theta))
    )


def blob_with_holes(holes: int, samples: int = 2000) -> PlanarRegion:
    """A three-lobed blob of radius 10 with up to three small blobs cut out around its center."""
    if not 0 <= holes <= 3:
        raise ValueError("blob_with_holes supports 0 to 3 holes")
    hole_curves = [
        blob_points(
            1.0,
            samples,
            center=(4 * math.cos(2 * math.pi * i / 3), 4 * math.sin(2 * math.pi * i / 3)),
            lobes=2,
            depth=0.15,
            phase=i,
        )
        for i in range(holes)
    ]
    return PlanarRegion.from_points(blob_points(10.0, samples), hole_curves)
