import math

import numpy as np
from django.test import SimpleTestCase

from spectra.errors import ResolutionError, TopologyError
from spectra.regions import (
    DEFECT_TOLERANCE,
    PlanarRegion,
    blob_with_holes,
    circle_points,
    gauss_bonnet_defect,
    planar_heat_coefficients,
    signed_area,
    total_curvature,
)


def square_points(per_side):
    steps = np.arange(per_side) / per_side
    zeros, ones = np.zeros(per_side), np.ones(per_side)
    return np.concatenate(
        [
            np.column_stack((steps, zeros)),
            np.column_stack((ones, steps)),
            np.column_stack((1 - steps, ones)),
            np.column_stack((zeros, 1 - steps)),
        ]
    )


class GeometryTests(SimpleTestCase):
    def test_circle_area_and_perimeter(self):
        region = PlanarRegion.from_points(circle_points(1.0, 2000))
        self.assertAlmostEqual(region.area, math.pi, delta=1e-5 * math.pi)
        self.assertAlmostEqual(region.perimeter, 2 * math.pi, delta=1e-5 * 2 * math.pi)

    def test_orientation_is_normalized(self):
        clockwise = circle_points(1.0, 200)[::-1]
        region = PlanarRegion.from_points(clockwise, [circle_points(0.3, 200)])
        self.assertGreater(signed_area(region.outer), 0)
        self.assertLess(signed_area(region.holes[0]), 0)

    def test_closing_point_is_dropped(self):
        points = circle_points(1.0, 100)
        closed = np.vstack([points, points[:1]])
        self.assertEqual(len(PlanarRegion.from_points(closed).outer), 100)

    def test_annulus(self):
        region = PlanarRegion.from_points(
            circle_points(2.0, 1000), [circle_points(1.0, 1000)]
        )
        self.assertEqual(region.euler_characteristic, 0)
        self.assertAlmostEqual(region.area, 3 * math.pi, delta=1e-3)
        self.assertAlmostEqual(region.perimeter, 6 * math.pi, delta=1e-4)

    def test_hole_outside_outer_curve(self):
        with self.assertRaises(ValueError):
            PlanarRegion.from_points(
                circle_points(3.0, 200), [circle_points(1.0, 200, center=(10.0, 0.0))]
            )

    def test_overlapping_holes(self):
        with self.assertRaises(ValueError):
            PlanarRegion.from_points(
                circle_points(3.0, 200),
                [
                    circle_points(0.5, 200),
                    circle_points(0.5, 200, center=(0.3, 0.0)),
                ],
            )


class GaussBonnetTests(SimpleTestCase):
    def test_disk(self):
        region = PlanarRegion.from_points(circle_points(1.0, 500))
        self.assertLessEqual(abs(gauss_bonnet_defect(region)), DEFECT_TOLERANCE)

    def test_annulus(self):
        region = PlanarRegion.from_points(
            circle_points(2.0, 500), [circle_points(1.0, 500)]
        )
        self.assertLessEqual(abs(gauss_bonnet_defect(region)), DEFECT_TOLERANCE)

    def test_blob_with_holes(self):
        for holes in range(4):
            with self.subTest(holes=holes):
                region = blob_with_holes(holes)
                self.assertEqual(region.hole_count, holes)
                self.assertLessEqual(abs(gauss_bonnet_defect(region)), DEFECT_TOLERANCE)

    def test_each_hole_turns_backwards_once(self):
        region = blob_with_holes(1)
        self.assertAlmostEqual(total_curvature(region.outer), 2 * math.pi, places=9)
        self.assertAlmostEqual(total_curvature(region.holes[0]), -2 * math.pi, places=9)

    def test_too_few_points(self):
        region = PlanarRegion.from_points([(0, 0), (1, 0), (1, 1), (0, 1)])
        with self.assertRaises(ResolutionError):
            gauss_bonnet_defect(region)

    def test_corners_are_not_resolved(self):
        region = PlanarRegion.from_points(square_points(5))
        with self.assertRaises(ResolutionError) as ctx:
            gauss_bonnet_defect(region)
        self.assertEqual(ctx.exception.estimate, math.pi / 2)


class PlanarCoefficientTests(SimpleTestCase):
    def test_unit_disk(self):
        hk = planar_heat_coefficients(PlanarRegion.from_points(circle_points(1.0, 2000)))
        self.assertAlmostEqual(hk.get(0), math.pi, delta=1e-5)
        self.assertAlmostEqual(hk.get(0.5), -(math.pi**1.5), delta=1e-4)
        self.assertEqual(hk.get(1), 2 * math.pi / 3)

    def test_one_hole_has_no_constant_term(self):
        hk = planar_heat_coefficients(blob_with_holes(1))
        self.assertEqual(hk.get(1), 0.0)

    def test_constant_term_tracks_holes(self):
        for holes in range(4):
            hk = planar_heat_coefficients(blob_with_holes(holes))
            self.assertAlmostEqual(hk.get(1), 2 * math.pi / 3 * (1 - holes), places=12)

    def test_wrong_hole_orientation(self):
        outer = circle_points(3.0, 200)
        hole = circle_points(1.0, 200)
        region = PlanarRegion(outer, (hole,), area=8 * math.pi, perimeter=8 * math.pi)
        with self.assertRaises(TopologyError) as ctx:
            planar_heat_coefficients(region)
        self.assertAlmostEqual(ctx.exception.defect, 4 * math.pi, places=9)
