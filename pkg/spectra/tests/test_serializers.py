import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from spectra import serializers
from spectra.core import Spectrum
from spectra.errors import SchemaError
from spectra.regions import blob_with_holes
from spectra.shapes import Ball3DShape, ball3d_counting_series, ball3d_heat_coefficients


class SpectrumSerializerTests(SimpleTestCase):
    def test_dict_form(self):
        spectrum = Spectrum.from_entries([(1.0, 1), (4.0, 3)], 5.0, "test", 2)
        data = serializers.spectrum_to_dict(spectrum)
        self.assertEqual(data["entries"], [[1.0, 1], [4.0, 3]])
        restored = serializers.spectrum_from_dict(data)
        self.assertEqual(restored.entries, spectrum.entries)
        self.assertEqual(restored.truncation_bound, 5.0)

    def test_missing_keys(self):
        with self.assertRaises(SchemaError) as ctx:
            serializers.spectrum_from_dict({"entries": []})
        self.assertEqual(ctx.exception.details["missing"], ["truncation_bound"])

    def test_invalid_entries(self):
        with self.assertRaises(SchemaError):
            serializers.spectrum_from_dict({"truncation_bound": 1.0, "entries": [[2.0, 1]]})


class CoefficientSerializerTests(SimpleTestCase):
    def test_keys_are_doubled_indices(self):
        data = serializers.coefficients_to_dict(ball3d_heat_coefficients(Ball3DShape(1.0)))
        self.assertEqual(list(data["coefficients"]), ["0", "1", "2", "3", "4"])
        restored = serializers.coefficients_from_dict(data)
        self.assertEqual(restored.get(1.5), data["coefficients"]["3"])

    def test_bad_table(self):
        with self.assertRaises(SchemaError):
            serializers.coefficients_from_dict({"dimension": 3, "coefficients": {"0": -1.0}})
        with self.assertRaises(SchemaError):
            serializers.coefficients_from_dict({"dimension": 3})


class SeriesSerializerTests(SimpleTestCase):
    def test_terms_keep_their_fields(self):
        cs = ball3d_counting_series(Ball3DShape(1.0))
        data = serializers.series_to_dict(cs)
        self.assertEqual(
            set(data["power_terms"][0]), {"twice_k", "exponent", "coefficient", "weight"}
        )
        self.assertEqual(serializers.series_from_dict(data), cs)

    def test_unknown_term_field(self):
        with self.assertRaises(SchemaError):
            serializers.series_from_dict({"dimension": 2, "power_terms": [{"power": 1.0}]})


class FileTests(SimpleTestCase):
    def test_region_file(self):
        region = blob_with_holes(2, samples=400)
        with tempfile.TemporaryDirectory() as tmp:
            path = serializers.dump(serializers.region_to_dict(region), Path(tmp) / "region.json")
            restored = serializers.region_from_dict(serializers.load(path))
        self.assertEqual(restored.hole_count, 2)
        np.testing.assert_array_equal(restored.outer, region.outer)
        self.assertEqual(restored.area, region.area)

    def test_invalid_json(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "broken.json"
            path.write_text("{not json")
            with self.assertRaises(SchemaError):
                serializers.load(path)
