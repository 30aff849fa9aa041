import json
import math
import tempfile
from io import StringIO
from pathlib import Path

from django.core.management import call_command
from django.test import SimpleTestCase, TestCase, override_settings

from spectra import serializers
from spectra.errors import ConfigError
from spectra.models import ExperimentRun
from spectra.runner import EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, RunConfig, run
from spectra.shapes import Ball3DShape, BoxShape, ball3d_counting_series, box_spectrum

BOX = {"kind": "box", "D": 2, "L": "1,1"}


class RunConfigTests(SimpleTestCase):
    @override_settings(WEYLKIT_TAIL_CUTOFF=12.0)
    def test_precedence(self):
        options = {"command": "count", "shape": BOX, "tail_cutoff": None}
        self.assertEqual(RunConfig.from_options(options).tail_cutoff, 12.0)
        self.assertEqual(
            RunConfig.from_options(options, {"tail_cutoff": 20.0}).tail_cutoff, 20.0
        )
        options["tail_cutoff"] = 25.0
        self.assertEqual(
            RunConfig.from_options(options, {"tail_cutoff": 20.0}).tail_cutoff, 25.0
        )

    def test_unknown_option(self):
        with self.assertRaises(ConfigError) as ctx:
            RunConfig.from_options({"command": "count", "shape": BOX}, {"colour": "red"})
        self.assertEqual(ctx.exception.details["unknown"], ["colour"])

    def test_needs_exactly_one_source(self):
        with self.assertRaises(ConfigError):
            RunConfig(command="coeffs")
        with self.assertRaises(ConfigError):
            RunConfig(command="coeffs", shape=BOX, coefficients_file="hk.json")

    def test_digest_ignores_output(self):
        first = RunConfig(command="coeffs", shape=BOX, output="a.csv")
        second = RunConfig(command="coeffs", shape=BOX, output="b.csv")
        self.assertEqual(first.digest, second.digest)
        self.assertNotEqual(first.digest, RunConfig(command="transform", shape=BOX).digest)

    def test_default_lambda_grid(self):
        grid = RunConfig(command="count", shape=BOX, lambda_max=1000.0, lambda_count=4).lambda_grid()
        self.assertEqual(grid.values(), [250.0, 500.0, 750.0, 1000.0])

    def test_missing_lambda_max(self):
        with self.assertRaises(ConfigError):
            RunConfig(command="count", shape=BOX).lambda_grid()

    def test_config_file_value_of_wrong_type(self):
        with self.assertRaises(ConfigError) as ctx:
            RunConfig.from_options(
                {"command": "count", "shape": BOX, "lambda_max": 100.0}, {"lambda_count": "10"}
            )
        self.assertEqual(ctx.exception.details["field"], "lambda_count")
        with self.assertRaises(ConfigError):
            RunConfig(command="count", shape=BOX, tolerance=True)
        with self.assertRaises(ConfigError):
            RunConfig(command="count", shape=BOX, n_max=2.5)
        with self.assertRaises(ConfigError):
            RunConfig(command="coeffs", shape=BOX, spectrum_file=3)

    def test_integral_floats_become_ints(self):
        config = RunConfig(command="count", shape=BOX, lambda_count=4.0, lambda_max=100)
        self.assertIsInstance(config.lambda_count, int)
        self.assertIsInstance(config.lambda_max, float)

    def test_nonpositive_beta(self):
        for beta in (0.0, -1.0):
            with self.subTest(beta=beta):
                with self.assertRaises(ConfigError) as ctx:
                    RunConfig(command="density", shape=BOX, lambda_max=100.0, beta=beta)
                self.assertEqual(ctx.exception.details["field"], "beta")


class RunTests(SimpleTestCase):
    def test_transform_rows(self):
        result = run(RunConfig(command="transform", shape={"kind": "ball3d"}))
        self.assertEqual(result.exit_code, EXIT_OK)
        self.assertEqual([row["exponent"] for row in result.rows], [1.5, 1.0, 0.5, 0.0, -0.5])
        self.assertTrue(result.text.startswith("# tool: weylkit\n"))

    def test_disk_terms_are_convergent(self):
        shape = {"kind": "ball", "D": 2, "R": 1.0}
        result = run(RunConfig(command="coeffs", shape=shape))
        self.assertEqual([row["term"] for row in result.rows], ["convergent"] * 3)

    def test_count_rows(self):
        config = RunConfig(command="count", shape=BOX, lambda_max=500.0, lambda_count=5)
        result = run(config)
        self.assertEqual(result.exit_code, EXIT_OK)
        last = result.rows[-1]
        self.assertEqual(last["lambda"], 500.0)
        self.assertEqual(last["smoothing_status"], "uncertified")
        self.assertTrue(math.isnan(last["n_smoothed"]))
        self.assertEqual(last["tail_bound"], math.inf)
        self.assertLess(abs(last["n_direct"] - last["n_series"]), 5)
        for row in result.rows:
            if row["smoothing_status"] == "ok":
                self.assertLess(row["tail_bound"], 1e-9)
        self.assertIn("# error_bound_columns: tail_bound\n", result.text)

    def test_solve_rows(self):
        result = run(RunConfig(command="solve", shape=BOX, n_min=4, n_max=4))
        (row,) = result.rows
        self.assertTrue(8 * math.pi**2 < row["lambda_solved"] < 10 * math.pi**2)

    def test_region_summary(self):
        result = run(RunConfig(command="coeffs", shape={"kind": "blob", "holes": 2}))
        self.assertEqual(result.exit_code, EXIT_OK)
        self.assertEqual(result.summary["hole_count"], 2)
        self.assertAlmostEqual(result.rows[2]["heat_coefficient"], -2 * math.pi / 3, places=12)

    def test_verify_without_oracle(self):
        config = RunConfig(command="verify", shape={"kind": "blob"}, lambda_max=100.0)
        result = run(config)
        self.assertEqual(result.exit_code, EXIT_NUMERICAL)
        self.assertEqual(result.error["error"], "unsupported")

    def test_density_rows_carry_tail_bound(self):
        config = RunConfig(command="density", shape=BOX, lambda_max=500.0, lambda_count=5)
        result = run(config)
        self.assertEqual(result.exit_code, EXIT_OK)
        for row in result.rows:
            if math.isnan(row["density_smoothed"]):
                self.assertEqual(row["tail_bound"], math.inf)
            else:
                self.assertLess(row["tail_bound"], 1e-9)
        self.assertEqual(result.rows[-1]["tail_bound"], math.inf)


    def test_verify_summary_for_square(self):
        bound = 2000 * math.pi**2
        result = run(RunConfig(command="verify", shape=BOX, lambda_max=bound, lambda_count=10))
        self.assertEqual(result.exit_code, EXIT_OK)
        summary = result.summary
        self.assertEqual(len(summary["window_means"]), 25)
        self.assertAlmostEqual(summary["window_means"][0]["start"], bound / 6, places=6)
        self.assertEqual(summary["window_means"][-1]["stop"], bound)
        self.assertLessEqual(summary["small_t_fit"]["max_relative_deviation"], 0.01)
        self.assertEqual(summary["sqrt_coefficient"]["supported_form"], "derived")
        self.assertAlmostEqual(summary["sqrt_coefficient"]["derived"], -1 / math.pi, places=14)
        for row in result.rows:
            self.assertEqual(row["tail_bound"], 0.0)
            self.assertGreaterEqual(row["inverse_check"], 0.0)

    def test_verify_summary_for_disk(self):
        config = RunConfig(
            command="verify", shape={"kind": "disk", "R": 1.0}, lambda_max=1e4, lambda_count=4
        )
        summary = run(config).summary
        sqrt_fit = summary["sqrt_coefficient"]
        self.assertEqual(sqrt_fit["supported_form"], "derived")
        self.assertLessEqual(sqrt_fit["relative_deviation"], 0.2)
        self.assertAlmostEqual(sqrt_fit["displayed"], -2.0, places=14)
        self.assertLessEqual(summary["inverse_check_at_bound"], 0.03)
        self.assertNotIn("small_t_fit", summary)

    def test_verify_window_means_for_ball(self):
        config = RunConfig(command="verify", shape={"kind": "ball3d"}, lambda_max=3000.0)
        summary = run(config).summary
        self.assertNotIn("sqrt_coefficient", summary)
        self.assertAlmostEqual(summary["window_means"][0]["start"], 500.0, places=9)
        self.assertAlmostEqual(summary["window_means"][0]["stop"], 600.0, places=9)
        self.assertLessEqual(summary["max_window_mean_over_leading"], 0.05)

    def test_stored_spectrum(self):
        spectrum = box_spectrum(BoxShape.cube(2), 1000.0)
        with tempfile.TemporaryDirectory() as tmp:
            path = serializers.dump(serializers.spectrum_to_dict(spectrum), Path(tmp) / "sq.json")
            stored = run(
                RunConfig(command="verify", shape=BOX, spectrum_file=str(path), lambda_max=500.0)
            )
            too_far = run(
                RunConfig(command="verify", shape=BOX, spectrum_file=str(path), lambda_max=2000.0)
            )
        generated = run(RunConfig(command="verify", shape=BOX, lambda_max=500.0))
        self.assertEqual(stored.summary["total_count"], 33)
        self.assertEqual(stored.rows, generated.rows)
        self.assertEqual(too_far.exit_code, EXIT_NUMERICAL)
        self.assertEqual(too_far.error["error"], "truncation")

    def test_stored_series(self):
        ball = {"kind": "ball3d"}
        series = serializers.series_to_dict(ball3d_counting_series(Ball3DShape(1.0)))
        with tempfile.TemporaryDirectory() as tmp:
            path = serializers.dump(series, Path(tmp) / "series.json")
            stored = run(RunConfig(command="transform", shape=ball, series_file=str(path)))
            mismatched = run(RunConfig(command="transform", shape=BOX, series_file=str(path)))
        self.assertEqual(stored.rows, run(RunConfig(command="transform", shape=ball)).rows)
        self.assertEqual(mismatched.exit_code, EXIT_USAGE)

    def test_bad_shape(self):
        result = run(RunConfig(command="coeffs", shape={"kind": "torus"}))
        self.assertEqual(result.exit_code, EXIT_USAGE)
        self.assertEqual(result.error["error"], "config")

    def test_coefficient_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "hk.json"
            path.write_text(json.dumps({"dimension": 2, "coefficients": {"0": 1.0, "4": 2.0}}))
            result = run(RunConfig(command="transform", coefficients_file=str(path)))
        self.assertEqual(result.exit_code, EXIT_OK)
        delta_rows = [row for row in result.rows if row["term"] == "delta"]
        self.assertEqual(len(delta_rows), 1)
        self.assertEqual(delta_rows[0]["delta_order"], 0)


class WeylkitCommandTests(TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.output_dir = Path(self.tmp.name)

    def call(self, *args, **options):
        stdout, self.stderr = StringIO(), StringIO()
        call_command("weylkit", *args, stdout=stdout, stderr=self.stderr, **options)
        return stdout.getvalue()

    def test_coeffs_to_stdout(self):
        text = self.call("coeffs", shape="ball3d", format="json")
        data = json.loads(text)
        self.assertEqual(data["provenance"]["command"], "coeffs")
        self.assertAlmostEqual(
            data["rows"][0]["counting_coefficient"], 2 / (9 * math.pi), places=14
        )

    def test_verify_writes_table_and_summary(self):
        with override_settings(WEYLKIT_OUTPUT_DIR=self.output_dir):
            text = self.call(
                "verify", shape="box", dimension=2, sides="1,1", lambda_max=1000.0, output="first.csv"
            )
            self.call(
                "verify", shape="box", dimension=2, sides="1,1", lambda_max=1000.0, output="second.csv"
            )
        self.assertIn("Wrote", text)
        first = self.output_dir / "first.csv"
        self.assertEqual(first.read_bytes(), (self.output_dir / "second.csv").read_bytes())
        summary = json.loads((self.output_dir / "first.csv.summary.json").read_text())
        self.assertEqual(summary["total_count"], 71)
        self.assertLess(abs(summary["mean_residual_over_leading"]), 0.05)

    def test_usage_error_exit_code(self):
        with self.assertRaises(SystemExit) as ctx:
            self.call("count", shape="box", lambda_max=100.0, lambda_count=0)
        self.assertEqual(ctx.exception.code, EXIT_USAGE)

    def test_config_file_type_error_exit_code(self):
        path = self.output_dir / "config.json"
        path.write_text(json.dumps({"lambda_max": 100.0, "lambda_count": "10"}))
        with self.assertRaises(SystemExit) as ctx:
            self.call("count", shape="box", config=str(path))
        self.assertEqual(ctx.exception.code, EXIT_USAGE)
        error = json.loads(self.stderr.getvalue())
        self.assertEqual(error["error"], "config")
        self.assertEqual(error["field"], "lambda_count")

    def test_negative_beta_exit_code(self):
        with self.assertRaises(SystemExit) as ctx:
            self.call("density", shape="box", lambda_max=100.0, beta=-1.0)
        self.assertEqual(ctx.exception.code, EXIT_USAGE)
        self.assertEqual(json.loads(self.stderr.getvalue())["field"], "beta")

    def test_numerical_error_exit_code(self):
        with self.assertRaises(SystemExit) as ctx:
            self.call("count", shape="ball3d", boundary="neumann_or_robin", lambda_max=100.0)
        self.assertEqual(ctx.exception.code, EXIT_NUMERICAL)

    def test_conflicting_shape_flags(self):
        with self.assertRaises(SystemExit) as ctx:
            self.call("coeffs", shape="box", shape_json='{"kind": "disk"}')
        self.assertEqual(ctx.exception.code, EXIT_USAGE)

    def test_runs_are_recorded(self):
        self.call("transform", shape="disk")
        run_record = ExperimentRun.objects.get()
        self.assertEqual(run_record.command, "transform")
        self.assertEqual(run_record.status, ExperimentRun.STATUS_SUCCEEDED)
        self.assertEqual(run_record.row_count, 3)

    def test_failures_are_recorded(self):
        with self.assertRaises(SystemExit):
            self.call("verify", shape="blob", lambda_max=100.0)
        self.assertEqual(ExperimentRun.objects.get().status, ExperimentRun.STATUS_FAILED)

    def test_no_record(self):
        self.call("transform", shape="disk", no_record=True)
        self.assertFalse(ExperimentRun.objects.exists())
