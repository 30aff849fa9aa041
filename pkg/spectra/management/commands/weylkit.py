import json
import logging

from django.conf import settings
from django.core.management.base import BaseCommand
from django.db import DatabaseError

from spectra import serializers
from spectra.errors import ConfigError, SpectralError
from spectra.models import ExperimentRun
from spectra.runner import COMMANDS, EXIT_USAGE, SHAPE_KINDS, RunConfig, run
from spectra.shapes import BOUNDARY_CHOICES
from spectra.tables import FORMATS

logger = logging.getLogger(__name__)

# flag dest -> RunConfig field
PASSTHROUGH = {
    "coefficients": "coefficients_file",
    "spectrum_file": "spectrum_file",
    "series_file": "series_file",
    "lambda_max": "lambda_max",
    "lambda_min": "lambda_min",
    "lambda_count": "lambda_count",
    "spacing": "lambda_spacing",
    "t_min": "t_min",
    "t_max": "t_max",
    "t_count": "t_count",
    "n_min": "n_min",
    "n_max": "n_max",
    "n_step": "n_step",
    "format": "format",
    "output": "output",
    "tail_cutoff": "tail_cutoff",
    "tolerance": "tolerance",
    "beta": "beta",
    "threads": "workers",
}


class Command(BaseCommand):
    help = "Run a spectral-asymptotics experiment and emit its table"

    def add_arguments(self, parser):
        parser.add_argument("command", choices=COMMANDS)
        parser.add_argument("--shape", choices=SHAPE_KINDS)
        parser.add_argument("--shape-json", help="Inline shape object, e.g. '{\"kind\": \"disk\", \"R\": 1}'")
        parser.add_argument("--D", dest="dimension", type=int)
        parser.add_argument("--L", dest="sides", help="Comma-separated box side lengths")
        parser.add_argument("--R", dest="radius", type=float)
        parser.add_argument("--boundary", choices=[value for value, _ in BOUNDARY_CHOICES])
        parser.add_argument("--holes", type=int, help="Hole count for the blob region")
        parser.add_argument("--region-file")
        parser.add_argument("--coefficients", help="Heat-kernel coefficient JSON file")
        parser.add_argument("--spectrum-file", help="Stored spectrum JSON used instead of the generator")
        parser.add_argument("--series-file", help="Stored counting series JSON used instead of the transform")
        parser.add_argument("--lambda-max", type=float)
        parser.add_argument("--lambda-min", type=float)
        parser.add_argument("--lambda-count", type=int)
        parser.add_argument("--spacing", choices=["linear", "log"])
        parser.add_argument("--t-min", type=float)
        parser.add_argument("--t-max", type=float)
        parser.add_argument("--t-count", type=int)
        parser.add_argument("--n-min", type=int)
        parser.add_argument("--n-max", type=int)
        parser.add_argument("--n-step", type=int)
        parser.add_argument("--format", choices=FORMATS)
        parser.add_argument("--output")
        parser.add_argument("--config", help="JSON file of RunConfig fields; flags override it")
        parser.add_argument("--tail-cutoff", type=float)
        parser.add_argument("--tolerance", type=float)
        parser.add_argument("--beta", type=float)
        parser.add_argument("--threads", type=int)
        parser.add_argument("--no-record", action="store_true")

    def handle(self, *args, **options):
        try:
            config = self._build_config(options)
        except SpectralError as exc:
            self._fail(EXIT_USAGE, exc.as_dict())

        result = run(config)
        if getattr(settings, "WEYLKIT_RECORD_RUNS", True) and not options["no_record"]:
            self._record(config, result)

        if result.exit_code:
            self._fail(result.exit_code, result.error)
        if config.output is None:
            self.stdout.write(result.text, ending="")
        else:
            for artifact in result.artifacts:
                self.stdout.write(f"Wrote {artifact}")

    def _build_config(self, options) -> RunConfig:
        file_options = None
        if options.get("config"):
            try:
                file_options = serializers.load(options["config"])
            except OSError as exc:
                raise ConfigError(f"Cannot read config file: {exc}") from exc
            if not isinstance(file_options, dict):
                raise ConfigError("The config file must hold a JSON object")

        flags = {"command": options["command"]}
        flags.update(
            {field: options.get(dest) for dest, field in PASSTHROUGH.items()}
        )
        flags["shape"] = self._shape_from_flags(options)
        return RunConfig.from_options(flags, file_options)

    def _shape_from_flags(self, options):
        if options.get("shape_json"):
            if options.get("shape"):
                raise ConfigError("Use either --shape or --shape-json, not both")
            try:
                shape = json.loads(options["shape_json"])
            except json.JSONDecodeError as exc:
                raise ConfigError(f"--shape-json is not valid JSON: {exc}") from exc
            if not isinstance(shape, dict):
                raise ConfigError("--shape-json must be a JSON object")
            return shape
        if not options.get("shape"):
            return None
        shape = {"kind": options["shape"]}
        extras = {
            "D": options.get("dimension"),
            "L": options.get("sides"),
            "R": options.get("radius"),
            "boundary": options.get("boundary"),
            "holes": options.get("holes"),
            "file": options.get("region_file"),
        }
        shape.update({key: value for key, value in extras.items() if value is not None})
        return shape

    def _record(self, config, result):
        try:
            ExperimentRun.objects.create(
                command=config.command,
                config_hash=config.digest,
                config=config.as_dict(),
                status=ExperimentRun.status_for(result.exit_code),
                exit_code=result.exit_code,
                output_path=config.output or "",
                row_count=len(result.rows),
                error=result.error,
            )
        except DatabaseError as e:
            logger.warning(f"Run was not recorded, is the database migrated? {e}")

    def _fail(self, code, error):
        self.stderr.write(json.dumps(error, sort_keys=True))
        raise SystemExit(code)
