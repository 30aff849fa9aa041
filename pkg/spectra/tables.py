import csv
import hashlib
import io
import json
import logging
import math
from pathlib import Path

from spectra.errors import SchemaError

logger = logging.getLogger(__name__)

FORMATS = ("csv", "json")


def config_hash(config: dict) -> str:
    payload = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(payload.encode()).hexdigest()


def _csv_cell(value):
    if isinstance(value, bool) or value is None:
        return "" if value is None else str(value).lower()
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _json_value(value):
    # JSON has no inf/nan literals
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


def _schema(rows) -> list[str]:
    if not rows:
        raise SchemaError("Cannot emit an empty table")
    columns = list(rows[0])
    for index, row in enumerate(rows[1:], start=1):
        if list(row) != columns:
            raise SchemaError(
                f"Row {index} has columns {list(row)}, expected {columns}",
                row=index,
            )
    return columns


def render_table(rows: list[dict], fmt: str, provenance: dict | None = None) -> str:
    columns = _schema(rows)
    if fmt == "csv":
        buffer = io.StringIO()
        for key, value in (provenance or {}).items():
            buffer.write(f"# {key}: {_csv_cell(value)}\n")
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_csv_cell(row[column]) for column in columns])
        return buffer.getvalue()
    if fmt == "json":
        body = [{key: _json_value(value) for key, value in row.items()} for row in rows]
        if provenance is not None:
            body = {
                "provenance": {k: _json_value(v) for k, v in provenance.items()},
                "rows": body,
            }
        return json.dumps(body, indent=2, allow_nan=False) + "\n"
    raise SchemaError(f"Unknown table format {fmt!r}", formats=list(FORMATS))


def emit_table(
    rows: list[dict], fmt: str, path=None, provenance: dict | None = None
) -> str:
    """Render rows and, when ``path`` is given, write them there; identical input gives identical bytes."""
    text = render_table(rows, fmt, provenance)
    if path is not None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(text.encode("utf-8"))
        logger.info(f"Wrote {len(rows)} rows to {path}")
    return text
