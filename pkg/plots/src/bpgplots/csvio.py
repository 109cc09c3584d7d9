"""Schema-checked reading of bpg-lab result CSVs."""

from __future__ import annotations

import csv
from pathlib import Path


class SchemaError(ValueError):
    """The CSV is not a schema=1 results file or lacks required columns."""


GRAD_COLUMNS = ["estimator", "M", "rep", "mse", "angular_error_deg"]
CURVE_COLUMNS = ["algo", "run", "update", "metric_name", "metric_value"]


def read_rows(path: str | Path, required: list[str]) -> list[dict]:
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != "# schema=1":
        raise SchemaError(f"{path}: missing '# schema=1' header line")
    reader = csv.DictReader(text[1:])
    have = reader.fieldnames or []
    missing = [c for c in required if c not in have]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing} (found {have})")
    rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows


def read_grad_compare(path: str | Path) -> list[dict]:
    return read_rows(path, GRAD_COLUMNS)


def read_curves(path: str | Path) -> list[dict]:
    return read_rows(path, CURVE_COLUMNS)
