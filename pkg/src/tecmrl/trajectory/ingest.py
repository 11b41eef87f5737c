"""CSV ingestion driven by a JSON schema mapping columns to fields and units."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from ..errors import DataError, ValidationError
from ..scoring import VITAL_FIELDS, VITAL_UNITS

MANDATORY = ("patient_id", "timestamp", "discharge_time")
OPTIONAL = ("death_time", "onset_time", "dose", "weight")

# multiplicative factors into the canonical unit
UNIT_FACTORS: dict[str, dict[str, float]] = {
    "bilirubin": {"umol/L": 1.0, "mg/dL": 17.104},
    "creatinine": {"umol/L": 1.0, "mg/dL": 88.42},
    "platelets": {"10^3/uL": 1.0, "10^9/L": 1.0},
    "urine_output": {"mL/day": 1.0, "mL/h": 24.0},
    "dose": {"U/kg/h": 1.0, "U/h": 1.0},
    "weight": {"kg": 1.0},
}
TIME_FACTORS = {"min": 1.0, "h": 60.0, "day": 1440.0}


@dataclass(frozen=True)
class RawRecord:
    patient_id: str
    time: float
    discharge_time: float
    vitals: dict[str, float] = field(default_factory=dict)
    dose: float | None = None
    death_time: float | None = None
    onset_time: float | None = None


@dataclass
class IngestReport:
    records: list[RawRecord]
    errors: list[tuple[int, str]]

    @property
    def n_malformed(self) -> int:
        return len(self.errors)


@dataclass(frozen=True)
class Schema:
    columns: dict[str, str]
    units: dict[str, str]
    time_unit: str = "min"

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Schema":
        cols = d.get("columns")
        if not isinstance(cols, dict):
            raise ValidationError("schema needs a 'columns' object")
        known = set(MANDATORY) | set(OPTIONAL) | set(VITAL_FIELDS)
        unknown = set(cols) - known
        if unknown:
            raise ValidationError(f"schema maps unknown fields: {sorted(unknown)}")
        missing = [m for m in MANDATORY if m not in cols]
        if missing:
            raise ValidationError(f"schema lacks mandatory fields: {missing}")
        units = dict(d.get("units", {}))
        for name, unit in units.items():
            canonical = VITAL_UNITS.get(name)
            allowed = UNIT_FACTORS.get(name, {canonical: 1.0} if canonical else {})
            if unit not in allowed:
                raise ValidationError(f"unit mismatch for {name}: {unit!r} not in {sorted(allowed)}")
        if units.get("dose") == "U/h" and "weight" not in cols:
            raise ValidationError("dose in U/h needs a weight column to convert to U/kg/h")
        time_unit = d.get("time_unit", "min")
        if time_unit not in TIME_FACTORS:
            raise ValidationError(f"time_unit must be one of {sorted(TIME_FACTORS)}")
        return cls(columns=dict(cols), units=units, time_unit=time_unit)

    @classmethod
    def load(cls, path: str | Path) -> "Schema":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"schema {path} is not valid JSON: {exc}") from None


def _number(text: str | None) -> float | None:
    if text is None or text.strip() == "":
        return None
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"non-finite value {text!r}")
    return value


def ingest_csv(path: str | Path, schema: Schema | dict) -> IngestReport:
    """Read typed records; bad rows are collected in ``errors``, not dropped silently."""
    if isinstance(schema, dict):
        schema = Schema.from_dict(schema)
    tf = TIME_FACTORS[schema.time_unit]
    records: list[RawRecord] = []
    errors: list[tuple[int, str]] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        absent = [f"{k} ({c})" for k, c in schema.columns.items() if c not in header]
        if absent:
            raise DataError(f"CSV {path} is missing declared columns: {absent}")
        for lineno, row in enumerate(reader, 2):
            try:
                records.append(_parse_row(row, schema, tf))
            except ValueError as exc:
                errors.append((lineno, str(exc)))
    return IngestReport(records, errors)


def _parse_row(row: dict[str, str], schema: Schema, tf: float) -> RawRecord:
    cols = schema.columns

    def get(name):
        return _number(row.get(cols[name])) if name in cols else None

    pid = (row.get(cols["patient_id"]) or "").strip()
    if not pid:
        raise ValueError("empty patient id")
    time, discharge = get("timestamp"), get("discharge_time")
    if time is None or discharge is None:
        raise ValueError("timestamp and discharge_time are required")
    death, onset = get("death_time"), get("onset_time")
    if death is not None and death > discharge:
        raise ValueError("death timestamp after discharge timestamp")
    vitals = {}
    for name in VITAL_FIELDS:
        value = get(name)
        if value is None:
            continue
        if value < 0:
            raise ValueError(f"negative {name}: {value}")
        value *= UNIT_FACTORS.get(name, {}).get(schema.units.get(name, ""), 1.0)
        if name == "gcs" and not 3 <= value <= 15:
            raise ValueError(f"GCS out of range: {value}")
        vitals[name] = value
    dose = get("dose")
    if dose is not None:
        if dose < 0:
            raise ValueError(f"negative dose: {dose}")
        if schema.units.get("dose") == "U/h":
            weight = get("weight")
            if not weight or weight <= 0:
                raise ValueError("dose in U/h needs a positive weight")
            dose = dose / weight
    return RawRecord(
        patient_id=pid,
        time=time * tf,
        discharge_time=discharge * tf,
        vitals=vitals,
        dose=dose,
        death_time=None if death is None else death * tf,
        onset_time=None if onset is None else onset * tf,
    )
