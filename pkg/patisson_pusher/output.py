"""
This module defines the file formats written by the harness and the command-line front end.

CSV files are locale-independent: '.' is the decimal separator, floats are written with the shortest
representation that reads back to the same double (`repr`), rows end with a newline and the header row is
always present. Missing values (momentum of a model without vector potential) are empty fields.

The run manifest is plain structured text, one `key: value` pair per line, nested keys joined with dots.

Functions:
    - format_number: Serialize a number or None.
    - write_trajectory_csv: Write a trajectory record with its energy and momentum errors.
    - write_rows_csv: Write Pydantic models as rows under the given headers.
    - write_manifest: Write a manifest mapping.
"""

import csv
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, TextIO

from pydantic import BaseModel

from patisson_pusher.diagnostics import Quantity, TrajectoryRecord, drift_series

TRAJECTORY_COLUMNS = (
    "t",
    "x1",
    "x2",
    "x3",
    "v1",
    "v2",
    "v3",
    "energy",
    "energy_err",
    "momentum",
    "momentum_err",
    "fp_iters",
)


def format_number(value: Optional[float | int]) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, int)):
        return str(int(value))
    return repr(float(value))


def _format_field(value: Any) -> str:
    if isinstance(value, Enum):
        return str(value.value)
    if value is None or isinstance(value, (int, float)):
        return format_number(value)
    return str(value)


def write_trajectory_csv(record: TrajectoryRecord, stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(TRAJECTORY_COLUMNS)
    energy_errors = drift_series(record, Quantity.ENERGY)
    if record.has_momentum:
        momentum_errors = drift_series(record, Quantity.MOMENTUM)
    else:
        momentum_errors = [(sample.t, None) for sample in record.samples]
    for sample, (_, energy_err), (_, momentum_err) in zip(
        record.samples, energy_errors, momentum_errors, strict=True
    ):
        writer.writerow(
            [
                format_number(sample.t),
                *(format_number(c) for c in sample.x),
                *(format_number(c) for c in sample.v),
                format_number(sample.energy),
                format_number(energy_err),
                format_number(sample.momentum),
                format_number(momentum_err),
                format_number(sample.fp_iters),
            ]
        )


def write_rows_csv(rows: Iterable[BaseModel], columns: Mapping[str, str], stream: TextIO) -> None:
    """Write one CSV row per model; `columns` maps each header to the attribute it is read from."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(columns.keys())
    for row in rows:
        writer.writerow([_format_field(getattr(row, attribute)) for attribute in columns.values()])


def _flatten(mapping: Mapping[str, Any], prefix: str = "") -> Iterable[tuple[str, Any]]:
    for key, value in mapping.items():
        name = f"{prefix}{key}"
        if isinstance(value, Mapping):
            yield from _flatten(value, f"{name}.")
        elif isinstance(value, (list, tuple)):
            yield name, ",".join(_format_field(item) for item in value)
        else:
            yield name, value


def write_manifest(manifest: Mapping[str, Any], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as stream:
        for key, value in _flatten(manifest):
            stream.write(f"{key}: {_format_field(value)}\n")
