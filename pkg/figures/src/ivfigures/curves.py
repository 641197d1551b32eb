"""Strict parser for the curve files emitted by the estimation suite.

Expected schema: a header line ``x,estimator,mean,stderr,oracle,masked``
followed by value rows. Every cell must be present and parse (floats for the
numeric columns, 0/1 for masked); violations raise :class:`SchemaError`
carrying the offending line number.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

HEADER = ["x", "estimator", "mean", "stderr", "oracle", "masked"]


class SchemaError(Exception):
    """Input does not match the documented curve-file schema."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class CurveData:
    """Parsed curves: per-estimator arrays aligned on the x grid."""

    estimators: tuple
    x: dict        # estimator -> x values
    mean: dict
    stderr: dict
    oracle: dict
    masked: dict

    @property
    def n_rows(self) -> int:
        return sum(v.shape[0] for v in self.x.values())


def _parse_float(cell: str, column: str, lineno: int) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise SchemaError(f"cannot parse {cell!r} in column {column}", lineno) from None
    if not np.isfinite(value):
        raise SchemaError(f"non-finite value in column {column}", lineno)
    return value


def read_curves(path: Union[str, Path]) -> CurveData:
    """Parse a curve file, strictly."""
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"file not found: {path}", 0)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if not rows:
        raise SchemaError("empty file", 0)
    if rows[0] != HEADER:
        raise SchemaError(f"header must be {','.join(HEADER)}; got {','.join(rows[0])}", 1)
    if len(rows) == 1:
        raise SchemaError("no data rows", 1)

    order: list = []
    series: dict = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(HEADER):
            raise SchemaError(f"expected {len(HEADER)} cells, got {len(row)}", lineno)
        x = _parse_float(row[0], "x", lineno)
        name = row[1]
        if not name:
            raise SchemaError("empty estimator name", lineno)
        mean = _parse_float(row[2], "mean", lineno)
        stderr = _parse_float(row[3], "stderr", lineno)
        oracle = _parse_float(row[4], "oracle", lineno)
        if row[5] not in ("0", "1"):
            raise SchemaError(f"masked must be 0 or 1, got {row[5]!r}", lineno)
        if name not in series:
            order.append(name)
            series[name] = []
        series[name].append((x, mean, stderr, oracle, int(row[5])))

    data = CurveData(
        estimators=tuple(order),
        x={}, mean={}, stderr={}, oracle={}, masked={},
    )
    for name, vals in series.items():
        arr = np.array(vals)
        data.x[name] = arr[:, 0]
        data.mean[name] = arr[:, 1]
        data.stderr[name] = arr[:, 2]
        data.oracle[name] = arr[:, 3]
        data.masked[name] = arr[:, 4].astype(int)
    return data
