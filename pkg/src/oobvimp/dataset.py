"""Tabular data container and CSV ingestion.

Only numeric and 0/1 columns are supported. Missing or non-finite cells
are rejected at load time; nothing downstream ever imputes.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError

KINDS = ("numeric", "binary")
ROLES = ("covariate", "response", "time", "event", "ignore")

# integer, decimal, or scientific literal; no "nan", "inf", "1_000", hex
_NUMBER = re.compile(r"^[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?$")


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str = "numeric"
    role: str = "covariate"

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise DataError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.role not in ROLES:
            raise DataError(f"column {self.name!r}: unknown role {self.role!r}")


@dataclass(frozen=True)
class Dataset:
    """Immutable column store. Vectors are read-only float64 arrays."""

    specs: tuple[ColumnSpec, ...]
    values: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        if len(self.specs) != len(self.values):
            raise DataError("one value vector is required per column spec")
        names = [s.name for s in self.specs]
        if len(set(names)) != len(names):
            raise DataError(f"duplicate column names in schema: {names}")
        lengths = {len(v) for v in self.values}
        if len(lengths) > 1:
            raise DataError(f"column vectors differ in length: {sorted(lengths)}")
        frozen = []
        for spec, vec in zip(self.specs, self.values):
            arr = np.array(vec, dtype=np.float64)
            _check_column(spec, arr)
            arr.flags.writeable = False
            frozen.append(arr)
        object.__setattr__(self, "values", tuple(frozen))
        if self.n_rows < 2:
            raise DataError(f"a dataset needs at least 2 rows, got {self.n_rows}")

    @property
    def n_rows(self) -> int:
        return len(self.values[0]) if self.values else 0

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.specs]

    def spec(self, name: str) -> ColumnSpec:
        for s in self.specs:
            if s.name == name:
                return s
        raise DataError(f"unknown column {name!r}")

    def with_roles(self, roles: dict[str, str]) -> Dataset:
        """Return a copy whose column roles are updated from ``roles``."""
        specs = tuple(
            ColumnSpec(s.name, s.kind, roles.get(s.name, s.role)) for s in self.specs
        )
        return Dataset(specs, self.values)

    def take(self, rows: Sequence[int] | np.ndarray) -> Dataset:
        """Row subset, in the order given."""
        idx = np.asarray(rows, dtype=np.intp)
        return Dataset(self.specs, tuple(v[idx] for v in self.values))


def column(dataset: Dataset, name: str) -> np.ndarray:
    """Look up a column vector by name."""
    for spec, vec in zip(dataset.specs, dataset.values):
        if spec.name == name:
            return vec
    raise DataError(f"unknown column {name!r}")


def _check_column(spec: ColumnSpec, arr: np.ndarray) -> None:
    if arr.ndim != 1:
        raise DataError(f"column {spec.name!r} must be one-dimensional")
    bad = np.flatnonzero(~np.isfinite(arr))
    if bad.size:
        raise DataError(
            f"column {spec.name!r}: non-finite value at row {int(bad[0]) + 1}"
        )
    if spec.kind == "binary" or spec.role == "event":
        bad = np.flatnonzero((arr != 0.0) & (arr != 1.0))
        if bad.size:
            raise DataError(
                f"binary column out of range: column {spec.name!r} "
                f"row {int(bad[0]) + 1} has value {arr[bad[0]]!r}"
            )
    if spec.role == "time":
        bad = np.flatnonzero(arr <= 0.0)
        if bad.size:
            raise DataError(
                f"survival time must be positive: column {spec.name!r} "
                f"row {int(bad[0]) + 1} has value {arr[bad[0]]!r}"
            )


def parse_number(text: str, row: int, name: str) -> float:
    s = text.strip()
    if not _NUMBER.match(s):
        raise DataError(f"unparseable cell {text!r} at row {row}, column {name!r}")
    value = float(s)
    if not np.isfinite(value):
        raise DataError(f"non-finite cell {text!r} at row {row}, column {name!r}")
    return value


def read_header(path: str | Path) -> list[str]:
    """Return the header row of a CSV file."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            header = next(csv.reader(fh), None)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from exc
    if not header:
        raise DataError(f"{path}: empty file")
    return [h.strip() for h in header]


def load_csv(path: str | Path, schema: Iterable[ColumnSpec]) -> Dataset:
    """Load a CSV file and validate it against ``schema``.

    Columns present in the file but absent from the schema are skipped.
    Row numbers in error messages count data rows from 1.

    Raises:
        DataError: missing column, unparseable cell, binary value outside
            {0, 1}, or non-positive survival time.
    """
    schema = list(schema)
    header = read_header(path)
    positions = {}
    for spec in schema:
        if spec.name not in header:
            raise DataError(f"missing column {spec.name!r} in {path}")
        positions[spec.name] = header.index(spec.name)

    cols: dict[str, list[float]] = {s.name: [] for s in schema}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"row {row_no} has {len(row)} fields, header has {len(header)}"
                )
            for spec in schema:
                cols[spec.name].append(parse_number(row[positions[spec.name]], row_no, spec.name))
    return Dataset(tuple(schema), tuple(np.asarray(cols[s.name]) for s in schema))


def dataset_csv(dataset: Dataset) -> str:
    """CSV text from which :func:`load_csv` reproduces ``dataset`` bit-exactly."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(dataset.names)
    for i in range(dataset.n_rows):
        writer.writerow([format(float(v[i]), ".17g") for v in dataset.values])
    return buf.getvalue()


def write_csv(dataset: Dataset, path: str | Path) -> None:
    Path(path).write_text(dataset_csv(dataset), encoding="utf-8")


def check_roles(specs: Iterable[ColumnSpec], family: str) -> None:
    """Ensure the response roles are consistent with the model family."""
    roles = [s.role for s in specs]
    if family == "cox":
        if roles.count("time") != 1 or roles.count("event") != 1:
            raise DataError("the cox family needs exactly one time and one event column")
        if "response" in roles:
            raise DataError("the cox family takes time/event columns, not a response")
    elif family in ("linear", "logistic"):
        if roles.count("response") != 1:
            raise DataError(f"the {family} family needs exactly one response column")
        if "time" in roles or "event" in roles:
            raise DataError("time/event columns are only valid for the cox family")
    else:
        raise DataError(f"unknown family {family!r}")
