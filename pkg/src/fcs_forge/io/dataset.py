"""Columnar datasets with per-cell observed / missing / ineligible states."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DataError

OBSERVED, MISSING, INELIGIBLE = 0, 1, 2
INELIGIBLE_CODE = "-99"
INELIGIBLE_VALUE = -99.0
DEFAULT_MISSING_CODES = ("", "NA", ".")

KINDS = ("real", "count", "binary", "ordered", "nominal", "label")
INTEGER_KINDS = ("count", "binary", "ordered", "nominal")


def format_number(value: float, kind: str) -> str:
    """Text form that parses back to the same float."""
    if kind in INTEGER_KINDS and float(value).is_integer():
        return str(int(value))
    return repr(float(value))


@dataclass
class Column:
    """One typed column.

    ``values`` is float (NaN where not observed) or, for ``label`` columns, an
    object array of strings. ``state`` holds OBSERVED, MISSING or INELIGIBLE
    per cell.
    """

    name: str
    kind: str
    values: np.ndarray
    state: np.ndarray

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"column {self.name!r}: unknown kind {self.kind!r}")
        # own copies: non-observed cells are overwritten below
        self.state = np.array(self.state, dtype=np.int8)
        if self.kind == "label":
            self.values = np.array(self.values, dtype=object)
        else:
            self.values = np.array(self.values, dtype=float)
            obs = self.state == OBSERVED
            if not np.all(np.isfinite(self.values[obs])):
                raise DataError(f"column {self.name!r}: observed cells must be finite")
            self.values[~obs] = np.nan
            _check_kind(self.name, self.kind, self.values[obs])
        if self.values.shape != self.state.shape:
            raise DataError(f"column {self.name!r}: values and states differ in length")

    def copy(self):
        return Column(self.name, self.kind, self.values.copy(), self.state.copy())

    def cell_text(self, i: int) -> str:
        s = self.state[i]
        if s == INELIGIBLE:
            return INELIGIBLE_CODE
        if s == MISSING:
            return ""
        if self.kind == "label":
            return str(self.values[i])
        return format_number(self.values[i], self.kind)


def _check_kind(name, kind, vals):
    if kind in INTEGER_KINDS and vals.size and not np.all(vals == np.round(vals)):
        raise DataError(f"column {name!r}: {kind} values must be integers")
    if kind == "count" and np.any(vals < 0):
        raise DataError(f"column {name!r}: counts must be non-negative")
    if kind == "binary" and not np.all((vals == 0) | (vals == 1)):
        raise DataError(f"column {name!r}: binary values must be 0 or 1")


@dataclass
class ColumnarDataset:
    ids: np.ndarray
    columns: dict = field(default_factory=dict)
    id_name: str = "id"

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=object)
        if len(set(self.ids.tolist())) != self.ids.size:
            raise DataError("ids are not unique")
        for c in self.columns.values():
            if c.values.shape[0] != self.ids.size:
                raise DataError(f"column {c.name!r} has {c.values.shape[0]} rows, expected {self.ids.size}")

    @property
    def n(self) -> int:
        return self.ids.size

    @property
    def names(self):
        return list(self.columns)

    @property
    def schema(self):
        return {k: c.kind for k, c in self.columns.items()}

    def __getitem__(self, name) -> Column:
        return self.columns[name]

    def copy(self):
        return ColumnarDataset(self.ids.copy(), {k: c.copy() for k, c in self.columns.items()}, self.id_name)

    def equals(self, other) -> bool:
        if self.id_name != other.id_name or self.schema != other.schema:
            return False
        if not np.array_equal(self.ids, other.ids):
            return False
        for k, c in self.columns.items():
            o = other.columns[k]
            if not np.array_equal(c.state, o.state):
                return False
            obs = c.state == OBSERVED
            if not np.array_equal(c.values[obs], o.values[obs]):
                return False
        return True


def _parse_cell(text, kind, missing_codes, where):
    if text == INELIGIBLE_CODE or (kind != "label" and _is_float(text) and float(text) == INELIGIBLE_VALUE):
        return None, INELIGIBLE
    if text in missing_codes:
        return None, MISSING
    if kind == "label":
        return text, OBSERVED
    try:
        v = float(text)
    except ValueError:
        raise DataError(f"{where}: cannot parse {text!r} as {kind}") from None
    if not math.isfinite(v):
        raise DataError(f"{where}: non-finite value {text!r}")
    return v, OBSERVED


def _is_float(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


def load_dataset(path, schema: dict, id_column: str = "id", missing_codes=DEFAULT_MISSING_CODES) -> ColumnarDataset:
    """Read a CSV file into a :class:`ColumnarDataset`.

    ``schema`` maps every non-id column to its kind. Cells equal to a code in
    ``missing_codes`` become MISSING and ``-99`` becomes INELIGIBLE.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"data file {path} not found")
    missing_codes = set(missing_codes)
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path.name}: empty file") from None
        if id_column not in header:
            raise DataError(f"{path.name}: id column {id_column!r} not found")
        unknown = [h for h in header if h != id_column and h not in schema]
        if unknown:
            raise DataError(f"{path.name}: columns without a schema entry: {unknown}")
        absent = [k for k in schema if k not in header]
        if absent:
            raise DataError(f"{path.name}: schema columns missing from file: {absent}")
        rows = list(reader)
    pos = {h: i for i, h in enumerate(header)}
    ids = []
    for r, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise DataError(f"{path.name}:{r}: expected {len(header)} fields, found {len(row)}")
        ids.append(row[pos[id_column]])
    columns = {}
    for name, kind in schema.items():
        if kind not in KINDS:
            raise DataError(f"column {name!r}: unknown kind {kind!r}")
        vals = np.empty(len(rows), dtype=object if kind == "label" else float)
        state = np.zeros(len(rows), dtype=np.int8)
        for r, row in enumerate(rows):
            v, s = _parse_cell(row[pos[name]], kind, missing_codes, f"{path.name}:{r + 2}:{name}")
            state[r] = s
            vals[r] = v if s == OBSERVED else (None if kind == "label" else np.nan)
        try:
            columns[name] = Column(name, kind, vals, state)
        except DataError as exc:
            raise DataError(f"{path.name}: {exc}") from None
    return ColumnarDataset(np.array(ids, dtype=object), columns, id_column)


def write_dataset(ds: ColumnarDataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow([ds.id_name] + ds.names)
        cols = list(ds.columns.values())
        for i in range(ds.n):
            w.writerow([ds.ids[i]] + [c.cell_text(i) for c in cols])
