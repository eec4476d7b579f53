"""Long-format store of the original data and its completed copies."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DataError
from .dataset import DEFAULT_MISSING_CODES, ColumnarDataset, _parse_cell, Column

IMPUTATION_COLUMN = "_mi_m"


@dataclass
class ImputedStore:
    """Block 0 is the input; blocks 1..M are completed replicates."""

    original: ColumnarDataset
    imputations: list = field(default_factory=list)
    traces: list | None = None

    def __post_init__(self):
        for m, ds in enumerate(self.imputations, start=1):
            if ds.schema != self.original.schema or not np.array_equal(ds.ids, self.original.ids):
                raise DataError(f"replicate {m} does not share the schema and ids of the input")

    @property
    def M(self) -> int:
        return len(self.imputations)

    def block(self, m: int) -> ColumnarDataset:
        return self.original if m == 0 else self.imputations[m - 1]

    def imputed_mask(self, name):
        """Cells missing in the input and filled in the replicates."""
        state0 = self.original[name].state
        if not self.imputations:
            return np.zeros_like(state0, dtype=bool)
        return (state0 == 1) & (self.imputations[0][name].state == 0)


def _id_order(ids):
    try:
        keys = [float(i) for i in ids]
    except ValueError:
        keys = [str(i) for i in ids]
    return sorted(range(len(ids)), key=lambda i: keys[i])


def write_store(store: ImputedStore, path) -> None:
    """Write blocks ``m = 0..M`` contiguously, rows ordered by id within a block."""
    ds0 = store.original
    order = _id_order(ds0.ids.tolist())
    names = ds0.names
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow([IMPUTATION_COLUMN, ds0.id_name] + names)
        for m in range(store.M + 1):
            ds = store.block(m)
            cols = [ds[n] for n in names]
            for i in order:
                w.writerow([m, ds.ids[i]] + [c.cell_text(i) for c in cols])


def infer_schema(header, rows, codes, skip=2):
    """``real`` for columns whose cells all parse as numbers, ``label`` otherwise."""
    schema = {}
    for j, name in enumerate(header[skip:], start=skip):
        kind = "real"
        for row in rows:
            cell = row[j]
            if cell in codes:
                continue
            try:
                float(cell)
            except ValueError:
                kind = "label"
                break
        schema[name] = kind
    return schema


def load_store(path, schema: dict | None = None, missing_codes=DEFAULT_MISSING_CODES) -> ImputedStore:
    """Read a store written by :func:`write_store`; ``schema`` is inferred when omitted."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"store file {path} not found")
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader)
        rows = list(reader)
    if header[0] != IMPUTATION_COLUMN:
        raise DataError(f"{path.name}: first column must be {IMPUTATION_COLUMN}")
    id_name, names = header[1], header[2:]
    if schema is None:
        schema = infer_schema(header, rows, set(missing_codes))
    missing = [n for n in names if n not in schema]
    if missing:
        raise DataError(f"{path.name}: no schema entry for {missing}")
    blocks = {}
    for r, row in enumerate(rows, start=2):
        try:
            m = int(row[0])
        except ValueError:
            raise DataError(f"{path.name}:{r}: bad imputation index {row[0]!r}") from None
        blocks.setdefault(m, []).append(row)
    if sorted(blocks) != list(range(len(blocks))):
        raise DataError(f"{path.name}: imputation indices must run 0..M")
    codes = set(missing_codes)
    datasets = []
    for m in range(len(blocks)):
        brows = blocks[m]
        ids = np.array([row[1] for row in brows], dtype=object)
        cols = {}
        for j, n in enumerate(names):
            kind = schema[n]
            vals = np.empty(len(brows), dtype=object if kind == "label" else float)
            state = np.zeros(len(brows), dtype=np.int8)
            for i, row in enumerate(brows):
                v, s = _parse_cell(row[j + 2], kind, codes, f"{path.name}:block {m}:{n}")
                state[i] = s
                vals[i] = v if s == 0 else (None if kind == "label" else np.nan)
            cols[n] = Column(n, kind, vals, state)
        datasets.append(ColumnarDataset(ids, cols, id_name))
    return ImputedStore(datasets[0], datasets[1:])
