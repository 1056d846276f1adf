"""Tabular input: typed columns, validation, CSV ingestion and standardization."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

FAMILIES = ("gaussian", "binomial")
CAT = "cat"
CONT = "cont"


class DataError(ValueError):
    """Raised for malformed input data or schemas."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Column:
    """One explanatory variable.

    Categorical values are level indices in ``1..levels``; every level in that
    range is declared even if it never occurs.
    """

    name: str
    kind: str
    values: np.ndarray
    levels: int | None = None

    def __post_init__(self):
        if self.kind == CAT:
            if self.levels is None or int(self.levels) < 2:
                raise DataError(f"column {self.name!r}: categorical needs levels >= 2")
            vals = np.asarray(self.values)
            if vals.dtype.kind == "f":
                if not np.all(np.isfinite(vals)) or np.any(vals != np.round(vals)):
                    raise DataError(f"column {self.name!r}: non-integer level")
            vals = vals.astype(np.int64)
            if vals.size and (vals.min() < 1 or vals.max() > self.levels):
                bad = vals[(vals < 1) | (vals > self.levels)][0]
                raise DataError(
                    f"column {self.name!r}: level out of range ({bad} not in 1..{self.levels})"
                )
            object.__setattr__(self, "levels", int(self.levels))
        elif self.kind == CONT:
            vals = np.asarray(self.values, dtype=np.float64)
            if not np.all(np.isfinite(vals)):
                raise DataError(f"column {self.name!r}: non-finite value")
            if self.levels is not None:
                raise DataError(f"column {self.name!r}: continuous columns take no levels")
        else:
            raise DataError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if vals.ndim != 1:
            raise DataError(f"column {self.name!r}: values must be one-dimensional")
        object.__setattr__(self, "values", _frozen(vals))

    @property
    def is_categorical(self) -> bool:
        return self.kind == CAT

    def spec(self) -> str:
        return f"{self.name}:cat:{self.levels}" if self.is_categorical else f"{self.name}:cont"


@dataclass(frozen=True)
class Dataset:
    """Response plus ordered typed columns. Immutable once built."""

    y: np.ndarray
    columns: tuple[Column, ...]
    family: str = "gaussian"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DataError(f"unknown family {self.family!r}")
        y = np.asarray(self.y, dtype=np.float64)
        if y.ndim != 1:
            raise DataError("response must be one-dimensional")
        if not np.all(np.isfinite(y)):
            raise DataError("response: non-finite value")
        if self.family == "binomial" and not np.all((y == 0) | (y == 1)):
            raise DataError("binomial response must be 0/1")
        cols = tuple(self.columns)
        names = [c.name for c in cols]
        if len(set(names)) != len(names):
            raise DataError("duplicate column names")
        for c in cols:
            if c.values.shape[0] != y.shape[0]:
                raise DataError(
                    f"column {c.name!r} has {c.values.shape[0]} entries, expected {y.shape[0]}"
                )
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "columns", cols)

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def p(self) -> int:
        return len(self.columns)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def column(self, name: str) -> Column:
        for c in self.columns:
            if c.name == name:
                return c
        raise DataError(f"unknown column {name!r}")

    def schema(self) -> list[str]:
        return [c.spec() for c in self.columns]

    def with_columns(self, columns: Sequence[Column]) -> "Dataset":
        return Dataset(self.y, tuple(columns), self.family)

    def with_response(self, y, family: str | None = None) -> "Dataset":
        return Dataset(y, self.columns, family or self.family)

    @cached_property
    def levels(self) -> np.ndarray:
        """Level count per column (0 for continuous)."""
        return np.array([c.levels or 0 for c in self.columns], dtype=np.int64)

    @cached_property
    def is_cat(self) -> np.ndarray:
        return self.levels > 0

    @cached_property
    def codes(self) -> np.ndarray:
        """(n, p) zero-based level codes; 0 in continuous columns."""
        out = np.zeros((self.n, self.p), dtype=np.int64)
        for k, c in enumerate(self.columns):
            if c.is_categorical:
                out[:, k] = c.values - 1
        out.flags.writeable = False
        return out

    @cached_property
    def cont(self) -> np.ndarray:
        """(n, p) continuous values; 0 in categorical columns."""
        out = np.zeros((self.n, self.p), dtype=np.float64)
        for k, c in enumerate(self.columns):
            if not c.is_categorical:
                out[:, k] = c.values
        out.flags.writeable = False
        return out

    def observed_levels(self) -> dict[str, list[int]]:
        return {
            c.name: sorted(int(v) for v in np.unique(c.values))
            for c in self.columns
            if c.is_categorical
        }


# ---------------------------------------------------------------------------
# Schema handling
# ---------------------------------------------------------------------------


def parse_schema(text: str | Sequence[str]) -> dict[str, tuple[str, int | None]]:
    """Parse ``name:cat:L`` / ``name:cont`` entries (comma or newline separated).

    A string starting with ``@`` is read from the named file.
    """
    if isinstance(text, str):
        if text.startswith("@"):
            text = Path(text[1:]).read_text(encoding="utf-8")
        entries = [e.strip() for chunk in text.splitlines() for e in chunk.split(",")]
    else:
        entries = [str(e).strip() for e in text]
    schema: dict[str, tuple[str, int | None]] = {}
    for entry in entries:
        if not entry or entry.startswith("#"):
            continue
        parts = [s.strip() for s in entry.split(":")]
        if len(parts) == 3 and parts[1] == CAT:
            try:
                L = int(parts[2])
            except ValueError:
                raise DataError(f"bad level count in schema entry {entry!r}") from None
            if L < 2:
                raise DataError(f"schema entry {entry!r}: categorical needs L >= 2")
            kind = (CAT, L)
        elif len(parts) == 2 and parts[1] == CONT:
            kind = (CONT, None)
        else:
            raise DataError(f"bad schema entry {entry!r}")
        if parts[0] in schema:
            raise DataError(f"duplicate schema entry for {parts[0]!r}")
        schema[parts[0]] = kind
    if not schema:
        raise DataError("empty schema")
    return schema


def _parse_number(raw: str, column: str, row: int) -> float:
    try:
        v = float(raw)
    except ValueError:
        raise DataError(f"non-numeric cell {raw!r} in column {column!r}, row {row}") from None
    if not math.isfinite(v):
        raise DataError(f"non-finite cell {raw!r} in column {column!r}, row {row}")
    return v


def load_csv(
    path: str | Path,
    schema: Mapping[str, tuple[str, int | None]] | str,
    response: str | None,
    family: str = "gaussian",
) -> Dataset:
    """Read a headed UTF-8 CSV into a validated :class:`Dataset`.

    Columns appear in schema order; header columns that are neither in the
    schema nor the response are ignored. Row order is preserved. With
    ``response=None`` the response is filled with zeros (prediction input).
    """
    if isinstance(schema, str):
        schema = parse_schema(schema)
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"empty file: {path}") from None
        rows = [r for r in reader if r and any(cell.strip() for cell in r)]
    index = {h: k for k, h in enumerate(header)}
    for name in list(schema) + ([response] if response is not None else []):
        if name not in index:
            raise DataError(f"unknown column {name!r} (not in header)")
    if response in schema:
        raise DataError(f"response {response!r} also listed in schema")
    width = len(header)
    for r_i, r in enumerate(rows, start=2):
        if len(r) != width:
            raise DataError(f"row {r_i} has {len(r)} cells, expected {width}")

    def numbers(name: str) -> np.ndarray:
        k = index[name]
        return np.array([_parse_number(r[k].strip(), name, i) for i, r in enumerate(rows, 2)])

    y = numbers(response) if response is not None else np.zeros(len(rows))
    columns = []
    for name, (kind, L) in schema.items():
        vals = numbers(name)
        columns.append(Column(name, kind, vals, L))
    return Dataset(y, tuple(columns), family)


def write_csv(ds: Dataset, path: str | Path, response: str = "y") -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([response] + ds.names)
        cols = [c.values for c in ds.columns]
        for i in range(ds.n):
            row = [repr(float(ds.y[i]))]
            for c, v in zip(ds.columns, cols):
                row.append(str(int(v[i])) if c.is_categorical else repr(float(v[i])))
            w.writerow(row)


# ---------------------------------------------------------------------------
# Standardization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StandardizationRecord:
    """Per continuous column: ``standardized = (raw - center) / scale``."""

    center: dict[str, float] = field(default_factory=dict)
    scale: dict[str, float] = field(default_factory=dict)

    def apply(self, ds: Dataset) -> Dataset:
        cols = []
        for c in ds.columns:
            if c.name in self.center:
                if c.is_categorical:
                    raise DataError(f"column {c.name!r} was continuous at standardization")
                vals = (c.values - self.center[c.name]) / self.scale[c.name]
                cols.append(Column(c.name, c.kind, vals))
            else:
                cols.append(c)
        return ds.with_columns(cols)

    def invert(self, ds: Dataset) -> Dataset:
        cols = []
        for c in ds.columns:
            if c.name in self.center:
                vals = c.values * self.scale[c.name] + self.center[c.name]
                cols.append(Column(c.name, c.kind, vals))
            else:
                cols.append(c)
        return ds.with_columns(cols)

    def to_dict(self) -> dict:
        return {
            name: {"center": self.center[name], "scale": self.scale[name]} for name in self.center
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "StandardizationRecord":
        return cls(
            {k: float(v["center"]) for k, v in d.items()},
            {k: float(v["scale"]) for k, v in d.items()},
        )


def standardize(ds: Dataset) -> tuple[Dataset, StandardizationRecord]:
    """Center each continuous column and scale it to unit Euclidean norm.

    Categorical columns pass through untouched. Raises :class:`DataError`
    naming the first constant column.
    """
    center, scale = {}, {}
    for c in ds.columns:
        if c.is_categorical:
            continue
        m = float(np.mean(c.values))
        centered = c.values - m
        s = float(np.linalg.norm(centered))
        # relative threshold: values like (5, 5, 5) leave only rounding noise
        if s <= 1e-12 * max(1.0, float(np.max(np.abs(c.values)))) * math.sqrt(ds.n):
            raise DataError(f"constant column {c.name!r}")
        center[c.name] = m
        scale[c.name] = s
    record = StandardizationRecord(center, scale)
    return record.apply(ds), record


def unstandardize(ds: Dataset, record: StandardizationRecord) -> Dataset:
    return record.invert(ds)
