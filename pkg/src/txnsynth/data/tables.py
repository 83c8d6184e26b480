"""Profile and auxiliary tables plus their CSV formats.

Profiles CSV: header ``client_id,<cat_1>,...,<cat_K>``, one row per client-month,
plain decimal amounts (no thousands separators). Aux CSV: header
``client_id,age,salary,credit_limit,balance,last_repayment``. Floats are written
with ``repr`` (shortest round-trip form) so save/load is bit-exact.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ParseError, ShapeError, UsageError

AUX_COLUMNS = ("age", "salary", "credit_limit", "balance", "last_repayment")
SPACES = ("dollars", "log")

# SIC/MCC-style merchant category labels used by the simulator
DEFAULT_CATEGORIES = (
    "5411_grocery",
    "5812_restaurants",
    "5541_gas_stations",
    "5912_pharmacies",
    "5311_department_stores",
    "5651_clothing",
    "5814_fast_food",
    "4814_telecom",
    "4900_utilities",
    "5732_electronics",
    "4111_transit",
    "4121_taxis",
    "5813_bars",
    "7832_cinema",
    "5942_books",
    "5945_toys",
    "5200_home_improvement",
    "5712_furniture",
    "8011_doctors",
    "8021_dentists",
    "5995_pet_supplies",
    "7230_beauty",
    "5941_sporting_goods",
    "4511_airlines",
    "7011_hotels",
    "5999_misc_retail",
)


@dataclass(frozen=True)
class ProfileTable:
    client_ids: tuple
    categories: tuple
    amounts: np.ndarray
    space: str = "dollars"

    def __post_init__(self):
        object.__setattr__(self, "client_ids", tuple(str(c) for c in self.client_ids))
        object.__setattr__(self, "categories", tuple(str(c) for c in self.categories))
        amounts = np.asarray(self.amounts, dtype=np.float64)
        if amounts.ndim != 2:
            amounts = amounts.reshape(len(self.client_ids), len(self.categories))
        object.__setattr__(self, "amounts", amounts)
        if self.space not in SPACES:
            raise UsageError(f"unknown space tag {self.space!r}")
        if amounts.shape != (len(self.client_ids), len(self.categories)):
            raise ShapeError(
                f"amounts {amounts.shape} vs {len(self.client_ids)} ids x "
                f"{len(self.categories)} categories"
            )
        if amounts.size and (not np.all(np.isfinite(amounts)) or amounts.min() < 0):
            raise ValueError("profile amounts must be finite and non-negative")

    def __len__(self):
        return len(self.client_ids)

    def take(self, rows) -> "ProfileTable":
        rows = np.asarray(rows, dtype=np.intp)
        return ProfileTable(
            tuple(self.client_ids[i] for i in rows), self.categories, self.amounts[rows], self.space
        )

    def with_amounts(self, amounts, space=None) -> "ProfileTable":
        return ProfileTable(self.client_ids, self.categories, amounts, space or self.space)

    def column_index(self, names) -> list[int]:
        lookup = {c: i for i, c in enumerate(self.categories)}
        missing = [n for n in names if n not in lookup]
        if missing:
            raise KeyError(missing)
        return [lookup[n] for n in names]


@dataclass(frozen=True)
class AuxTable:
    client_ids: tuple
    values: np.ndarray
    standardized: bool = False

    columns = AUX_COLUMNS

    def __post_init__(self):
        object.__setattr__(self, "client_ids", tuple(str(c) for c in self.client_ids))
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            values = values.reshape(len(self.client_ids), -1)
        object.__setattr__(self, "values", values)
        if values.shape[1] != len(AUX_COLUMNS):
            raise ShapeError(f"aux table needs {len(AUX_COLUMNS)} columns, got {values.shape[1]}")
        if not self.standardized and len(values):
            if np.any(values[:, 0] <= 0):
                raise ValueError("age must be positive")
            if np.any(values[:, 2] < 0):
                raise ValueError("credit_limit must be non-negative")

    def __len__(self):
        return len(self.client_ids)

    def take(self, rows) -> "AuxTable":
        rows = np.asarray(rows, dtype=np.intp)
        return AuxTable(tuple(self.client_ids[i] for i in rows), self.values[rows], self.standardized)


def check_aligned(profiles: ProfileTable, aux: AuxTable) -> None:
    if profiles.client_ids != aux.client_ids:
        raise ShapeError("profile and aux tables are not row-aligned by client_id")


def _fmt(x: float) -> str:
    return repr(float(x))


def _write(path, header, ids, values):
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for cid, row in zip(ids, values):
            w.writerow([cid] + [_fmt(v) for v in row])


def _read(path, expected=None):
    """Returns (header columns after client_id, ids, float matrix)."""
    path = Path(path)
    with path.open("r", newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0]:
        raise ParseError("missing header", path, 1)
    header = [h.strip() for h in rows[0]]
    if header[0] != "client_id":
        raise ParseError(f"first header column must be client_id, got {header[0]!r}", path, 1)
    cols = header[1:]
    if len(set(cols)) != len(cols):
        dup = sorted({c for c in cols if cols.count(c) > 1})
        raise ParseError(f"duplicate columns {dup}", path, 1)
    if expected is not None:
        expected = list(expected)
        unknown = [c for c in cols if c not in expected]
        missing = [c for c in expected if c not in cols]
        if unknown or missing:
            parts = []
            if unknown:
                parts.append(f"unknown columns {unknown}")
            if missing:
                parts.append(f"missing columns {missing}")
            raise ParseError("; ".join(parts), path, 1)
        if cols != expected:
            raise ParseError(f"columns out of order; expected {expected}", path, 1)
    ids, data, seen = [], [], {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", path, lineno)
        cid = row[0].strip()
        if cid in seen:
            raise ParseError(f"duplicate client_id {cid!r} (first at line {seen[cid]})", path, lineno)
        seen[cid] = lineno
        vals = []
        for name, cell in zip(cols, row[1:]):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"non-numeric value {cell!r}", path, lineno, name) from None
            if not math.isfinite(v):
                raise ParseError(f"non-finite value {cell!r}", path, lineno, name)
            vals.append(v)
        ids.append(cid)
        data.append(vals)
    matrix = np.array(data, dtype=np.float64).reshape(len(ids), len(cols))
    return cols, ids, matrix


def save_profiles_csv(table: ProfileTable, path) -> None:
    _write(path, ["client_id", *table.categories], table.client_ids, table.amounts)


def load_profiles_csv(path, categories=None, space: str = "dollars") -> ProfileTable:
    """Parse a profiles CSV. ``categories``, when given, must match the header exactly."""
    cols, ids, m = _read(path, categories)
    neg = np.argwhere(m < 0)
    if len(neg):
        r, c = neg[0]
        raise ParseError(f"negative amount {m[r, c]!r}", path, int(r) + 2, cols[c])
    return ProfileTable(tuple(ids), tuple(cols), m, space)


def save_aux_csv(table: AuxTable, path) -> None:
    if table.standardized:
        raise UsageError("standardized aux values are not written to CSV")
    _write(path, ["client_id", *AUX_COLUMNS], table.client_ids, table.values)


def load_aux_csv(path) -> AuxTable:
    cols, ids, m = _read(path, AUX_COLUMNS)
    for r in range(len(ids)):
        if m[r, 0] <= 0:
            raise ParseError(f"age must be positive, got {m[r, 0]!r}", path, r + 2, "age")
        if m[r, 2] < 0:
            raise ParseError(f"negative credit_limit {m[r, 2]!r}", path, r + 2, "credit_limit")
    return AuxTable(tuple(ids), m)
