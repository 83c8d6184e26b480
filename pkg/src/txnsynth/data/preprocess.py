"""Activity filter, log1p transform, seeded train/test split, aux standardisation.

``log1p`` is used rather than a bare log: most cells are exactly 0 dollars and
the transform has to keep them at 0 so sparsity survives.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import RngStream
from ..errors import UsageError, ValidationError
from .tables import AuxTable, ProfileTable, check_aligned

# aux columns that are money amounts; log1p'd before standardising
_MONEY_COLUMNS = (1, 2, 3, 4)


@dataclass
class PreprocessConfig:
    activity_threshold: float = 100.0  # dollars; arbitrary default
    split_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        bad = []
        if not 0.0 < self.split_fraction < 1.0:
            bad.append("split_fraction")
        if not self.activity_threshold >= 0.0:
            bad.append("activity_threshold")
        if self.seed < 0:
            bad.append("seed")
        if bad:
            raise ValidationError("invalid preprocessing configuration", bad)


def filter_active_clients(p: ProfileTable, a: AuxTable, cfg: PreprocessConfig):
    """Keep clients whose total spend is strictly above the threshold."""
    if p.space != "dollars":
        raise UsageError("the activity filter is defined on dollar amounts, got log space")
    check_aligned(p, a)
    keep = np.flatnonzero(p.amounts.sum(axis=1) > cfg.activity_threshold)
    return p.take(keep), a.take(keep)


def log_transform(p: ProfileTable) -> ProfileTable:
    if p.space != "dollars":
        raise UsageError(f"log_transform expects dollars, table is in {p.space} space")
    return p.with_amounts(np.log1p(p.amounts), "log")


def inverse_log_transform(p: ProfileTable) -> ProfileTable:
    if p.space != "log":
        raise UsageError(f"inverse_log_transform expects log space, table is in {p.space} space")
    return p.with_amounts(inverse_log_values(p.amounts), "dollars")


def inverse_log_values(y: np.ndarray) -> np.ndarray:
    return np.maximum(np.expm1(y), 0.0)


def split_sizes(n: int, fraction: float) -> tuple[int, int]:
    n_train = int(np.floor(fraction * n + 0.5))
    n_train = min(max(n_train, 1), n - 1)
    return n_train, n - n_train


def train_test_split(p: ProfileTable, a: AuxTable, cfg: PreprocessConfig):
    """Returns ``((train_profiles, train_aux), (test_profiles, test_aux))``.

    Rows are shuffled with the config seed; each side keeps the original row
    order among its members, so the output is a deterministic function of
    (table, seed, fraction).
    """
    check_aligned(p, a)
    n = len(p)
    if n < 2:
        raise UsageError(f"need at least 2 rows to split, got {n}")
    n_train, _ = split_sizes(n, cfg.split_fraction)
    perm = RngStream(cfg.seed).child("split").generator.permutation(n)
    train_idx = np.sort(perm[:n_train])
    test_idx = np.sort(perm[n_train:])
    return (p.take(train_idx), a.take(train_idx)), (p.take(test_idx), a.take(test_idx))


@dataclass
class AuxScaler:
    """Zero-mean, unit-variance scaling of aux columns, money columns log1p'd first."""

    mean: np.ndarray
    std: np.ndarray

    @staticmethod
    def _pre(values: np.ndarray) -> np.ndarray:
        v = np.array(values, dtype=np.float64)
        for j in _MONEY_COLUMNS:
            v[:, j] = np.log1p(np.maximum(v[:, j], 0.0))
        return v

    @classmethod
    def fit(cls, aux: AuxTable) -> "AuxScaler":
        if aux.standardized:
            raise UsageError("aux table is already standardized")
        v = cls._pre(aux.values)
        std = v.std(axis=0)
        std[std == 0] = 1.0
        return cls(v.mean(axis=0), std)

    def transform_values(self, values: np.ndarray) -> np.ndarray:
        return (self._pre(values) - self.mean) / self.std

    def transform(self, aux: AuxTable) -> AuxTable:
        if aux.standardized:
            raise UsageError("aux table is already standardized")
        return AuxTable(aux.client_ids, self.transform_values(aux.values), standardized=True)

    def to_dict(self) -> dict:
        return {"mean": [float(x) for x in self.mean], "std": [float(x) for x in self.std]}

    @classmethod
    def from_dict(cls, d) -> "AuxScaler":
        return cls(np.array(d["mean"], dtype=np.float64), np.array(d["std"], dtype=np.float64))


METADATA_FORMAT = "txnsynth-preprocess"


@dataclass
class PreprocessMetadata:
    """Everything needed to undo preprocessing and re-condition a model later.

    Written as JSON next to the four split CSVs. Floats go through ``repr`` so the
    scaler statistics survive a round trip exactly.
    """

    categories: tuple
    activity_threshold: float
    split_fraction: float
    split_seed: int
    aux_scaler: AuxScaler
    common_categories: tuple
    n_train: int
    n_test: int
    transform: str = "log1p"

    def to_dict(self) -> dict:
        return {
            "format": METADATA_FORMAT,
            "version": 1,
            "transform": self.transform,
            "categories": list(self.categories),
            "activity_threshold": float(self.activity_threshold),
            "split_fraction": float(self.split_fraction),
            "split_seed": int(self.split_seed),
            "aux_scaler": self.aux_scaler.to_dict(),
            "common_categories": list(self.common_categories),
            "n_train": int(self.n_train),
            "n_test": int(self.n_test),
        }

    @classmethod
    def from_dict(cls, d) -> "PreprocessMetadata":
        if d.get("format") != METADATA_FORMAT or d.get("version") != 1:
            raise ValidationError("not a version-1 preprocessing metadata file", ["format", "version"])
        if d.get("transform") != "log1p":
            raise ValidationError(f"unsupported transform {d.get('transform')!r}", ["transform"])
        return cls(
            categories=tuple(d["categories"]),
            activity_threshold=d["activity_threshold"],
            split_fraction=d["split_fraction"],
            split_seed=d["split_seed"],
            aux_scaler=AuxScaler.from_dict(d["aux_scaler"]),
            common_categories=tuple(d["common_categories"]),
            n_train=d["n_train"],
            n_test=d["n_test"],
        )
