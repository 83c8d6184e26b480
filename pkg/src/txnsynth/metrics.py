"""Utility metrics for synthetic profiles: sparsity, per-feature W1, paired cosine, insights."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import as_matrix
from .data.preprocess import inverse_log_values
from .data.tables import ProfileTable
from .errors import ShapeError, UsageError, ValidationError

# an entry counts as zero when it is below one cent, in dollars
ZERO_TOLERANCE_DOLLARS = 0.01
DEFAULT_SPARSITY_TOLERANCE = 0.15
PAIRING_MODES = ("index_aligned", "aux_matched", "unpaired")


class UndefinedPairError(ValueError):
    """Cosine distance is undefined when either vector is all zeros."""


def _nonempty(m):
    m = as_matrix(m)
    if m.size == 0:
        raise UsageError("sparsity of an empty matrix is undefined")
    return m


def zero_mask(m, zero_tolerance: float = ZERO_TOLERANCE_DOLLARS) -> np.ndarray:
    return np.asarray(m) < zero_tolerance


def row_sparsity(m, zero_tolerance: float = ZERO_TOLERANCE_DOLLARS) -> float:
    """Mean over rows of the fraction of (near-)zero entries; input in dollars."""
    m = _nonempty(m)
    return float(zero_mask(m, zero_tolerance).mean(axis=1).mean())


def column_sparsity(m, zero_tolerance: float = ZERO_TOLERANCE_DOLLARS) -> np.ndarray:
    m = _nonempty(m)
    return zero_mask(m, zero_tolerance).mean(axis=0)


def sparsity_verdict(real_cols, syn_cols, tolerance: float = DEFAULT_SPARSITY_TOLERANCE) -> bool:
    """Synthetic data "is sparse" when every column's zero-rate is within
    ``tolerance`` of the real one and the mean zero-rate is at least half the real mean."""
    real_cols = np.asarray(real_cols, dtype=np.float64)
    syn_cols = np.asarray(syn_cols, dtype=np.float64)
    if real_cols.shape != syn_cols.shape:
        raise ShapeError(f"column sparsity vectors differ: {real_cols.shape} vs {syn_cols.shape}")
    close = np.max(np.abs(real_cols - syn_cols)) <= tolerance + 1e-12
    sparse_enough = syn_cols.mean() >= 0.5 * real_cols.mean()
    return bool(close and sparse_enough)


def wasserstein_1d(a, b) -> float:
    """W1 between two empirical distributions as the integral of |F_a^-1 - F_b^-1|.

    Quantile functions are step functions, so the integral is an exact finite sum
    over the merged breakpoints {i/n} U {j/m}. Breakpoints are kept as integers in
    units of 1/(n*m) so the step lookup has no rounding.
    """
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        raise UsageError("wasserstein_1d needs two non-empty samples")
    g = math.gcd(n, m)
    step_a, step_b = m // g, n // g  # one 1/n step in units of 1/lcm
    total = n * step_a
    cuts = np.union1d(np.arange(1, n + 1) * step_a, np.arange(1, m + 1) * step_b)
    widths = np.diff(cuts, prepend=0)
    ia = (cuts + step_a - 1) // step_a - 1
    ib = (cuts + step_b - 1) // step_b - 1
    return float(np.sum(widths * np.abs(a[ia] - b[ib])) / total)


def avg_feature_wasserstein(x_real, x_syn) -> float:
    per = feature_wasserstein(x_real, x_syn)
    return float(np.mean(per))


def feature_wasserstein(x_real, x_syn) -> np.ndarray:
    x_real, x_syn = as_matrix(x_real), as_matrix(x_syn)
    if x_real.shape[1] != x_syn.shape[1]:
        raise ShapeError(f"column counts differ: {x_real.shape} vs {x_syn.shape}")
    return np.array([wasserstein_1d(x_real[:, j], x_syn[:, j]) for j in range(x_real.shape[1])])


def cosine_distance(u, v) -> float:
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise ShapeError(f"vector lengths differ: {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise UndefinedPairError("cosine distance with an all-zero vector")
    return float(np.clip(1.0 - (u @ v) / (nu * nv), 0.0, 2.0))


def distance_to_degrees(d):
    return np.degrees(np.arccos(np.clip(1.0 - np.asarray(d, dtype=np.float64), -1.0, 1.0)))


@dataclass(frozen=True)
class PairingSpec:
    mode: str = "index_aligned"
    description: str = ""

    def __post_init__(self):
        if self.mode not in PAIRING_MODES:
            raise ValidationError(f"unknown pairing mode {self.mode!r}", ["mode"])


def paired_cosine_distances(x_real, x_syn) -> tuple[np.ndarray, int]:
    """Row-wise cosine distances over valid pairs, plus the number of excluded pairs."""
    x_real, x_syn = as_matrix(x_real), as_matrix(x_syn)
    if x_real.shape != x_syn.shape:
        raise ShapeError(f"index-aligned pairing needs equal shapes: {x_real.shape} vs {x_syn.shape}")
    nr = np.linalg.norm(x_real, axis=1)
    ns = np.linalg.norm(x_syn, axis=1)
    ok = (nr > 0) & (ns > 0)
    dots = np.einsum("ij,ij->i", x_real[ok], x_syn[ok])
    d = np.clip(1.0 - dots / (nr[ok] * ns[ok]), 0.0, 2.0)
    return d, int((~ok).sum())


def avg_paired_cosine(x_real, x_syn, pairing: PairingSpec = PairingSpec()):
    """Returns ``(mean distance, mean angle in degrees, excluded pairs)``."""
    if pairing.mode == "unpaired":
        raise UsageError("paired cosine distance needs a pairing; got mode 'unpaired'")
    d, excluded = paired_cosine_distances(x_real, x_syn)
    if len(d) == 0:
        return float("nan"), float("nan"), excluded
    return float(d.mean()), float(distance_to_degrees(d).mean()), excluded


TOP_TOKEN = "*top:"


@dataclass(frozen=True)
class InsightSpec:
    """Share of clients spending at least ``threshold`` dollars over ``categories``.

    A category entry ``*top:N`` stands for the N categories most often non-zero
    in the reference (real) table; resolve it with :meth:`resolve`.
    """

    name: str
    categories: tuple
    threshold: float
    comparator: str = "at least"

    def __post_init__(self):
        object.__setattr__(self, "categories", tuple(self.categories))
        bad = []
        if not self.categories:
            bad.append("categories")
        if not self.threshold >= 0:
            bad.append("threshold")
        if self.comparator != "at least":
            bad.append("comparator")
        if bad:
            raise ValidationError(f"invalid insight {self.name!r}", bad)

    def resolve(self, reference: ProfileTable) -> "InsightSpec":
        cats = []
        for c in self.categories:
            if c.startswith(TOP_TOKEN):
                n = int(c[len(TOP_TOKEN):])
                cats.extend(most_common_categories(reference, n))
            else:
                cats.append(c)
        return InsightSpec(self.name, tuple(dict.fromkeys(cats)), self.threshold)


DEFAULT_INSIGHTS = (
    InsightSpec("grocery >= $1", ("5411_grocery",), 1.0),
    InsightSpec("clothing >= $10", ("5651_clothing",), 10.0),
    InsightSpec("top-20 categories >= $100", ("*top:20",), 100.0),
)


def most_common_categories(table: ProfileTable, n: int = 20) -> tuple:
    """Top-``n`` categories by share of non-zero rows; ties broken by column order."""
    amounts = table.amounts if table.space == "dollars" else inverse_log_values(table.amounts)
    freq = (~zero_mask(amounts)).mean(axis=0)
    order = sorted(range(len(freq)), key=lambda j: (-freq[j], j))
    return tuple(table.categories[j] for j in order[: min(n, len(order))])


def insight_proportion(p: ProfileTable, spec: InsightSpec) -> float:
    if p.space != "dollars":
        raise UsageError("insights are defined on dollar amounts; apply the inverse transform first")
    if any(c.startswith(TOP_TOKEN) for c in spec.categories):
        raise UsageError(f"insight {spec.name!r} has unresolved {TOP_TOKEN}N categories")
    try:
        cols = p.column_index(spec.categories)
    except KeyError as e:
        raise ValidationError(f"insight {spec.name!r} names unknown categories", e.args[0]) from None
    if len(p) == 0:
        raise UsageError("insight over an empty table")
    totals = p.amounts[:, cols].sum(axis=1)
    return float(np.mean(totals >= spec.threshold))


def insight_delta(real: ProfileTable, syn: ProfileTable, spec: InsightSpec) -> float:
    return abs(insight_proportion(real, spec) - insight_proportion(syn, spec))


@dataclass
class MetricBlock:
    """Metrics over one column subset."""

    categories: tuple
    real_column_sparsity: np.ndarray
    syn_column_sparsity: np.ndarray
    real_row_sparsity: float
    syn_row_sparsity: float
    sparsity_verdict: bool
    avg_wasserstein: float
    feature_wasserstein: np.ndarray
    avg_cosine_distance: float
    mean_angle_degrees: float
    excluded_pairs: int


@dataclass
class InsightResult:
    spec: InsightSpec
    real_proportion: float
    syn_proportion: float

    @property
    def delta(self) -> float:
        return abs(self.real_proportion - self.syn_proportion)


@dataclass
class UtilityReport:
    model_name: str
    pairing: PairingSpec
    wasserstein_space: str
    full: MetricBlock
    restricted: MetricBlock
    insights: list = field(default_factory=list)
    real_column_max: np.ndarray | None = None
    syn_column_max: np.ndarray | None = None

    # flat accessors mirroring the headline table
    @property
    def sparsity_verdict(self) -> bool:
        return self.full.sparsity_verdict

    @property
    def avg_wasserstein(self) -> float:
        return self.full.avg_wasserstein

    @property
    def avg_cosine_distance(self) -> float:
        return self.full.avg_cosine_distance

    @property
    def mean_angle_degrees(self) -> float:
        return self.full.mean_angle_degrees

    @property
    def insight_deltas(self) -> list:
        return [(r.spec, r.delta) for r in self.insights]


def _block(real_d, syn_d, cats, pairing, w_space, tol) -> MetricBlock:
    rc, sc = column_sparsity(real_d), column_sparsity(syn_d)
    if w_space == "log":
        rw, sw = np.log1p(real_d), np.log1p(syn_d)
    else:
        rw, sw = real_d, syn_d
    fw = feature_wasserstein(rw, sw)
    if pairing.mode == "unpaired":
        cos, ang, excl = float("nan"), float("nan"), 0
    else:
        # cosine is taken in the same space the models generate in (log1p dollars)
        cos, ang, excl = avg_paired_cosine(np.log1p(real_d), np.log1p(syn_d), pairing)
    return MetricBlock(
        cats, rc, sc, row_sparsity(real_d), row_sparsity(syn_d),
        sparsity_verdict(rc, sc, tol), float(fw.mean()), fw, cos, ang, excl,
    )


def build_report(
    x_real: ProfileTable,
    x_syn: ProfileTable,
    aux=None,
    pairing: PairingSpec = PairingSpec(),
    insight_specs=DEFAULT_INSIGHTS,
    common_category_subset=None,
    *,
    model_name: str = "synthetic",
    wasserstein_space: str = "log",
    sparsity_tolerance: float = DEFAULT_SPARSITY_TOLERANCE,
) -> UtilityReport:
    """Score ``x_syn`` against ``x_real`` over all categories and over the common subset.

    ``aux`` is accepted for aux-matched pairings; rows are expected to be aligned
    already, so it is only checked for length.
    """
    if x_real.categories != x_syn.categories:
        raise ShapeError("real and synthetic tables have different category columns")
    if wasserstein_space not in ("log", "dollars"):
        raise ValidationError("wasserstein_space must be 'log' or 'dollars'", ["wasserstein_space"])
    if aux is not None and len(aux) != len(x_real):
        raise ShapeError(f"aux has {len(aux)} rows, real table {len(x_real)}")
    real_t = x_real if x_real.space == "dollars" else x_real.with_amounts(inverse_log_values(x_real.amounts), "dollars")
    syn_t = x_syn if x_syn.space == "dollars" else x_syn.with_amounts(inverse_log_values(x_syn.amounts), "dollars")
    real_d, syn_d = real_t.amounts, syn_t.amounts
    if pairing.mode != "unpaired" and real_d.shape != syn_d.shape:
        raise ShapeError(f"paired evaluation needs equal shapes: {real_d.shape} vs {syn_d.shape}")

    if common_category_subset is None:
        common_category_subset = most_common_categories(real_t, 20)
    sub = real_t.column_index(common_category_subset)

    full = _block(real_d, syn_d, real_t.categories, pairing, wasserstein_space, sparsity_tolerance)
    restricted = _block(real_d[:, sub], syn_d[:, sub], tuple(common_category_subset), pairing,
                        wasserstein_space, sparsity_tolerance)
    insights = []
    for spec in insight_specs:
        spec = spec.resolve(real_t)
        insights.append(InsightResult(spec, insight_proportion(real_t, spec), insight_proportion(syn_t, spec)))
    return UtilityReport(
        model_name, pairing, wasserstein_space, full, restricted, insights,
        real_d.max(axis=0), syn_d.max(axis=0),
    )
