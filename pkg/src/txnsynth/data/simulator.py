"""Parametric ground-truth population of monthly card-spend profiles.

Generative story, per client:

1. segment ``s`` ~ Categorical(segment_weights)
2. aux attributes drawn from segment-specific distributions (age, salary,
   credit limit, balance as a utilisation of the limit, last repayment as a
   fraction of the balance)
3. each category ``j`` is active with probability
   ``sigmoid(logit(activation_probs[s, j]) + sum_a coupling[a, j] * u_a)``
   where ``u_a`` in (0, 1) is a fixed squashing of aux attribute ``a``
   (see :func:`aux_signal`); ``activation_probs`` is therefore the rate at
   zero aux signal, and a larger positive coupling can only raise the rate
4. active cells get ``exp(amount_mu[j] + amount_sigma[j] * eps + shift)``
   dollars, ``shift = sum_a amount_coupling[a] * (u_a - 0.5)``
5. with probability ``outlier_rate`` one active cell of the client is
   multiplied by ``outlier_scale``
"""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from ..core import RngStream, sigmoid
from ..errors import ValidationError
from .tables import AUX_COLUMNS, DEFAULT_CATEGORIES, AuxTable, ProfileTable

# Habit table: rows follow DEFAULT_CATEGORIES; columns are the segments young urban,
# family, affluent traveller, retiree. Habitual categories sit at 0.9, everything
# else is a rare 0.02, so a segment is close to a fixed basket plus noise.
_SEGMENT_TABLE = np.array([
    [0.90, 0.90, 0.90, 0.90],  # grocery
    [0.90, 0.02, 0.90, 0.02],  # restaurants
    [0.02, 0.90, 0.02, 0.90],  # gas stations
    [0.02, 0.90, 0.02, 0.90],  # pharmacies
    [0.02, 0.90, 0.02, 0.02],  # department stores
    [0.90, 0.02, 0.90, 0.02],  # clothing
    [0.90, 0.90, 0.02, 0.02],  # fast food
    [0.90, 0.90, 0.90, 0.02],  # telecom
    [0.02, 0.90, 0.02, 0.90],  # utilities
    [0.02, 0.02, 0.02, 0.02],  # electronics
    [0.90, 0.02, 0.02, 0.02],  # transit
    [0.02, 0.02, 0.90, 0.02],  # taxis
    [0.90, 0.02, 0.02, 0.02],  # bars
    [0.02, 0.02, 0.02, 0.02],  # cinema
    [0.02, 0.02, 0.02, 0.02],  # books
    [0.02, 0.90, 0.02, 0.02],  # toys
    [0.02, 0.02, 0.02, 0.02],  # home improvement
    [0.02, 0.02, 0.02, 0.02],  # furniture
    [0.02, 0.02, 0.02, 0.90],  # doctors
    [0.02, 0.02, 0.02, 0.02],  # dentists
    [0.02, 0.02, 0.02, 0.02],  # pet supplies
    [0.02, 0.02, 0.02, 0.02],  # beauty
    [0.02, 0.02, 0.02, 0.02],  # sporting goods
    [0.02, 0.02, 0.90, 0.02],  # airlines
    [0.02, 0.02, 0.90, 0.02],  # hotels
    [0.02, 0.02, 0.02, 0.02],  # misc retail
]).T

_AMOUNT_MU = np.array([
    5.0, 4.2, 4.3, 3.5, 4.3, 4.3, 3.0, 4.2, 4.6, 5.0, 3.5, 3.3, 3.6,
    3.0, 3.2, 3.6, 4.6, 5.5, 4.5, 5.0, 3.8, 3.8, 4.0, 6.0, 5.7, 3.5,
])
_AMOUNT_SIGMA = np.array([
    0.7, 0.8, 0.6, 0.8, 0.9, 0.9, 0.7, 0.4, 0.5, 1.0, 0.7, 0.8, 0.8,
    0.6, 0.7, 0.8, 1.0, 1.0, 0.9, 0.9, 0.8, 0.7, 0.9, 0.8, 0.9, 1.0,
])

# fixed centring/scaling that squashes each aux column to u in (0, 1)
_SIGNAL_CENTER = np.array([45.0, np.log(55_000.0), np.log(11_000.0), np.log(2_000.0), np.log(700.0)])
_SIGNAL_SCALE = np.array([15.0, 0.6, 0.7, 1.0, 1.2])


def _default_coupling(k: int) -> np.ndarray:
    c = np.zeros((len(AUX_COLUMNS), k))
    if k == len(DEFAULT_CATEGORIES):
        idx = {name.split("_", 1)[1]: j for j, name in enumerate(DEFAULT_CATEGORIES)}
        for name in ("doctors", "pharmacies", "books"):
            c[0, idx[name]] = 1.0
        for name in ("airlines", "hotels", "taxis", "restaurants", "electronics", "furniture"):
            c[1, idx[name]] = 1.2
        for name in ("department_stores", "electronics", "home_improvement"):
            c[2, idx[name]] = 0.5
    c[3, :] = 0.5
    return c


def _procedural_table(s: int, k: int) -> np.ndarray:
    # fallback for non-default shapes: fixed, seed-independent draw
    g = np.random.Generator(np.random.PCG64(20_210_101 + 1000 * s + k))
    return np.clip(g.beta(0.6, 1.6, size=(s, k)), 0.0, 1.0)


@dataclass
class SimulatorConfig:
    n_clients: int = 20_000
    k_categories: int = 26
    segment_count: int = 4
    segment_weights: np.ndarray | None = None
    activation_probs: np.ndarray | None = None  # (segment_count, k_categories)
    amount_mu: np.ndarray | None = None  # (k,) log-dollars
    amount_sigma: np.ndarray | None = None  # (k,)
    coupling: np.ndarray | None = None  # (5, k) aux signal -> activation logit
    amount_coupling: np.ndarray | None = None  # (5,) aux signal -> log amount
    age_mean: np.ndarray | None = None  # (segment_count,)
    age_sd: np.ndarray | None = None
    log_salary_mean: np.ndarray | None = None
    log_salary_sd: float = 0.2
    utilization_logit: np.ndarray | None = None  # (segment_count,)
    outlier_rate: float = 0.01
    outlier_scale: float = 50.0
    seed: int = 0
    categories: tuple | None = None

    def __post_init__(self):
        s, k = int(self.segment_count), int(self.k_categories)
        default_shape = (s, k) == (4, len(DEFAULT_CATEGORIES))
        if k < 1 or s < 1:
            raise ValidationError("invalid simulator dimensions",
                                  [n for n, v in (("k_categories", k), ("segment_count", s)) if v < 1])

        def fill(name, default):
            v = getattr(self, name)
            setattr(self, name, np.asarray(default if v is None else v, dtype=np.float64))

        fill("segment_weights", [0.3, 0.3, 0.15, 0.25] if default_shape else np.full(s, 1.0 / s))
        fill("activation_probs", _SEGMENT_TABLE if default_shape else _procedural_table(s, k))
        fill("amount_mu", _AMOUNT_MU if k == 26 else np.full(k, 4.0))
        fill("amount_sigma", _AMOUNT_SIGMA if k == 26 else np.full(k, 0.8))
        fill("coupling", _default_coupling(k))
        fill("amount_coupling", [0.0, 1.0, 0.0, 0.8, 0.0])
        fill("age_mean", [28.0, 40.0, 46.0, 70.0] if s == 4 else np.linspace(28, 70, s))
        fill("age_sd", [4.0, 5.0, 6.0, 5.0] if s == 4 else np.full(s, 7.0))
        fill("log_salary_mean", np.log([38_000.0, 65_000.0, 140_000.0, 35_000.0]) if s == 4
             else np.linspace(np.log(35_000.0), np.log(140_000.0), s))
        fill("utilization_logit", [-0.5, 0.0, -1.0, -1.5] if s == 4 else np.full(s, -0.5))
        if self.categories is None:
            self.categories = (DEFAULT_CATEGORIES if k == len(DEFAULT_CATEGORIES)
                               else tuple(f"cat_{j:02d}" for j in range(k)))
        self.categories = tuple(self.categories)
        self.validate()

    def validate(self) -> None:
        bad = []
        s, k, a = self.segment_count, self.k_categories, len(AUX_COLUMNS)
        if self.n_clients < 1:
            bad.append("n_clients")
        w = self.segment_weights
        if w.shape != (s,) or np.any(w < 0) or not np.isclose(w.sum(), 1.0):
            bad.append("segment_weights")
        p = self.activation_probs
        if p.shape != (s, k) or np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
            bad.append("activation_probs")
        if self.amount_mu.shape != (k,) or not np.all(np.isfinite(self.amount_mu)):
            bad.append("amount_mu")
        if self.amount_sigma.shape != (k,) or np.any(self.amount_sigma < 0):
            bad.append("amount_sigma")
        if self.coupling.shape != (a, k) or not np.all(np.isfinite(self.coupling)):
            bad.append("coupling")
        if self.amount_coupling.shape != (a,):
            bad.append("amount_coupling")
        for name in ("age_mean", "age_sd", "log_salary_mean", "utilization_logit"):
            if getattr(self, name).shape != (s,):
                bad.append(name)
        if np.any(self.age_sd < 0):
            bad.append("age_sd")
        if not self.log_salary_sd >= 0:
            bad.append("log_salary_sd")
        if not 0.0 <= self.outlier_rate <= 0.05:
            bad.append("outlier_rate")
        if not self.outlier_scale >= 1.0:
            bad.append("outlier_scale")
        if self.seed < 0:
            bad.append("seed")
        if len(self.categories) != k or len(set(self.categories)) != k:
            bad.append("categories")
        if bad:
            raise ValidationError("invalid simulator configuration", sorted(set(bad)))

    def field_names(self):
        return [f.name for f in fields(self)]


def aux_signal(aux_values: np.ndarray) -> np.ndarray:
    """Squash raw aux columns to (0, 1); monotone increasing in every column."""
    v = np.asarray(aux_values, dtype=np.float64)
    t = np.column_stack([
        v[:, 0],
        np.log(np.maximum(v[:, 1], 1.0)),
        np.log(np.maximum(v[:, 2], 1.0)),
        np.log1p(np.maximum(v[:, 3], 0.0)),
        np.log1p(np.maximum(v[:, 4], 0.0)),
    ])
    return sigmoid(1.7 * (t - _SIGNAL_CENTER) / _SIGNAL_SCALE)


def activation_probabilities(cfg: SimulatorConfig, segments: np.ndarray, aux_values: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        p = cfg.activation_probs[segments]
        base = np.log(p) - np.log1p(-p)
    return sigmoid(base + aux_signal(aux_values) @ cfg.coupling)


def _draw_aux(cfg: SimulatorConfig, segments: np.ndarray, rng: RngStream) -> np.ndarray:
    g = rng.generator
    n = len(segments)
    z = g.standard_normal((n, 5))
    age = np.clip(cfg.age_mean[segments] + cfg.age_sd[segments] * z[:, 0], 18.0, 95.0)
    log_salary = cfg.log_salary_mean[segments] + cfg.log_salary_sd * z[:, 1]
    salary = np.exp(log_salary)
    credit_limit = salary * np.exp(np.log(0.2) + 0.3 * z[:, 2])
    balance = credit_limit * sigmoid(cfg.utilization_logit[segments] + z[:, 3])
    last_repayment = balance * sigmoid(0.5 + 1.2 * z[:, 4])
    return np.column_stack([age, salary, credit_limit, balance, last_repayment])


def simulate_population(cfg: SimulatorConfig) -> tuple[ProfileTable, AuxTable]:
    cfg.validate()
    root = RngStream(cfg.seed)
    n, k = cfg.n_clients, cfg.k_categories
    segments = root.child("segments").generator.choice(
        cfg.segment_count, size=n, p=cfg.segment_weights / cfg.segment_weights.sum()
    )
    aux = _draw_aux(cfg, segments, root.child("aux"))
    probs = activation_probabilities(cfg, segments, aux)
    active = root.child("activation").generator.random((n, k)) < probs

    signal = aux_signal(aux)
    shift = (signal - 0.5) @ cfg.amount_coupling
    eps = root.child("amounts").generator.standard_normal((n, k))
    log_amt = cfg.amount_mu + cfg.amount_sigma * eps + shift[:, None]
    amounts = np.where(active, np.exp(log_amt), 0.0)

    og = root.child("outliers").generator
    hit = og.random(n) < cfg.outlier_rate
    picks = og.random(n)
    for i in np.flatnonzero(hit):
        cols = np.flatnonzero(active[i])
        if len(cols):
            j = cols[min(int(picks[i] * len(cols)), len(cols) - 1)]
            amounts[i, j] *= cfg.outlier_scale

    ids = tuple(f"c{i:06d}" for i in range(n))
    return ProfileTable(ids, cfg.categories, amounts, "dollars"), AuxTable(ids, aux)
