"""Parameter update rules: SGD, Adam, and DP-SGD gradient aggregation.

A parameter set is a list of numpy arrays; gradient sets mirror it exactly.
Per-example gradients are either a list of gradient sets, or (the "stacked"
layout used in training) a gradient set whose arrays carry a leading batch axis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import RngStream
from .errors import ShapeError, UsageError, ValidationError


def _check_like(params, grads):
    if len(params) != len(grads):
        raise ShapeError(f"{len(grads)} gradient arrays for {len(params)} parameters")
    for i, (p, g) in enumerate(zip(params, grads)):
        if np.shape(p) != np.shape(g):
            raise ShapeError(f"parameter {i}: shape {np.shape(p)} but gradient {np.shape(g)}")


def sgd_step(params, grads, learning_rate: float) -> list[np.ndarray]:
    _check_like(params, grads)
    return [p - learning_rate * g for p, g in zip(params, grads)]


@dataclass
class AdamState:
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        bad = []
        if not 0.0 <= self.beta1 < 1.0:
            bad.append("beta1")
        if not 0.0 <= self.beta2 < 1.0:
            bad.append("beta2")
        if not self.epsilon > 0.0:
            bad.append("epsilon")
        if bad:
            raise ValidationError("invalid Adam hyperparameters", bad)

    @classmethod
    def zeros_like(cls, params, learning_rate=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
        return cls(
            [np.zeros_like(p, dtype=np.float64) for p in params],
            [np.zeros_like(p, dtype=np.float64) for p in params],
            0,
            learning_rate,
            beta1,
            beta2,
            epsilon,
        )


def adam_step(state: AdamState, params, grads) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam update. Inputs are left untouched."""
    _check_like(params, grads)
    _check_like(params, state.first_moment)
    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    new_params, ms, vs = [], [], []
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        new_params.append(p - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon))
        ms.append(m)
        vs.append(v)
    new_state = AdamState(ms, vs, t, state.learning_rate, b1, b2, state.epsilon)
    return new_params, new_state


class Adam:
    """Mutable convenience wrapper that owns an :class:`AdamState`."""

    def __init__(self, params, learning_rate=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.state = AdamState.zeros_like(params, learning_rate, beta1, beta2, epsilon)

    def step(self, params, grads):
        new_params, self.state = adam_step(self.state, params, grads)
        return new_params


@dataclass
class DpConfig:
    """DP-SGD knobs. The defaults C = 1, sigma = 1 are arbitrary, not tuned."""

    clip_norm: float = 1.0
    noise_multiplier: float = 1.0
    enabled: bool = False
    # "critic": only the discriminator/critic (and nothing in the VAE);
    # "all": every trained network
    apply_to: str = "critic"

    def __post_init__(self):
        bad = []
        if not self.clip_norm > 0:
            bad.append("clip_norm")
        if not (self.noise_multiplier >= 0 and math.isfinite(self.noise_multiplier)):
            bad.append("noise_multiplier")
        if self.noise_multiplier > 0 and math.isinf(self.clip_norm):
            bad.append("clip_norm")
        if self.apply_to not in ("critic", "all"):
            bad.append("apply_to")
        if bad:
            raise ValidationError("invalid DP configuration", bad)

    @property
    def noise_std(self) -> float:
        return self.noise_multiplier * self.clip_norm if self.noise_multiplier > 0 else 0.0


def stack_examples(per_example_grads) -> list[np.ndarray]:
    """List of per-example gradient sets -> one set with a leading batch axis."""
    if len(per_example_grads) == 0:
        raise UsageError("dp_aggregate needs at least one example")
    first = per_example_grads[0]
    for g in per_example_grads[1:]:
        _check_like(first, g)
    return [np.stack([np.asarray(g[i], dtype=np.float64) for g in per_example_grads])
            for i in range(len(first))]


def per_example_norms(stacked) -> np.ndarray:
    """Global L2 norm of each example's gradient set."""
    sq = None
    for g in stacked:
        s = (g.reshape(g.shape[0], -1) ** 2).sum(axis=1)
        sq = s if sq is None else sq + s
    return np.sqrt(sq)


def clip_scales(norms: np.ndarray, clip_norm: float) -> np.ndarray:
    """min(1, C / norm) per example; exactly 1.0 for every example under the bound."""
    scale = np.ones_like(norms)
    over = norms > clip_norm
    scale[over] = clip_norm / norms[over]
    return scale


def clip_examples(stacked, clip_norm: float) -> list[np.ndarray]:
    scale = clip_scales(per_example_norms(stacked), clip_norm)
    return [g * scale.reshape((-1,) + (1,) * (g.ndim - 1)) for g in stacked]


def mean_aggregate_stacked(stacked) -> list[np.ndarray]:
    """Plain mini-batch mean; the same fold ``dp_aggregate`` uses, minus clipping and noise."""
    n = stacked[0].shape[0]
    return [g.sum(axis=0) / n for g in stacked]


def dp_aggregate_stacked(stacked, cfg: DpConfig, rng: RngStream) -> list[np.ndarray]:
    n = stacked[0].shape[0]
    if n == 0:
        raise UsageError("dp_aggregate needs at least one example")
    summed = [g.sum(axis=0) for g in clip_examples(stacked, cfg.clip_norm)]
    std = cfg.noise_std
    if std > 0:
        summed = [s + std * rng.generator.standard_normal(s.shape) for s in summed]
    return [s / n for s in summed]


def dp_aggregate(per_example_grads, cfg: DpConfig, rng: RngStream) -> list[np.ndarray]:
    """Clip each example to global norm ``clip_norm``, sum, add N(0, (sigma*C)^2), divide by batch size."""
    if not cfg.enabled:
        raise UsageError("dp_aggregate called with DP disabled")
    return dp_aggregate_stacked(stack_examples(per_example_grads), cfg, rng)


@dataclass(frozen=True)
class GradTerm:
    """One application of a dense layer inside a loss.

    Row i of the weight gradient contributed by this term is
    ``outer(inputs[i], cotangents[i])`` and of the bias gradient ``cotangents[i]``;
    ``index`` is the weight's position in the parameter list (bias at ``index + 1``).
    A layer applied twice per example (a critic on real and fake rows) gives two terms.
    """

    index: int
    inputs: np.ndarray
    cotangents: np.ndarray


def terms_sq_norms(terms) -> np.ndarray:
    """Squared global L2 norm of each example's gradient, without materialising it.

    Uses <x (x) d, x' (x) d'> = (x . x')(d . d') for the weight blocks.
    """
    groups: dict[int, list[GradTerm]] = {}
    for t in terms:
        groups.setdefault(t.index, []).append(t)
    total = None
    for ts in groups.values():
        dsum = ts[0].cotangents
        for t in ts[1:]:
            dsum = dsum + t.cotangents
        sq = (dsum * dsum).sum(axis=1)
        for a in ts:
            for b in ts:
                sq = sq + (a.inputs * b.inputs).sum(axis=1) * (a.cotangents * b.cotangents).sum(axis=1)
        total = sq if total is None else total + sq
    return total


def combine_terms(terms, shapes, row_weights=None) -> list[np.ndarray]:
    """Sum over rows of the (optionally row-weighted) per-example gradients."""
    grads = [np.zeros(s) for s in shapes]
    for t in terms:
        d = t.cotangents if row_weights is None else t.cotangents * row_weights[:, None]
        grads[t.index] += t.inputs.T @ d
        grads[t.index + 1] += d.sum(axis=0)
    return grads


def aggregate_terms(terms, shapes, n: int, dp: DpConfig | None = None, rng: RngStream | None = None):
    """Batch gradient from per-row terms: the plain mean, or the DP-SGD aggregate when
    ``dp.enabled``. Equal to :func:`dp_aggregate` on the materialised per-example grads,
    and bit-identical to the plain mean when sigma = 0 and no example exceeds the clip norm.
    """
    if dp is None or not dp.enabled:
        return [g / n for g in combine_terms(terms, shapes)]
    scale = clip_scales(np.sqrt(terms_sq_norms(terms)), dp.clip_norm)
    summed = combine_terms(terms, shapes, scale)
    std = dp.noise_std
    if std > 0:
        summed = [s + std * rng.generator.standard_normal(s.shape) for s in summed]
    return [s / n for s in summed]
