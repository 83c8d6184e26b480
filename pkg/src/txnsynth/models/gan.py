"""Conditional GAN and conditional Wasserstein GAN (weight-clipped critic).

Generator input is ``[noise | aux]``, critic input is ``[profile | aux]``.
The CGAN critic ends in a sigmoid; its losses are computed on the pre-sigmoid
logits for numerical stability. The WCGAN critic output is linear.
"""
from __future__ import annotations

import numpy as np

from ..core import Mlp, RngStream, as_matrix, gaussian_sample, sigmoid, softplus
from ..errors import ShapeError, TrainingDivergedError, ValidationError
from ..optim import AdamState, adam_step, aggregate_terms
from .config import TrainConfig


class GanModel:
    def __init__(self, generator: Mlp, critic: Mlp, noise_dim: int, variant: str, clip_value: float = 0.01):
        if variant not in ("cgan", "wcgan"):
            raise ValidationError(f"unknown GAN variant {variant!r}", ["variant"])
        aux_dim = generator.in_dim - noise_dim
        if aux_dim < 0 or critic.in_dim - generator.out_dim != aux_dim:
            raise ShapeError(
                f"generator {generator.widths} / critic {critic.widths} disagree on aux width "
                f"for noise_dim={noise_dim}"
            )
        if critic.out_dim != 1:
            raise ShapeError("critic must output one score per row")
        expected = "identity" if variant == "wcgan" else "sigmoid"
        if critic.layers[-1].activation != expected:
            raise ValidationError(f"{variant} critic must end in {expected}", ["critic"])
        if variant == "wcgan" and not clip_value > 0:
            raise ValidationError("clip_value must be positive", ["clip_value"])
        self.generator = generator
        self.critic = critic
        self.noise_dim = noise_dim
        self.variant = variant
        self.clip_value = float(clip_value)

    @classmethod
    def build(cls, k: int, aux_dim: int, variant: str, rng: RngStream, noise_dim: int = 16,
              gen_hidden=(64, 64), critic_hidden=(64, 64), clip_value: float = 0.01) -> "GanModel":
        gen = Mlp.build([noise_dim + aux_dim, *gen_hidden, k], "leaky_relu", "relu", rng)
        out_act = "identity" if variant == "wcgan" else "sigmoid"
        critic = Mlp.build([k + aux_dim, *critic_hidden, 1], "leaky_relu", out_act, rng)
        model = cls(gen, critic, noise_dim, variant, clip_value)
        if variant == "wcgan":
            clamp_critic(model)
        return model

    @property
    def k(self) -> int:
        return self.generator.out_dim

    @property
    def aux_dim(self) -> int:
        return self.generator.in_dim - self.noise_dim

    def architecture(self) -> dict:
        return {
            "kind": self.variant,
            "generator_widths": self.generator.widths,
            "critic_widths": self.critic.widths,
            "noise_dim": self.noise_dim,
            "clip_value": self.clip_value,
        }

    def copy(self) -> "GanModel":
        return GanModel(self.generator.copy(), self.critic.copy(), self.noise_dim, self.variant, self.clip_value)

    def generate(self, noise, aux) -> np.ndarray:
        return self.generator(np.hstack([noise, aux]))


def clamp_critic(model: GanModel) -> None:
    c = model.clip_value
    model.critic.set_params([np.clip(p, -c, c) for p in model.critic.params()])


def _check_aux(model: GanModel, aux) -> np.ndarray:
    aux = as_matrix(aux)
    if aux.shape[1] != model.aux_dim:
        raise ShapeError(f"aux has {aux.shape[1]} columns, model expects {model.aux_dim}")
    if aux.shape[0] == 0:
        raise ShapeError("aux is empty")
    return aux


def critic_loss_and_terms(model: GanModel, x_real, aux, noise):
    """Critic loss and per-row gradient terms for the critic parameters.

    The per-example loss pairs real row i with fake row i:
    CGAN ``softplus(-l_real) + softplus(l_fake)`` (cross-entropy, labels 1/0),
    WCGAN ``D(fake) - D(real)``. The batch loss is their mean.
    """
    x_real = as_matrix(x_real)
    aux = _check_aux(model, aux)
    if x_real.shape[0] != aux.shape[0]:
        raise ShapeError(f"x_real has {x_real.shape[0]} rows but aux has {aux.shape[0]}")
    fake = model.generate(noise, aux)
    out_r, c_r = model.critic.forward(np.hstack([x_real, aux]))
    out_f, c_f = model.critic.forward(np.hstack([fake, aux]))
    if model.variant == "cgan":
        lr, lf = model.critic.logits(c_r), model.critic.logits(c_f)
        rows = softplus(-lr) + softplus(lf)
        d_r, d_f = sigmoid(lr) - 1.0, sigmoid(lf)
        from_logits = True
    else:
        rows = out_f - out_r
        d_r, d_f = -np.ones_like(out_r), np.ones_like(out_f)
        from_logits = False
    t_r, _ = model.critic.backward_terms(c_r, d_r, from_logits=from_logits)
    t_f, _ = model.critic.backward_terms(c_f, d_f, from_logits=from_logits)
    return float(rows.mean()), t_r + t_f


def critic_loss_and_grads(model: GanModel, x_real, aux, noise):
    loss, terms = critic_loss_and_terms(model, x_real, aux, noise)
    return loss, aggregate_terms(terms, model.critic.param_shapes(), as_matrix(x_real).shape[0])


def generator_loss_and_terms(model: GanModel, aux, noise):
    """CGAN: non-saturating ``softplus(-l_fake)``; WCGAN: ``-D(fake)``. Critic is read only."""
    aux = _check_aux(model, aux)
    fake, c_g = model.generator.forward(np.hstack([noise, aux]))
    out_f, c_f = model.critic.forward(np.hstack([fake, aux]))
    if model.variant == "cgan":
        lf = model.critic.logits(c_f)
        rows = softplus(-lf)
        d = sigmoid(lf) - 1.0
        from_logits = True
    else:
        rows = -out_f
        d = -np.ones_like(out_f)
        from_logits = False
    d_in = model.critic.input_gradient(c_f, d, from_logits=from_logits)
    terms, _ = model.generator.backward_terms(c_g, d_in[:, : model.k])
    return float(rows.mean()), terms


def generator_loss_and_grads(model: GanModel, aux, noise):
    loss, terms = generator_loss_and_terms(model, aux, noise)
    return loss, aggregate_terms(terms, model.generator.param_shapes(), as_matrix(aux).shape[0])


class GanOptimizers:
    """Adam states for both networks plus the stream used for DP noise."""

    def __init__(self, model: GanModel, cfg: TrainConfig, dp_rng: RngStream | None = None):
        self.critic = AdamState.zeros_like(model.critic.params(), cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2)
        self.generator = AdamState.zeros_like(model.generator.params(), cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2)
        self.dp_rng = dp_rng if dp_rng is not None else RngStream(cfg.seed).child("dp")


def gan_critic_step(model: GanModel, x_real, aux, cfg: TrainConfig, opt: GanOptimizers, rng: RngStream) -> float:
    """One critic update on a real batch and a freshly generated fake batch.

    The critic is always the DP target, and the plain and private paths share
    their arithmetic, so DP with sigma = 0 and an infinite clip norm changes nothing.
    """
    n = as_matrix(x_real).shape[0]
    noise = gaussian_sample(rng, n, model.noise_dim)
    loss, terms = critic_loss_and_terms(model, x_real, aux, noise)
    grads = aggregate_terms(terms, model.critic.param_shapes(), n, cfg.dp, opt.dp_rng)
    params, opt.critic = adam_step(opt.critic, model.critic.params(), grads)
    model.critic.set_params(params)
    if model.variant == "wcgan":
        clamp_critic(model)
    return loss


def gan_generator_step(model: GanModel, aux, cfg: TrainConfig, opt: GanOptimizers, rng: RngStream) -> float:
    aux = _check_aux(model, aux)
    n = aux.shape[0]
    noise = gaussian_sample(rng, n, model.noise_dim)
    loss, terms = generator_loss_and_terms(model, aux, noise)
    dp = cfg.dp if cfg.dp.apply_to == "all" else None
    grads = aggregate_terms(terms, model.generator.param_shapes(), n, dp, opt.dp_rng)
    params, opt.generator = adam_step(opt.generator, model.generator.params(), grads)
    model.generator.set_params(params)
    return loss


def train_gan(data, aux, cfg: TrainConfig, variant: str, model: GanModel | None = None, *,
              arch: dict | None = None):
    """Alternate ``critic_steps_per_generator_step`` critic updates with one generator
    update for every mini-batch. Returns ``(model, trace)`` with per-epoch mean losses."""
    data, aux = as_matrix(data), as_matrix(aux)
    n = data.shape[0]
    if aux.shape[0] != n:
        raise ShapeError(f"data has {n} rows but aux has {aux.shape[0]}")
    if n < cfg.batch_size:
        raise ShapeError(f"need at least batch_size={cfg.batch_size} rows, got {n}")
    root = RngStream(cfg.seed)
    if model is None:
        model = GanModel.build(data.shape[1], aux.shape[1], variant, root.child("init"), **(arch or {}))
    elif model.variant != variant:
        raise ValidationError(f"model is {model.variant}, asked to train {variant}", ["variant"])
    opt = GanOptimizers(model, cfg, root.child("dp"))
    shuffle_rng = root.child("shuffle")
    noise_rng = root.child("noise")

    trace = []
    for epoch in range(1, cfg.epochs + 1):
        c_losses, g_losses = [], []
        perm = shuffle_rng.generator.permutation(n)
        for start in range(0, n - cfg.batch_size + 1, cfg.batch_size):
            rows = perm[start:start + cfg.batch_size]
            xb, ab = data[rows], aux[rows]
            for _ in range(cfg.critic_steps_per_generator_step):
                c_losses.append(gan_critic_step(model, xb, ab, cfg, opt, noise_rng))
            g_losses.append(gan_generator_step(model, ab, cfg, opt, noise_rng))
        row = {"epoch": epoch, "critic_loss": float(np.mean(c_losses)), "generator_loss": float(np.mean(g_losses))}
        if not (np.isfinite(row["critic_loss"]) and np.isfinite(row["generator_loss"])):
            raise TrainingDivergedError(epoch)
        trace.append(row)
    return model, trace


def gan_generate(model: GanModel, aux, rng: RngStream, snap_below: float = 0.0) -> np.ndarray:
    """One synthetic log-space profile per (standardised) aux row, in row order."""
    aux = _check_aux(model, aux)
    out = model.generate(gaussian_sample(rng, aux.shape[0], model.noise_dim), aux)
    if snap_below > 0:
        out = np.where(out < snap_below, 0.0, out)
    return out
