"""Variational autoencoder over log1p spend profiles, trained with a Gaussian ELBO.

Loss per batch: squared error summed over categories and averaged over rows,
plus the analytic KL of N(mu, exp(logvar)) to N(0, I), also averaged over rows.
"""
from __future__ import annotations

import numpy as np

from ..core import DenseLayer, Mlp, RngStream, as_matrix, dense_forward, gaussian_sample
from ..errors import ShapeError, TrainingDivergedError
from ..optim import AdamState, GradTerm, adam_step, aggregate_terms
from .config import TrainConfig


class VaeModel:
    def __init__(self, encoder: Mlp, mu_head: DenseLayer, logvar_head: DenseLayer, decoder: Mlp):
        if mu_head.in_dim != encoder.out_dim or logvar_head.in_dim != encoder.out_dim:
            raise ShapeError("latent heads must read the encoder trunk output")
        if mu_head.out_dim != logvar_head.out_dim or decoder.in_dim != mu_head.out_dim:
            raise ShapeError("mu/logvar heads and decoder input must share latent_dim")
        if decoder.out_dim != encoder.in_dim:
            raise ShapeError("decoder output width must equal encoder input width")
        self.encoder = encoder
        self.mu_head = mu_head
        self.logvar_head = logvar_head
        self.decoder = decoder

    @classmethod
    def build(cls, k: int, rng: RngStream, hidden=(64, 32), latent_dim: int = 8,
              activation: str = "tanh") -> "VaeModel":
        hidden = list(hidden)
        encoder = Mlp.build([k] + hidden, activation, activation, rng)
        mu_head = DenseLayer.init(hidden[-1], latent_dim, "identity", rng)
        logvar_head = DenseLayer.init(hidden[-1], latent_dim, "identity", rng)
        decoder = Mlp.build([latent_dim] + hidden[::-1] + [k], activation, "relu", rng)
        return cls(encoder, mu_head, logvar_head, decoder)

    @property
    def k(self) -> int:
        return self.encoder.in_dim

    @property
    def latent_dim(self) -> int:
        return self.mu_head.out_dim

    def architecture(self) -> dict:
        return {
            "kind": "vae",
            "encoder_widths": self.encoder.widths,
            "latent_dim": self.latent_dim,
            "decoder_widths": self.decoder.widths,
            "activation": self.encoder.layers[0].activation,
        }

    def params(self) -> list[np.ndarray]:
        return self.encoder.params() + self.mu_head.params() + self.logvar_head.params() + self.decoder.params()

    def set_params(self, params) -> None:
        params = list(params)
        ne, nd = len(self.encoder.params()), len(self.decoder.params())
        if len(params) != ne + 4 + nd:
            raise ShapeError(f"expected {ne + 4 + nd} parameter arrays, got {len(params)}")
        self.encoder.set_params(params[:ne])
        self.mu_head.weights, self.mu_head.bias = params[ne], params[ne + 1]
        self.logvar_head.weights, self.logvar_head.bias = params[ne + 2], params[ne + 3]
        self.decoder.set_params(params[ne + 4:])

    def copy(self) -> "VaeModel":
        return VaeModel(self.encoder.copy(), self.mu_head.copy(), self.logvar_head.copy(), self.decoder.copy())

    def decode(self, z) -> np.ndarray:
        return self.decoder(z)


def vae_encode(model: VaeModel, x) -> tuple[np.ndarray, np.ndarray]:
    x = as_matrix(x)
    if x.shape[1] != model.k:
        raise ShapeError(f"input has {x.shape[1]} columns, model expects {model.k}")
    h = model.encoder(x)
    return dense_forward(model.mu_head, h)[0], dense_forward(model.logvar_head, h)[0]


def reparameterize(mu, logvar, noise) -> np.ndarray:
    mu, logvar, noise = as_matrix(mu), as_matrix(logvar), as_matrix(noise)
    if not (mu.shape == logvar.shape == noise.shape):
        raise ShapeError(f"shapes differ: mu {mu.shape}, logvar {logvar.shape}, noise {noise.shape}")
    return mu + np.exp(0.5 * logvar) * noise


def _kl_rows(mu, logvar):
    return -0.5 * np.sum(1.0 + logvar - mu * mu - np.exp(logvar), axis=1)


def vae_loss(x, x_hat, mu, logvar) -> tuple[float, float, float]:
    """Returns ``(total, recon, kl)``, each averaged over the batch."""
    x, x_hat, mu, logvar = (as_matrix(a) for a in (x, x_hat, mu, logvar))
    if x.shape != x_hat.shape or mu.shape != logvar.shape or x.shape[0] != mu.shape[0]:
        raise ShapeError(f"inconsistent shapes: x {x.shape}, x_hat {x_hat.shape}, "
                         f"mu {mu.shape}, logvar {logvar.shape}")
    recon = float(np.mean(np.sum((x_hat - x) ** 2, axis=1)))
    kl = float(np.mean(_kl_rows(mu, logvar)))
    return recon + kl, recon, kl


def vae_loss_and_terms(model: VaeModel, x, noise):
    """ELBO loss for a given latent noise draw, plus per-row gradient terms.

    Term indices follow ``model.params()``; row i of each term belongs to the
    gradient of row i's own loss.
    """
    x = as_matrix(x)
    h, enc_caches = model.encoder.forward(x)
    mu, c_mu = dense_forward(model.mu_head, h)
    logvar, c_lv = dense_forward(model.logvar_head, h)
    std = np.exp(0.5 * logvar)
    z = mu + std * noise
    x_hat, dec_caches = model.decoder.forward(z)
    losses = vae_loss(x, x_hat, mu, logvar)

    ne = len(model.encoder.params())
    dec_terms, dz = model.decoder.backward_terms(dec_caches, 2.0 * (x_hat - x), offset=ne + 4)
    # both heads are linear, so their cotangents are the pre-activation ones
    dmu = dz + mu
    dlogvar = dz * noise * 0.5 * std + 0.5 * (np.exp(logvar) - 1.0)
    head_terms = [GradTerm(ne, c_mu.input, dmu), GradTerm(ne + 2, c_lv.input, dlogvar)]
    dh = dmu @ model.mu_head.weights.T + dlogvar @ model.logvar_head.weights.T
    enc_terms, _ = model.encoder.backward_terms(enc_caches, dh)
    return losses, dec_terms + head_terms + enc_terms


def param_shapes(model: VaeModel) -> list[tuple]:
    return [p.shape for p in model.params()]


def vae_loss_and_grads(model: VaeModel, x, noise):
    """Loss triple and batch-mean gradients ordered like ``model.params()``."""
    losses, terms = vae_loss_and_terms(model, x, noise)
    return losses, aggregate_terms(terms, param_shapes(model), as_matrix(x).shape[0])


def _batches(n, batch_size, rng):
    perm = rng.generator.permutation(n)
    for start in range(0, n - batch_size + 1, batch_size):
        yield perm[start:start + batch_size]


def validation_loss(model: VaeModel, x_val, noise_val) -> tuple[float, float, float]:
    mu, logvar = vae_encode(model, x_val)
    x_hat = model.decode(reparameterize(mu, logvar, noise_val))
    return vae_loss(x_val, x_hat, mu, logvar)


def train_vae(data, cfg: TrainConfig, model: VaeModel | None = None, *, arch: dict | None = None):
    """Train on log-space rows. Returns ``(model, trace)``; ``trace[0]`` is the untrained state.

    The validation slice is a fixed, seeded subset of ``data`` evaluated with a
    fixed latent noise draw, so its loss is comparable across epochs.
    """
    data = as_matrix(data)
    n = data.shape[0]
    if n < cfg.batch_size:
        raise ShapeError(f"need at least batch_size={cfg.batch_size} rows, got {n}")
    root = RngStream(cfg.seed)
    if model is None:
        model = VaeModel.build(data.shape[1], root.child("init"), **(arch or {}))
    val_rows = root.child("validation").generator.permutation(n)[: min(n, 1000)]
    x_val = data[np.sort(val_rows)]
    noise_val = gaussian_sample(root.child("validation-noise"), len(x_val), model.latent_dim)

    shuffle_rng = root.child("shuffle")
    noise_rng = root.child("noise")
    dp_rng = root.child("dp")
    dp = cfg.dp if cfg.dp.apply_to == "all" else None
    shapes = param_shapes(model)
    state = AdamState.zeros_like(model.params(), cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2)

    def record(epoch, train_total):
        total, recon, kl = validation_loss(model, x_val, noise_val)
        return {"epoch": epoch, "train_total": train_total, "val_total": total,
                "val_recon": recon, "val_kl": kl}

    trace = [record(0, float("nan"))]
    for epoch in range(1, cfg.epochs + 1):
        running = []
        for rows in _batches(n, cfg.batch_size, shuffle_rng):
            xb = data[rows]
            noise = gaussian_sample(noise_rng, len(rows), model.latent_dim)
            (total, _, _), terms = vae_loss_and_terms(model, xb, noise)
            if not np.isfinite(total):
                raise TrainingDivergedError(epoch)
            grads = aggregate_terms(terms, shapes, len(rows), dp, dp_rng)
            params, state = adam_step(state, model.params(), grads)
            model.set_params(params)
            running.append(total)
        row = record(epoch, float(np.mean(running)))
        if not all(np.isfinite(v) for v in (row["train_total"], row["val_total"])):
            raise TrainingDivergedError(epoch)
        trace.append(row)
    return model, trace


def _snap(x, snap_below):
    if snap_below > 0:
        x = np.where(x < snap_below, 0.0, x)
    return x


def vae_generate_from_data(model: VaeModel, x_real, rng: RngStream, snap_below: float = 0.0) -> np.ndarray:
    """Encode real rows, sample their latent posteriors, decode. Row i pairs with input row i."""
    mu, logvar = vae_encode(model, x_real)
    z = reparameterize(mu, logvar, gaussian_sample(rng, *mu.shape))
    return _snap(model.decode(z), snap_below)


def vae_generate_from_noise(model: VaeModel, n: int, rng: RngStream, snap_below: float = 0.0) -> np.ndarray:
    """Decode ``n`` standard-normal latent vectors."""
    return _snap(model.decode(gaussian_sample(rng, n, model.latent_dim)), snap_below)
