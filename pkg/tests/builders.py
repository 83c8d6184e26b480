"""Small random model instances for gradient checks.

Relu-family kinks break central differences, so instances whose
pre-activations come within ``MARGIN`` of zero are redrawn.
"""
import numpy as np

from txnsynth.core import Mlp, RngStream
from txnsynth.models.gan import GanModel
from txnsynth.models.vae import VaeModel, vae_encode, reparameterize

MARGIN = 1e-3


def _min_abs(caches):
    return min(float(np.min(np.abs(c.pre_activation))) for c in caches)


def vae_instance(seed, k=4, batch=3):
    g = np.random.default_rng(seed)
    while True:
        model = VaeModel.build(k, RngStream(int(g.integers(1 << 31))), hidden=(5, 3), latent_dim=2)
        x = np.abs(g.normal(size=(batch, k))) * 2.0
        noise = g.normal(size=(batch, 2))
        mu, logvar = vae_encode(model, x)
        _, caches = model.decoder.forward(reparameterize(mu, logvar, noise))
        if _min_abs(caches) > MARGIN:
            return model, x, noise


def gan_instance(seed, variant, k=4, aux_dim=2, noise_dim=3, batch=3):
    g = np.random.default_rng(seed)
    while True:
        r = RngStream(int(g.integers(1 << 31)))
        gen = Mlp.build([noise_dim + aux_dim, 5, k], "leaky_relu", "relu", r)
        out = "identity" if variant == "wcgan" else "sigmoid"
        critic = Mlp.build([k + aux_dim, 5, 1], "leaky_relu", out, r)
        # unclamped weights on purpose: clamping would shrink every gradient toward 0
        model = GanModel(gen, critic, noise_dim, variant)
        x = np.abs(g.normal(size=(batch, k)))
        aux = g.normal(size=(batch, aux_dim))
        noise = g.normal(size=(batch, noise_dim))
        fake, c_g = gen.forward(np.hstack([noise, aux]))
        _, c_r = critic.forward(np.hstack([x, aux]))
        _, c_f = critic.forward(np.hstack([fake, aux]))
        if min(_min_abs(c_g), _min_abs(c_r[:-1]), _min_abs(c_f[:-1])) > MARGIN:
            return model, x, aux, noise
