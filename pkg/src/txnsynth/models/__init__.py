from .bundle import ModelBundle, load_bundle, save_bundle
from .config import VARIANTS, TrainConfig
from .gan import GanModel, gan_critic_step, gan_generate, gan_generator_step, train_gan
from .vae import (
    VaeModel,
    reparameterize,
    train_vae,
    vae_encode,
    vae_generate_from_data,
    vae_generate_from_noise,
    vae_loss,
)

# Default post-hoc snap: generated cells worth under one dollar become exact zeros.
DEFAULT_SNAP_DOLLARS = 1.0
