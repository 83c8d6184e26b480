from __future__ import annotations

from dataclasses import asdict, dataclass, field

from ..errors import ValidationError
from ..optim import DpConfig

VARIANTS = ("vae", "cgan", "wcgan")


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 128
    learning_rate: float = 1e-3
    critic_steps_per_generator_step: int = 1
    dp: DpConfig = field(default_factory=DpConfig)
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999

    def __post_init__(self):
        if isinstance(self.dp, dict):
            self.dp = DpConfig(**self.dp)
        bad = []
        if self.epochs < 0:
            bad.append("epochs")
        if self.batch_size < 1:
            bad.append("batch_size")
        if self.critic_steps_per_generator_step < 1:
            bad.append("critic_steps_per_generator_step")
        if not self.learning_rate > 0:
            bad.append("learning_rate")
        if self.seed < 0:
            bad.append("seed")
        if bad:
            raise ValidationError("invalid training configuration", bad)

    @classmethod
    def default_for(cls, variant: str, **overrides) -> "TrainConfig":
        """Per-variant defaults; nothing here was tuned beyond a handful of runs."""
        if variant == "vae":
            base = dict(epochs=30, batch_size=128, learning_rate=1e-3)
        elif variant == "cgan":
            base = dict(epochs=100, batch_size=128, learning_rate=2e-4,
                        critic_steps_per_generator_step=1, adam_beta1=0.5)
        elif variant == "wcgan":
            base = dict(epochs=100, batch_size=128, learning_rate=1e-4,
                        critic_steps_per_generator_step=5, adam_beta1=0.5)
        else:
            raise ValidationError(f"unknown model variant {variant!r}", ["variant"])
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "TrainConfig":
        d = dict(d)
        d["dp"] = DpConfig(**d.get("dp", {}))
        return cls(**d)
