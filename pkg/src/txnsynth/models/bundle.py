"""Model bundle files.

A bundle is one UTF-8 JSON document (keys sorted, so equal bundles are equal bytes)::

    {
      "format": "txnsynth-bundle",
      "version": 1,
      "variant": "vae" | "cgan" | "wcgan",
      "architecture": {...},            # informational summary
      "networks": {
        "<name>": [{"activation": str,
                    "weights": {"shape": [in, out], "data": <base64>},
                    "bias":    {"shape": [out],     "data": <base64>}}, ...]
      },
      "noise_dim": int, "clip_value": float,          # GAN bundles only
      "preprocessing": {...},                         # PreprocessMetadata.to_dict()
      "train_config": {...},                          # TrainConfig.to_dict()
      "snap_below_dollars": float
    }

VAE networks are ``encoder``, ``mu_head``, ``logvar_head``, ``decoder``; GAN
networks are ``generator`` and ``critic``. Array data is the raw little-endian
float64 bytes, base64 encoded, so parameters round-trip bit for bit. An infinite
clip norm in the train config is written as the JSON extension ``Infinity``.
"""
from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..core import DenseLayer, Mlp
from ..data.preprocess import PreprocessMetadata
from ..errors import ParseError, ValidationError
from .config import TrainConfig
from .gan import GanModel
from .vae import VaeModel

BUNDLE_FORMAT = "txnsynth-bundle"
BUNDLE_VERSION = 1


def encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def decode_array(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"].encode("ascii"), validate=True)
    shape = tuple(int(s) for s in d["shape"])
    a = np.frombuffer(raw, dtype="<f8")
    if a.size != int(np.prod(shape)):
        raise ValidationError(f"array data holds {a.size} values, shape {shape} needs {int(np.prod(shape))}", ["shape"])
    return a.reshape(shape).astype(np.float64)


def _layers_out(layers) -> list[dict]:
    return [{"activation": l.activation, "weights": encode_array(l.weights), "bias": encode_array(l.bias)}
            for l in layers]


def _layers_in(items) -> list[DenseLayer]:
    return [DenseLayer(decode_array(d["weights"]), decode_array(d["bias"]), d["activation"]) for d in items]


@dataclass
class ModelBundle:
    model: VaeModel | GanModel
    preprocessing: PreprocessMetadata
    train_config: TrainConfig
    snap_below_dollars: float = 1.0

    @property
    def variant(self) -> str:
        return "vae" if isinstance(self.model, VaeModel) else self.model.variant

    def to_dict(self) -> dict:
        m = self.model
        d = {
            "format": BUNDLE_FORMAT,
            "version": BUNDLE_VERSION,
            "variant": self.variant,
            "architecture": m.architecture(),
            "preprocessing": self.preprocessing.to_dict(),
            "train_config": self.train_config.to_dict(),
            "snap_below_dollars": float(self.snap_below_dollars),
        }
        if isinstance(m, VaeModel):
            d["networks"] = {
                "encoder": _layers_out(m.encoder.layers),
                "mu_head": _layers_out([m.mu_head]),
                "logvar_head": _layers_out([m.logvar_head]),
                "decoder": _layers_out(m.decoder.layers),
            }
        else:
            d["networks"] = {"generator": _layers_out(m.generator.layers), "critic": _layers_out(m.critic.layers)}
            d["noise_dim"] = m.noise_dim
            d["clip_value"] = m.clip_value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelBundle":
        if d.get("format") != BUNDLE_FORMAT:
            raise ValidationError("not a model bundle", ["format"])
        if d.get("version") != BUNDLE_VERSION:
            raise ValidationError(f"unsupported bundle version {d.get('version')!r}", ["version"])
        nets = d["networks"]
        variant = d["variant"]
        if variant == "vae":
            model = VaeModel(Mlp(_layers_in(nets["encoder"])), _layers_in(nets["mu_head"])[0],
                             _layers_in(nets["logvar_head"])[0], Mlp(_layers_in(nets["decoder"])))
        elif variant in ("cgan", "wcgan"):
            model = GanModel(Mlp(_layers_in(nets["generator"])), Mlp(_layers_in(nets["critic"])),
                             int(d["noise_dim"]), variant, float(d["clip_value"]))
        else:
            raise ValidationError(f"unknown variant {variant!r}", ["variant"])
        return cls(model, PreprocessMetadata.from_dict(d["preprocessing"]),
                   TrainConfig.from_dict(d["train_config"]), float(d["snap_below_dollars"]))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"


def save_bundle(bundle: ModelBundle, path) -> None:
    Path(path).write_text(bundle.dumps(), encoding="utf-8")


def load_bundle(path) -> ModelBundle:
    text = Path(path).read_text(encoding="utf-8")
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"bundle is not valid JSON: {e.msg}", path=str(path), line=e.lineno, column=e.colno) from e
    try:
        return ModelBundle.from_dict(d)
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, ValidationError):
            raise
        raise ValidationError(f"malformed bundle: {e!r}", ["networks"]) from e
