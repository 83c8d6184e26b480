import json
import math

import numpy as np
import pytest

from txnsynth.core import RngStream
from txnsynth.data import AuxScaler, AuxTable, PreprocessMetadata
from txnsynth.errors import ParseError, ValidationError
from txnsynth.models import (
    GanModel,
    ModelBundle,
    TrainConfig,
    VaeModel,
    load_bundle,
    save_bundle,
)
from txnsynth.optim import DpConfig


def _meta(k=4):
    g = np.random.default_rng(0)
    aux = AuxTable(tuple(f"c{i}" for i in range(10)),
                   np.column_stack([g.uniform(20, 60, 10), g.uniform(1e4, 9e4, (10, 4))]))
    cats = tuple(f"k{j}" for j in range(k))
    return PreprocessMetadata(cats, 100.0, 0.8, 17, AuxScaler.fit(aux), cats[:2], 8, 2)


def _models():
    yield VaeModel.build(4, RngStream(1), hidden=(6, 3), latent_dim=2)
    yield GanModel.build(4, 5, "cgan", RngStream(2), noise_dim=3, gen_hidden=(6,), critic_hidden=(6,))
    yield GanModel.build(4, 5, "wcgan", RngStream(3), noise_dim=3, gen_hidden=(6,), critic_hidden=(6,))


def _params(model):
    if isinstance(model, VaeModel):
        return model.params()
    return model.generator.params() + model.critic.params()


@pytest.mark.parametrize("model", list(_models()), ids=["vae", "cgan", "wcgan"])
def test_round_trip_bit_exact(tmp_path, model):
    variant = "vae" if isinstance(model, VaeModel) else model.variant
    tc = TrainConfig.default_for(variant, seed=9, dp=DpConfig(math.inf, 0.0, True))
    bundle = ModelBundle(model, _meta(), tc, 1.0)
    save_bundle(bundle, tmp_path / "b.json")
    back = load_bundle(tmp_path / "b.json")
    assert back.variant == variant
    for a, b in zip(_params(model), _params(back.model)):
        assert a.dtype == b.dtype and a.tobytes() == b.tobytes()
    assert back.train_config == tc
    assert np.array_equal(back.preprocessing.aux_scaler.mean, bundle.preprocessing.aux_scaler.mean)
    assert back.dumps() == bundle.dumps()


def test_bundle_bytes_deterministic():
    a = ModelBundle(VaeModel.build(4, RngStream(5)), _meta(), TrainConfig(), 1.0).dumps()
    b = ModelBundle(VaeModel.build(4, RngStream(5)), _meta(), TrainConfig(), 1.0).dumps()
    assert a == b


def test_loaded_model_generates_identically():
    from txnsynth.models import gan_generate
    m = GanModel.build(4, 5, "cgan", RngStream(2))
    back = ModelBundle.from_dict(json.loads(ModelBundle(m, _meta(), TrainConfig(), 1.0).dumps())).model
    aux = np.random.default_rng(0).normal(size=(7, 5))
    assert np.array_equal(gan_generate(m, aux, RngStream(4)), gan_generate(back, aux, RngStream(4)))


def test_bad_json_is_parse_error(tmp_path):
    (tmp_path / "b.json").write_text("{not json")
    with pytest.raises(ParseError):
        load_bundle(tmp_path / "b.json")


@pytest.mark.parametrize("patch", [{"format": "other"}, {"version": 2}, {"variant": "gan"}])
def test_bad_header_is_validation_error(tmp_path, patch):
    d = ModelBundle(VaeModel.build(4, RngStream(5)), _meta(), TrainConfig(), 1.0).to_dict()
    d.update(patch)
    (tmp_path / "b.json").write_text(json.dumps(d))
    with pytest.raises(ValidationError):
        load_bundle(tmp_path / "b.json")


def test_truncated_array_rejected(tmp_path):
    d = ModelBundle(VaeModel.build(4, RngStream(5)), _meta(), TrainConfig(), 1.0).to_dict()
    d["networks"]["decoder"][0]["weights"]["shape"] = [99, 99]
    (tmp_path / "b.json").write_text(json.dumps(d))
    with pytest.raises(ValidationError):
        load_bundle(tmp_path / "b.json")
