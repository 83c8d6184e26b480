import csv
import json
import math

import numpy as np
import pytest

from txnsynth.cli import main
from txnsynth.data import AUX_COLUMNS, DEFAULT_CATEGORIES, load_profiles_csv
from txnsynth.models import load_bundle

SMALL = """
[run]
seed = 5
[simulator]
n_clients = 600
[train]
epochs = 2
batch_size = 64
[model.vae]
hidden = 16, 8
latent_dim = 4
[model.cgan]
gen_hidden = 16
critic_hidden = 16
noise_dim = 4
[model.wcgan]
gen_hidden = 16
critic_hidden = 16
noise_dim = 4
"""


def run(*argv):
    return main([str(a) for a in argv])


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipe")
    cfg = root / "small.ini"
    cfg.write_text(SMALL)
    assert run("simulate", "--config", cfg, "--out", root / "sim") == 0
    assert run("preprocess", "--config", cfg, "--in", root / "sim", "--out", root / "prep") == 0
    for v in ("vae", "cgan", "wcgan"):
        assert run("train", "--config", cfg, "--model", v, "--data", root / "prep", "--out", root / v) == 0
    return root, cfg


def test_simulate_schema_and_determinism(pipeline, tmp_path):
    root, cfg = pipeline
    assert _rows(root / "sim" / "profiles.csv")[0] == ["client_id", *DEFAULT_CATEGORIES]
    assert _rows(root / "sim" / "aux.csv")[0] == ["client_id", *AUX_COLUMNS]
    assert run("simulate", "--config", cfg, "--out", tmp_path) == 0
    for name in ("profiles.csv", "aux.csv"):
        assert (tmp_path / name).read_bytes() == (root / "sim" / name).read_bytes()


def test_simulate_zero_clients_exit_2(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[simulator]\nn_clients = 0\n")
    assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == 2
    assert "n_clients" in capsys.readouterr().err


def test_preprocess_partition_and_metadata(pipeline, tmp_path):
    root, cfg = pipeline
    prep = root / "prep"
    meta = json.loads((prep / "metadata.json").read_text())
    n_train, n_test = len(_rows(prep / "train_profiles.csv")) - 1, len(_rows(prep / "test_profiles.csv")) - 1
    assert (n_train, n_test) == (meta["n_train"], meta["n_test"])
    assert n_train == int(math.floor(0.8 * (n_train + n_test) + 0.5))
    assert len(_rows(prep / "train_aux.csv")) - 1 == n_train
    assert meta["transform"] == "log1p" and len(meta["common_categories"]) == 20
    assert len(meta["aux_scaler"]["mean"]) == 5
    # log-space file inverts to the simulated dollars exactly
    sim = load_profiles_csv(root / "sim" / "profiles.csv")
    test = load_profiles_csv(prep / "test_profiles.csv", space="log")
    rows = [sim.client_ids.index(c) for c in test.client_ids]
    np.testing.assert_allclose(np.expm1(test.amounts), sim.amounts[rows], rtol=1e-12, atol=1e-9)
    assert run("preprocess", "--config", cfg, "--in", root / "sim", "--out", tmp_path) == 0
    for f in prep.iterdir():
        assert (tmp_path / f.name).read_bytes() == f.read_bytes()


def test_preprocess_parse_error_exit_3(tmp_path, capsys):
    (tmp_path / "profiles.csv").write_text("client_id,a\nx,1\ny,oops\n")
    (tmp_path / "aux.csv").write_text("client_id,age,salary,credit_limit,balance,last_repayment\nx,30,1,1,1,1\n")
    assert run("preprocess", "--in", tmp_path, "--out", tmp_path / "o") == 3
    assert "line 3" in capsys.readouterr().err


def test_train_outputs(pipeline):
    root, _ = pipeline
    b = load_bundle(root / "vae" / "bundle.json")
    assert b.variant == "vae" and b.model.latent_dim == 4
    header = _rows(root / "wcgan" / "loss_trace.csv")[0]
    assert "critic_loss" in header and "generator_loss" in header
    assert len(_rows(root / "wcgan" / "loss_trace.csv")) == 3


def test_dp_degenerate_trace_identical(pipeline, tmp_path):
    root, cfg = pipeline
    assert run("train", "--config", cfg, "--model", "cgan", "--data", root / "prep", "--out", tmp_path,
               "--dp", "--noise-multiplier", 0, "--clip-norm", 1e300) == 0
    assert (tmp_path / "loss_trace.csv").read_bytes() == (root / "cgan" / "loss_trace.csv").read_bytes()


def test_generate_conditional_manifest(pipeline, tmp_path):
    root, cfg = pipeline
    assert run("generate", "--config", cfg, "--model", root / "cgan", "--mode", "conditional",
               "--data", root / "prep", "--out", tmp_path, "--seed", 3) == 0
    m = json.loads((tmp_path / "manifest.json").read_text())
    n_aux = len(_rows(root / "prep" / "test_aux.csv")) - 1
    assert m["pairing"] == "index_aligned" and m["rows"] == n_aux and m["mode"] == "conditional"
    syn = load_profiles_csv(tmp_path / "synthetic_profiles.csv")
    assert len(syn) == n_aux and np.all(syn.amounts >= 0)


def test_generate_from_noise_is_pairing_arbitrary(pipeline, tmp_path):
    root, cfg = pipeline
    assert run("generate", "--model", root / "vae", "--mode", "from-noise", "--data", root / "prep",
               "--out", tmp_path, "--seed", 1, "--n", 7) == 0
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["pairing"] == "pairing-arbitrary" and m["rows"] == 7


def test_generate_mode_mismatch_names_both(pipeline, tmp_path, capsys):
    root, _ = pipeline
    assert run("generate", "--model", root / "cgan", "--mode", "from-data", "--data", root / "prep",
               "--out", tmp_path) == 2
    err = capsys.readouterr().err
    assert "from-data" in err and "cgan" in err


def test_evaluate_self_comparison(pipeline, tmp_path):
    root, cfg = pipeline
    prep = root / "prep"
    test = load_profiles_csv(prep / "test_profiles.csv", space="log")
    from txnsynth.data import ProfileTable, save_profiles_csv
    save_profiles_csv(ProfileTable(test.client_ids, test.categories, np.expm1(test.amounts)), tmp_path / "syn.csv")
    (tmp_path / "m.json").write_text(json.dumps({"format": "txnsynth-manifest", "version": 1, "mode": "from-data",
                                                 "variant": "vae", "pairing": "index_aligned", "seed": 0}))
    (tmp_path / "ins.txt").write_text("g, 5411_grocery, 1\nc, 5651_clothing, 10\nt, *top:20, 100\n")
    assert run("evaluate", "--config", cfg, "--data", prep, "--synthetic", tmp_path / "syn.csv",
               "--manifest", tmp_path / "m.json", "--insights", tmp_path / "ins.txt", "--out", tmp_path / "r") == 0
    rows = dict(r for r in _rows(tmp_path / "r" / "report.csv")[1:])
    assert float(rows["full.avg_wasserstein"]) < 1e-9
    assert float(rows["full.avg_cosine_distance"]) < 1e-9
    assert rows["full.sparsity_verdict"] == "yes"
    deltas = [k for k in rows if k.startswith("insight.") and k.endswith(".delta")]
    assert len(deltas) == 3 and all(float(rows[k]) == 0.0 for k in deltas)
    text = (tmp_path / "r" / "report.txt").read_text()
    assert "common" in text.lower()


def test_evaluate_column_mismatch_names_columns(pipeline, tmp_path, capsys):
    root, cfg = pipeline
    (tmp_path / "syn.csv").write_text("client_id,5411_grocery\nx,1\n")
    (tmp_path / "m.json").write_text("{}")
    code = run("evaluate", "--data", root / "prep", "--synthetic", tmp_path / "syn.csv",
               "--manifest", tmp_path / "m.json", "--out", tmp_path / "r")
    assert code == 2
    assert "5651_clothing" in capsys.readouterr().err


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_diverged_training_exit_4(pipeline, tmp_path, capsys):
    root, _ = pipeline
    cfg = tmp_path / "hot.ini"
    cfg.write_text(SMALL + "\n[train.vae]\nlearning_rate = 1e200\n")
    assert run("train", "--config", cfg, "--model", "vae", "--data", root / "prep", "--out", tmp_path / "o") == 4
    assert "diverged" in capsys.readouterr().err


def test_unknown_subcommand_is_usage_exit():
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == 2


@pytest.fixture(scope="module")
def two_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("runall")
    cfg = root / "small.ini"
    cfg.write_text(SMALL)
    for name in ("a", "b"):
        assert run("run-all", "--config", cfg, "--out", root / name) == 0
    return root


def test_run_all_table_layout(two_runs):
    rows = _rows(two_runs / "a" / "table1.csv")
    assert rows[0][1:] == ["sparsity", "wasserstein_distance", "cosine_distance"]
    assert [r[0] for r in rows[1:]] == ["vae from data", "vae from noise", "cgan", "wcgan"]
    for s in ("vae-from-data", "vae-from-noise", "cgan", "wcgan"):
        assert (two_runs / "a" / "settings" / s / "report.csv").exists()


def test_run_all_reproducible(two_runs):
    a, b = two_runs / "a", two_runs / "b"
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert files
    for f in files:
        assert (a / f).read_bytes() == (b / f).read_bytes(), f


def test_stage_isolation_regenerates_deleted_intermediate(two_runs, tmp_path):
    a = two_runs / "a"
    cfg = two_runs / "small.ini"
    assert run("train", "--config", cfg, "--model", "wcgan", "--data", a / "preprocessed", "--out", tmp_path) == 0
    assert (tmp_path / "bundle.json").read_bytes() == (a / "models" / "wcgan" / "bundle.json").read_bytes()
