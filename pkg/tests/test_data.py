import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import active_rows_scan, simulator_sparsity_mc
from txnsynth.data import (
    AUX_COLUMNS,
    DEFAULT_CATEGORIES,
    AuxScaler,
    AuxTable,
    PreprocessConfig,
    PreprocessMetadata,
    ProfileTable,
    SimulatorConfig,
    filter_active_clients,
    inverse_log_transform,
    load_aux_csv,
    load_profiles_csv,
    log_transform,
    save_aux_csv,
    save_profiles_csv,
    simulate_population,
    train_test_split,
)
from txnsynth.data.preprocess import split_sizes
from txnsynth.errors import ParseError, ShapeError, UsageError, ValidationError
from txnsynth.metrics import column_sparsity, row_sparsity


def _tables(amounts, seed=0):
    amounts = np.asarray(amounts, dtype=float)
    n = len(amounts)
    ids = tuple(f"c{i}" for i in range(n))
    cats = tuple(f"k{j}" for j in range(amounts.shape[1]))
    g = np.random.default_rng(seed)
    aux = np.column_stack([g.uniform(20, 80, n), g.uniform(1e4, 1e5, n), g.uniform(0, 2e4, n),
                           g.uniform(0, 5e3, n), g.uniform(0, 1e3, n)])
    return ProfileTable(ids, cats, amounts), AuxTable(ids, aux)


def _sparse_amounts(g, n, k, p_zero=0.7):
    m = np.exp(g.normal(3.0, 1.5, size=(n, k)))
    m[g.random((n, k)) < p_zero] = 0.0
    return m


# --- simulator

def test_simulator_all_zero_probabilities():
    cfg = SimulatorConfig(n_clients=50, activation_probs=np.zeros((4, 26)), coupling=np.zeros((5, 26)))
    p, a = simulate_population(cfg)
    assert np.all(p.amounts == 0)
    assert len(a) == 50


def test_simulator_forced_support():
    probs = np.zeros((4, 26))
    probs[:, 3] = 1.0
    cfg = SimulatorConfig(n_clients=200, activation_probs=probs, coupling=np.zeros((5, 26)), outlier_rate=0.0)
    p, _ = simulate_population(cfg)
    cols = column_sparsity(p.amounts)
    assert cols[3] == 0.0
    assert np.all(np.delete(cols, 3) == 1.0)


def test_simulator_row_sparsity_matches_monte_carlo_oracle():
    cfg = SimulatorConfig(n_clients=10_000, seed=5)
    p, _ = simulate_population(cfg)
    expected = simulator_sparsity_mc(cfg)
    assert abs(row_sparsity(p.amounts) - expected) <= 0.05


def test_simulator_deterministic_per_seed():
    a = simulate_population(SimulatorConfig(n_clients=300, seed=3))
    b = simulate_population(SimulatorConfig(n_clients=300, seed=3))
    c = simulate_population(SimulatorConfig(n_clients=300, seed=4))
    assert np.array_equal(a[0].amounts, b[0].amounts) and np.array_equal(a[1].values, b[1].values)
    assert not np.array_equal(a[0].amounts, c[0].amounts)


def test_simulator_shapes_and_schema():
    p, a = simulate_population(SimulatorConfig(n_clients=40))
    assert p.amounts.shape == (40, 26) and p.categories == DEFAULT_CATEGORIES
    assert a.values.shape == (40, len(AUX_COLUMNS)) and p.client_ids == a.client_ids
    assert np.all(a.values[:, 0] > 0) and np.all(a.values[:, 2] >= 0)


def test_simulator_has_outliers():
    cfg = SimulatorConfig(n_clients=5000, outlier_rate=0.05, outlier_scale=50.0, seed=2)
    p, _ = simulate_population(cfg)
    base, _ = simulate_population(SimulatorConfig(n_clients=5000, outlier_rate=0.0, seed=2))
    assert p.amounts.max() > 10 * base.amounts.max() / 2


@pytest.mark.parametrize("kw,field", [
    ({"n_clients": 0}, "n_clients"),
    ({"outlier_rate": 0.06}, "outlier_rate"),
    ({"activation_probs": np.full((4, 26), 1.5)}, "activation_probs"),
    ({"segment_weights": np.array([0.5, 0.5, 0.5, 0.5])}, "segment_weights"),
])
def test_simulator_validation_names_fields(kw, field):
    with pytest.raises(ValidationError) as e:
        SimulatorConfig(**kw)
    assert field in e.value.fields


def test_simulator_coupling_monotone_monte_carlo():
    # raising a positive coupling never lowers the category's activation rate
    j = len(DEFAULT_CATEGORIES) - 1
    rates = []
    for level in (0.0, 1.0, 3.0):
        c = np.zeros((5, 26))
        c[1, j] = level
        p, _ = simulate_population(SimulatorConfig(n_clients=20_000, coupling=c, seed=11))
        rates.append(float(np.mean(p.amounts[:, j] > 0)))
    assert rates[0] <= rates[1] <= rates[2]
    assert rates[2] > rates[0]


# --- activity filter

def test_filter_threshold_zero_drops_all_zero_rows():
    p, a = _tables([[0, 0], [0.5, 0], [0, 0], [3, 4]])
    fp, fa = filter_active_clients(p, a, PreprocessConfig(activity_threshold=0.0))
    assert fp.client_ids == ("c1", "c3") and fa.client_ids == ("c1", "c3")


def test_filter_above_max_is_empty():
    p, a = _tables([[1, 2], [3, 4]])
    fp, fa = filter_active_clients(p, a, PreprocessConfig(activity_threshold=1e9))
    assert len(fp) == 0 and len(fa) == 0


def test_filter_matches_scan_oracle(np_rng):
    m = _sparse_amounts(np_rng, 500, 6)
    m[0] = [50, 50, 0, 0, 0, 0]  # exactly 100: excluded by strict inequality
    p, a = _tables(m)
    fp, fa = filter_active_clients(p, a, PreprocessConfig(activity_threshold=100.0))
    keep = active_rows_scan(m, 100.0)
    assert list(fp.client_ids) == [f"c{i}" for i in keep]
    assert np.array_equal(fa.values, a.values[keep])
    assert "c0" not in fp.client_ids


def test_filter_rejects_log_space():
    p, a = _tables([[1.0, 2.0]])
    with pytest.raises(UsageError):
        filter_active_clients(log_transform(p), a, PreprocessConfig())


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0, 500), st.floats(0, 500))
def test_filter_monotone_in_threshold(seed, t1, t2):
    g = np.random.default_rng(seed)
    p, a = _tables(_sparse_amounts(g, 60, 4))
    lo, hi = sorted((t1, t2))
    n_lo = len(filter_active_clients(p, a, PreprocessConfig(activity_threshold=lo))[0])
    n_hi = len(filter_active_clients(p, a, PreprocessConfig(activity_threshold=hi))[0])
    assert n_hi <= n_lo


# --- log transform

def test_log_transform_examples():
    p, _ = _tables([[0.0, math.e - 1]])
    lp = log_transform(p)
    assert lp.space == "log"
    assert lp.amounts[0, 0] == 0.0
    assert lp.amounts[0, 1] == pytest.approx(1.0, abs=1e-15)


def test_log_round_trip(np_rng):
    p, _ = _tables(_sparse_amounts(np_rng, 300, 8))
    back = inverse_log_transform(log_transform(p))
    assert back.space == "dollars"
    err = np.abs(back.amounts - p.amounts)
    assert err.max() < 1e-9 * max(1.0, p.amounts.max())
    assert np.all(err <= 1e-9 * np.maximum(p.amounts, 1.0))


def test_inverse_snaps_negative_to_zero():
    p = ProfileTable(("a",), ("x", "y"), np.array([[0.0, 1e-20]]), "log")
    assert np.all(inverse_log_transform(p).amounts >= 0)


def test_transforms_check_space():
    p, _ = _tables([[1.0]])
    with pytest.raises(UsageError):
        inverse_log_transform(p)
    with pytest.raises(UsageError):
        log_transform(log_transform(p))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 30), st.integers(1, 10))
def test_sparsity_identical_in_both_spaces(seed, n, k):
    g = np.random.default_rng(seed)
    m = _sparse_amounts(g, n, k, p_zero=float(g.uniform(0, 1)))
    p, _ = _tables(m)
    lp = log_transform(p).amounts
    # zero pattern is unchanged: log1p maps 0 to 0 and positives to positives
    assert np.array_equal(m == 0, lp == 0)
    assert row_sparsity(m, 1e-300) == row_sparsity(lp, 1e-300)
    assert np.array_equal(column_sparsity(m, 1e-300), column_sparsity(lp, 1e-300))


# --- split

def test_split_ten_rows():
    p, a = _tables(np.ones((10, 2)))
    (tp, ta), (sp, sa) = train_test_split(p, a, PreprocessConfig(seed=1))
    assert len(tp) == 8 and len(sp) == 2
    assert set(tp.client_ids).isdisjoint(sp.client_ids)
    assert set(tp.client_ids) | set(sp.client_ids) == set(p.client_ids)
    assert tp.client_ids == ta.client_ids and sp.client_ids == sa.client_ids


def test_split_same_seed_identical():
    p, a = _tables(np.arange(40.0).reshape(20, 2))
    x = train_test_split(p, a, PreprocessConfig(seed=7))
    y = train_test_split(p, a, PreprocessConfig(seed=7))
    assert x[0][0].client_ids == y[0][0].client_ids


@pytest.mark.parametrize("seed", range(20))
def test_split_partition_for_seeds(seed):
    g = np.random.default_rng(seed)
    p, a = _tables(_sparse_amounts(g, 97, 3))
    (tp, ta), (sp, sa) = train_test_split(p, a, PreprocessConfig(seed=seed))
    tr, te = set(tp.client_ids), set(sp.client_ids)
    assert not tr & te and tr | te == set(p.client_ids)
    assert len(tp) == round(0.8 * 97)
    # profile and aux rows move together
    rows = {c: i for i, c in enumerate(p.client_ids)}
    for table, aux in ((tp, ta), (sp, sa)):
        idx = [rows[c] for c in table.client_ids]
        assert np.array_equal(table.amounts, p.amounts[idx]) and np.array_equal(aux.values, a.values[idx])


def test_split_membership_frequency_monte_carlo():
    p, a = _tables(np.ones((1000, 1)))
    hits = np.zeros(1000)
    for seed in range(100):
        (tp, _), _ = train_test_split(p, a, PreprocessConfig(split_fraction=0.5, seed=seed))
        hits[[int(c[1:]) for c in tp.client_ids]] += 1
    freq = hits / 100
    assert abs(freq.mean() - 0.5) < 1e-12
    # per row, a Binomial(100, 0.5) count lands within 50 +- 5 with probability ~0.73
    assert np.mean(np.abs(freq - 0.5) <= 0.05) > 0.65
    assert abs(np.median(freq) - 0.5) <= 0.05


def test_split_needs_two_rows():
    p, a = _tables([[1.0]])
    with pytest.raises(UsageError):
        train_test_split(p, a, PreprocessConfig())


def test_split_sizes_round_half_up_and_clamped():
    assert split_sizes(10, 0.8) == (8, 2)
    assert split_sizes(5, 0.5) == (3, 2)
    assert split_sizes(2, 0.99) == (1, 1)


@pytest.mark.parametrize("kw", [{"split_fraction": 1.0}, {"split_fraction": 0.0}, {"activity_threshold": -1.0}])
def test_preprocess_config_validation(kw):
    with pytest.raises(ValidationError):
        PreprocessConfig(**kw)


# --- CSV

def test_profiles_csv_round_trip_bit_exact(tmp_path, np_rng):
    p, a = _tables(_sparse_amounts(np_rng, 50, 5) * np.pi)
    save_profiles_csv(p, tmp_path / "p.csv")
    save_aux_csv(a, tmp_path / "a.csv")
    q = load_profiles_csv(tmp_path / "p.csv")
    b = load_aux_csv(tmp_path / "a.csv")
    assert q.client_ids == p.client_ids and q.categories == p.categories
    assert np.array_equal(q.amounts, p.amounts)
    assert np.array_equal(b.values, a.values)


def test_profiles_csv_header_schema(tmp_path):
    p, a = _tables([[1.5, 0.0]])
    save_profiles_csv(p, tmp_path / "p.csv")
    save_aux_csv(a, tmp_path / "a.csv")
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == "client_id,k0,k1"
    assert (tmp_path / "a.csv").read_text().splitlines()[0] == "client_id,age,salary,credit_limit,balance,last_repayment"


def _write(tmp_path, text):
    path = tmp_path / "in.csv"
    path.write_text(text)
    return path


def test_csv_negative_amount_names_location(tmp_path):
    path = _write(tmp_path, "client_id,a,b\nx,1,2\ny,3,-4\n")
    with pytest.raises(ParseError) as e:
        load_profiles_csv(path)
    assert e.value.line == 3 and e.value.column == "b"


def test_csv_unknown_extra_column_listed(tmp_path):
    header = ",".join(["client_id", *DEFAULT_CATEGORIES, "9998_mystery"])
    path = _write(tmp_path, header + "\n" + ",".join(["x"] + ["0"] * 27) + "\n")
    with pytest.raises(ParseError, match="9998_mystery"):
        load_profiles_csv(path, categories=DEFAULT_CATEGORIES)


@pytest.mark.parametrize("text,line", [
    ("", 1),
    ("id,a\nx,1\n", 1),
    ("client_id,a\nx,abc\n", 2),
    ("client_id,a\nx,1\nx,2\n", 3),
    ("client_id,a\nx,1,2\n", 2),
    ("client_id,a\nx,nan\n", 2),
])
def test_csv_parse_errors_have_line(tmp_path, text, line):
    with pytest.raises(ParseError) as e:
        load_profiles_csv(_write(tmp_path, text))
    assert e.value.line == line


def test_aux_csv_rejects_nonpositive_age(tmp_path):
    path = _write(tmp_path, "client_id,age,salary,credit_limit,balance,last_repayment\nx,0,1,1,1,1\n")
    with pytest.raises(ParseError, match="age"):
        load_aux_csv(path)


def test_profile_table_invariants():
    with pytest.raises(ShapeError):
        ProfileTable(("a", "b"), ("x",), np.zeros((3, 1)))
    with pytest.raises(ValueError):
        ProfileTable(("a",), ("x",), np.array([[-1.0]]))
    with pytest.raises(UsageError):
        ProfileTable(("a",), ("x",), np.zeros((1, 1)), "cents")


# --- aux scaling and metadata

def test_aux_scaler_standardizes_train(np_rng):
    _, a = _tables(np.ones((200, 1)), seed=3)
    sc = AuxScaler.fit(a)
    z = sc.transform(a)
    assert z.standardized
    np.testing.assert_allclose(z.values.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(z.values.std(axis=0), 1.0, rtol=1e-12)
    with pytest.raises(UsageError):
        sc.transform(z)


def test_metadata_round_trip_exact(np_rng):
    _, a = _tables(np.ones((30, 1)), seed=4)
    meta = PreprocessMetadata(("a", "b"), 100.0, 0.8, 12345678901234, AuxScaler.fit(a), ("b",), 24, 6)
    import json
    back = PreprocessMetadata.from_dict(json.loads(json.dumps(meta.to_dict())))
    assert back.categories == meta.categories and back.split_seed == meta.split_seed
    assert np.array_equal(back.aux_scaler.mean, meta.aux_scaler.mean)
    assert np.array_equal(back.aux_scaler.std, meta.aux_scaler.std)
    bad = meta.to_dict() | {"transform": "log"}
    with pytest.raises(ValidationError):
        PreprocessMetadata.from_dict(bad)
