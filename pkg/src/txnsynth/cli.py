"""Command line pipeline: simulate -> preprocess -> train -> generate -> evaluate.

Every stage reads and writes plain files, so any stage can be rerun on its own.
Exit codes: 0 success, 1 I/O or unexpected failure, 2 invalid configuration or
usage, 3 unparseable input file, 4 training diverged.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig, load_insights, load_run_config
from .core import RngStream
from .data import (
    AuxScaler,
    PreprocessMetadata,
    ProfileTable,
    filter_active_clients,
    inverse_log_values,
    load_aux_csv,
    load_profiles_csv,
    log_transform,
    save_aux_csv,
    save_profiles_csv,
    simulate_population,
    train_test_split,
)
from .errors import ShapeError, TxnSynthError, UsageError, ValidationError
from .metrics import PairingSpec, build_report, most_common_categories, row_sparsity
from .models import (
    ModelBundle,
    gan_generate,
    load_bundle,
    save_bundle,
    train_gan,
    train_vae,
    vae_generate_from_data,
    vae_generate_from_noise,
)
from .report import render_combined, render_text, write_combined_csv, write_report_csv

MODES = ("from-data", "from-noise", "conditional")
SETTINGS = (("vae-from-data", "vae", "from-data"), ("vae-from-noise", "vae", "from-noise"),
            ("cgan", "cgan", "conditional"), ("wcgan", "wcgan", "conditional"))
MANIFEST_FORMAT = "txnsynth-manifest"

PROFILES, AUX = "profiles.csv", "aux.csv"
TRAIN_PROFILES, TRAIN_AUX = "train_profiles.csv", "train_aux.csv"
TEST_PROFILES, TEST_AUX = "test_profiles.csv", "test_aux.csv"
METADATA = "metadata.json"
BUNDLE, TRACE = "bundle.json", "loss_trace.csv"
SYNTHETIC, MANIFEST = "synthetic_profiles.csv", "manifest.json"
REPORT_TXT, REPORT_CSV = "report.txt", "report.csv"
TABLE_TXT, TABLE_CSV = "table1.txt", "table1.csv"


def _out_dir(out) -> Path:
    p = Path(out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def _read_json(path) -> dict:
    from .errors import ParseError

    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, str(path), e.lineno, e.colno) from None


def load_metadata(path) -> PreprocessMetadata:
    return PreprocessMetadata.from_dict(_read_json(path))


# ---------------------------------------------------------------- stages


def cmd_simulate(cfg: RunConfig, out) -> tuple[Path, Path]:
    out = _out_dir(out)
    profiles, aux = simulate_population(cfg.simulator)
    save_profiles_csv(profiles, out / PROFILES)
    save_aux_csv(aux, out / AUX)
    print(f"simulated {len(profiles)} clients x {len(profiles.categories)} categories; "
          f"mean row sparsity {row_sparsity(profiles.amounts):.4f}")
    return out / PROFILES, out / AUX


def cmd_preprocess(cfg: RunConfig, profiles_path, aux_path, out) -> Path:
    out = _out_dir(out)
    profiles = load_profiles_csv(profiles_path)
    aux = load_aux_csv(aux_path)
    pc = cfg.preprocess
    p, a = filter_active_clients(profiles, aux, pc)
    (p_tr, a_tr), (p_te, a_te) = train_test_split(p, a, pc)
    meta = PreprocessMetadata(
        categories=p.categories,
        activity_threshold=pc.activity_threshold,
        split_fraction=pc.split_fraction,
        split_seed=pc.seed,
        aux_scaler=AuxScaler.fit(a_tr),
        common_categories=most_common_categories(p_tr, 20),
        n_train=len(p_tr),
        n_test=len(p_te),
    )
    save_profiles_csv(log_transform(p_tr), out / TRAIN_PROFILES)
    save_profiles_csv(log_transform(p_te), out / TEST_PROFILES)
    save_aux_csv(a_tr, out / TRAIN_AUX)
    save_aux_csv(a_te, out / TEST_AUX)
    _dump_json(meta.to_dict(), out / METADATA)
    print(f"kept {len(p)} of {len(profiles)} clients (total spend > ${pc.activity_threshold:g}); "
          f"train {len(p_tr)}, test {len(p_te)}")
    return out


def _write_trace(trace, path) -> None:
    keys = list(trace[0].keys())
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for row in trace:
            w.writerow([row[k] if k == "epoch" else repr(float(row[k])) for k in keys])


def cmd_train(cfg: RunConfig, variant: str, data_dir, out) -> Path:
    data_dir, out = Path(data_dir), _out_dir(out)
    meta = load_metadata(data_dir / METADATA)
    tc = cfg.train_config(variant)
    profiles = load_profiles_csv(data_dir / TRAIN_PROFILES, categories=meta.categories, space="log")
    if variant == "vae":
        model, trace = train_vae(profiles.amounts, tc, arch=cfg.arch.get(variant))
    else:
        aux = load_aux_csv(data_dir / TRAIN_AUX)
        if aux.client_ids != profiles.client_ids:
            raise ValidationError("train profile and aux files list different clients", ["client_id"])
        model, trace = train_gan(profiles.amounts, meta.aux_scaler.transform(aux).values, tc, variant,
                                 arch=cfg.arch.get(variant))
    save_bundle(ModelBundle(model, meta, tc, cfg.snap_below_dollars), out / BUNDLE)
    _write_trace(trace, out / TRACE)
    last = trace[-1]
    summary = ", ".join(f"{k} {v:.4f}" for k, v in last.items() if k != "epoch")
    print(f"trained {variant} for {tc.epochs} epochs{' with DP' if tc.dp.enabled else ''}: {summary}")
    return out / BUNDLE


def cmd_generate(bundle_path, mode: str, data_dir, out, seed: int, n: int | None = None) -> Path:
    if mode not in MODES:
        raise UsageError(f"unknown mode {mode!r}; expected one of {', '.join(MODES)}")
    bundle = load_bundle(bundle_path)
    variant = bundle.variant
    if (mode == "conditional") != (variant != "vae"):
        needs = "a cgan or wcgan bundle" if mode == "conditional" else "a vae bundle"
        raise UsageError(f"mode {mode!r} needs {needs}, but {bundle_path} holds a {variant!r} model")
    data_dir, out = Path(data_dir), _out_dir(out)
    meta = bundle.preprocessing
    rng = RngStream(seed).child("generate")
    snap = float(np.log1p(bundle.snap_below_dollars))
    if mode == "from-noise":
        rows = meta.n_test if n is None else int(n)
        if rows < 1:
            raise UsageError("from-noise generation needs n >= 1")
        y = vae_generate_from_noise(bundle.model, rows, rng, snap)
        ids = tuple(f"s{i:06d}" for i in range(rows))
        pairing, source = "pairing-arbitrary", None
    elif mode == "from-data":
        real = load_profiles_csv(data_dir / TEST_PROFILES, categories=meta.categories, space="log")
        y = vae_generate_from_data(bundle.model, real.amounts, rng, snap)
        ids, pairing, source = real.client_ids, "index_aligned", TEST_PROFILES
    else:
        aux = load_aux_csv(data_dir / TEST_AUX)
        y = gan_generate(bundle.model, meta.aux_scaler.transform(aux).values, rng, snap)
        ids, pairing, source = aux.client_ids, "index_aligned", TEST_AUX
    syn = ProfileTable(ids, meta.categories, inverse_log_values(y), "dollars")
    save_profiles_csv(syn, out / SYNTHETIC)
    _dump_json({
        "format": MANIFEST_FORMAT,
        "version": 1,
        "mode": mode,
        "variant": variant,
        "pairing": pairing,
        "seed": int(seed),
        "rows": len(syn),
        "source": source,
        "snap_below_dollars": bundle.snap_below_dollars,
    }, out / MANIFEST)
    print(f"generated {len(syn)} {variant} profiles ({mode}, pairing {pairing})")
    return out / SYNTHETIC


def _setting_name(manifest: dict) -> str:
    if manifest["variant"] == "vae":
        return f"vae {manifest['mode'].replace('-', ' ')}"
    return manifest["variant"]


def cmd_evaluate(cfg: RunConfig, data_dir, synthetic_path, manifest_path, out, insights=None, *, verbose=True):
    data_dir, out = Path(data_dir), _out_dir(out)
    meta = load_metadata(data_dir / METADATA)
    real = load_profiles_csv(data_dir / TEST_PROFILES, categories=meta.categories, space="log")
    syn = load_profiles_csv(synthetic_path)
    if syn.categories != real.categories:
        missing = [c for c in real.categories if c not in syn.categories]
        extra = [c for c in syn.categories if c not in real.categories]
        raise ValidationError("synthetic columns do not match the real test columns",
                              missing + extra if missing or extra else list(syn.categories))
    manifest = _read_json(manifest_path)
    if manifest.get("format") != MANIFEST_FORMAT:
        raise ValidationError("not a generation manifest", ["format"])
    if len(syn) != len(real):
        raise ShapeError(f"synthetic file has {len(syn)} rows, real test set {len(real)}; "
                         "paired metrics need equal counts")
    if manifest["pairing"] == "pairing-arbitrary":
        # nothing ties a noise-decoded row to a client: pair against a seeded shuffle
        perm = RngStream(int(manifest["seed"])).child("pairing").generator.permutation(len(real))
        real = real.take(perm)
        pairing = PairingSpec("index_aligned", "pairing-arbitrary: shuffled test rows")
    else:
        if syn.client_ids != real.client_ids:
            raise ValidationError("index-aligned synthetic rows must list the test clients in order",
                                  ["client_id"])
        pairing = PairingSpec("index_aligned")
    specs = cfg.insights if insights is None else tuple(load_insights(insights))
    report = build_report(
        real, syn, None, pairing, specs, meta.common_categories,
        model_name=_setting_name(manifest),
        wasserstein_space=cfg.wasserstein_space,
        sparsity_tolerance=cfg.sparsity_tolerance,
    )
    text = render_text(report)
    (out / REPORT_TXT).write_text(text, encoding="utf-8")
    write_report_csv(report, out / REPORT_CSV)
    if verbose:
        print(text, end="")
    else:
        print(f"evaluated {report.model_name}: sparsity {'yes' if report.sparsity_verdict else 'no'}, "
              f"wasserstein {report.avg_wasserstein:.4f}, cosine {report.avg_cosine_distance:.4f}")
    return report


@dataclass
class RunAllResult:
    out: Path
    reports: list


def cmd_run_all(cfg: RunConfig, out) -> RunAllResult:
    """Every stage for the four settings, then the combined table.

    Layout under ``out``: ``simulated/``, ``preprocessed/``, ``models/<variant>/``,
    ``settings/<setting>/`` and ``table1.txt`` / ``table1.csv``.
    """
    out = _out_dir(out)

    def stage(name, fn, *args, **kw):
        try:
            return fn(*args, **kw)
        except TxnSynthError as e:
            e.args = (f"stage {name}: {e.args[0] if e.args else e}",) + e.args[1:]
            raise
        except OSError as e:
            raise OSError(f"stage {name}: {e}") from e

    profiles, aux = stage("simulate", cmd_simulate, cfg, out / "simulated")
    prep = stage("preprocess", cmd_preprocess, cfg, profiles, aux, out / "preprocessed")
    bundles = {}
    for variant in ("vae", "cgan", "wcgan"):
        bundles[variant] = stage(f"train {variant}", cmd_train, cfg, variant, prep, out / "models" / variant)
    reports = []
    for setting, variant, mode in SETTINGS:
        sdir = out / "settings" / setting
        syn = stage(f"generate {setting}", cmd_generate, bundles[variant], mode, prep, sdir,
                    cfg.generation_seed(setting))
        reports.append(stage(f"evaluate {setting}", cmd_evaluate, cfg, prep, syn, sdir / MANIFEST, sdir,
                             verbose=False))
    text = render_combined(reports)
    (out / TABLE_TXT).write_text(text, encoding="utf-8")
    write_combined_csv(reports, out / TABLE_CSV)
    print(text, end="")
    return RunAllResult(out, reports)


# ---------------------------------------------------------------- argument parsing


def _common(p: argparse.ArgumentParser, out_required=True):
    p.add_argument("--config", help="INI run configuration")
    p.add_argument("--seed", type=int, help="global seed (unsigned 64-bit)")
    p.add_argument("--out", required=out_required, help="output directory")


def _dp_flags(p: argparse.ArgumentParser):
    p.add_argument("--dp", action="store_true", help="DP-SGD on the targeted networks")
    p.add_argument("--clip-norm", type=float, help="per-example clip norm C (default 1)")
    p.add_argument("--noise-multiplier", type=float, help="noise multiplier sigma (default 1)")
    p.add_argument("--epochs", type=int, help="override training epochs")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="txnsynth", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a population from the simulator")
    _common(p)

    p = sub.add_parser("preprocess", help="filter, log-transform and split")
    _common(p)
    p.add_argument("--in", dest="in_dir", help="directory holding profiles.csv and aux.csv")
    p.add_argument("--profiles")
    p.add_argument("--aux")

    p = sub.add_parser("train", help="train one model variant")
    _common(p)
    p.add_argument("--model", required=True, choices=("vae", "cgan", "wcgan"))
    p.add_argument("--data", required=True, help="preprocess output directory")
    _dp_flags(p)

    p = sub.add_parser("generate", help="generate synthetic profiles from a bundle")
    _common(p)
    p.add_argument("--model", required=True, help="bundle file (or a train output directory)")
    p.add_argument("--mode", required=True, choices=MODES)
    p.add_argument("--data", required=True, help="preprocess output directory")
    p.add_argument("--n", type=int, help="rows for from-noise mode (default: test size)")

    p = sub.add_parser("evaluate", help="score synthetic profiles against the test split")
    _common(p)
    p.add_argument("--data", required=True, help="preprocess output directory")
    p.add_argument("--synthetic", required=True, help="synthetic CSV (or a generate output directory)")
    p.add_argument("--manifest", help="generation manifest (default: next to the synthetic CSV)")
    p.add_argument("--insights", help="insight spec file")

    p = sub.add_parser("run-all", help="every stage for all four settings")
    _common(p)
    _dp_flags(p)
    return ap


def _resolve(path, default_name) -> Path:
    p = Path(path)
    return p / default_name if p.is_dir() else p


def _dispatch(args) -> None:
    dp = {}
    train = {}
    if getattr(args, "dp", False):
        dp["enabled"] = True
    if getattr(args, "clip_norm", None) is not None:
        dp["clip_norm"] = args.clip_norm
    if getattr(args, "noise_multiplier", None) is not None:
        dp["noise_multiplier"] = args.noise_multiplier
    if getattr(args, "epochs", None) is not None:
        train["epochs"] = args.epochs
    cfg = load_run_config(args.config, seed=args.seed, dp_overrides=dp, train_overrides=train)

    if args.command == "simulate":
        cmd_simulate(cfg, args.out)
    elif args.command == "preprocess":
        if args.in_dir is None and (args.profiles is None or args.aux is None):
            raise UsageError("preprocess needs --in DIR or both --profiles and --aux")
        base = Path(args.in_dir) if args.in_dir else None
        cmd_preprocess(cfg, args.profiles or base / PROFILES, args.aux or base / AUX, args.out)
    elif args.command == "train":
        cmd_train(cfg, args.model, args.data, args.out)
    elif args.command == "generate":
        seed = cfg.generation_seed(args.mode) if args.seed is None else args.seed
        cmd_generate(_resolve(args.model, BUNDLE), args.mode, args.data, args.out, seed, args.n)
    elif args.command == "evaluate":
        syn = _resolve(args.synthetic, SYNTHETIC)
        manifest = Path(args.manifest) if args.manifest else syn.parent / MANIFEST
        cmd_evaluate(cfg, args.data, syn, manifest, args.out, args.insights)
    elif args.command == "run-all":
        cmd_run_all(cfg, args.out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _dispatch(args)
    except TxnSynthError as e:
        print(f"txnsynth {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"txnsynth {args.command}: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
