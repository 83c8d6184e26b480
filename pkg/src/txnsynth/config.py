"""Run configuration: one INI file covering every pipeline stage.

Sections and keys mirror the dataclass fields they feed::

    [run]         seed, snap_below_dollars, wasserstein_space, sparsity_tolerance, insights
    [simulator]   any SimulatorConfig field
    [preprocess]  activity_threshold, split_fraction, seed
    [train]       TrainConfig fields applied to every variant
    [train.vae] / [train.cgan] / [train.wcgan]   per-variant overrides
    [dp]          clip_norm, noise_multiplier, enabled, apply_to
    [model.vae]   hidden, latent_dim, activation
    [model.cgan] / [model.wcgan]   noise_dim, gen_hidden, critic_hidden, clip_value

Vectors are comma separated; matrices separate rows with ``;``. ``insights``
names an insight spec file (relative paths resolve against the config file).

Stage seeds that are not set explicitly are derived from the global seed with
:func:`stage_seed`, so one ``--seed`` reproduces a whole run.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import RngStream
from .data.preprocess import PreprocessConfig
from .data.simulator import SimulatorConfig
from .errors import ParseError, ValidationError
from .metrics import DEFAULT_INSIGHTS, DEFAULT_SPARSITY_TOLERANCE, InsightSpec
from .models import DEFAULT_SNAP_DOLLARS
from .models.config import VARIANTS, TrainConfig
from .optim import DpConfig

SECTIONS = (("run", "simulator", "preprocess", "train", "dp")
            + tuple(f"train.{v}" for v in VARIANTS) + tuple(f"model.{v}" for v in VARIANTS))
# architecture keys and how to parse them
_ARCH_KEYS = {
    "vae": {"hidden": "ints", "latent_dim": "int", "activation": "str"},
    "cgan": {"noise_dim": "int", "gen_hidden": "ints", "critic_hidden": "ints", "clip_value": "float"},
}
_ARCH_KEYS["wcgan"] = _ARCH_KEYS["cgan"]
_RUN_KEYS = ("seed", "snap_below_dollars", "wasserstein_space", "sparsity_tolerance", "insights")


def stage_seed(global_seed: int, stage: str) -> int:
    """64-bit seed for a named stage: the first two 32-bit words of the stage's
    child SeedSequence (see :class:`RngStream`), low word first."""
    stream = RngStream(global_seed).child(stage)
    ss = np.random.SeedSequence(global_seed, spawn_key=stream.path)
    lo, hi = (int(w) for w in ss.generate_state(2, np.uint32))
    return lo | (hi << 32)


def parse_insights(text: str, path=None) -> list[InsightSpec]:
    """One insight per line: ``name, cat1|cat2|..., threshold_dollars``.
    Blank lines and lines starting with ``#`` are skipped."""
    specs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3:
            raise ParseError(f"expected 'name, categories, threshold', got {len(parts)} fields", path, lineno)
        name, cats, thr = parts
        try:
            threshold = float(thr)
        except ValueError:
            raise ParseError(f"threshold {thr!r} is not a number", path, lineno, "threshold") from None
        categories = tuple(c.strip() for c in cats.split("|") if c.strip())
        if not name or not categories:
            raise ParseError("insight needs a name and at least one category", path, lineno)
        try:
            specs.append(InsightSpec(name, categories, threshold))
        except ValidationError as e:
            raise ParseError(str(e), path, lineno) from None
    return specs


def load_insights(path) -> list[InsightSpec]:
    return parse_insights(Path(path).read_text(encoding="utf-8"), path)


def _parse_value(raw: str, current, section: str, key: str):
    raw = raw.strip()
    try:
        if isinstance(current, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        if isinstance(current, str):
            return raw
        if isinstance(current, tuple):
            return tuple(s.strip() for s in raw.split(",") if s.strip())
        # vectors and matrices
        rows = [r for r in raw.split(";") if r.strip()]
        vals = [[float(x) for x in r.split(",")] for r in rows]
        return np.array(vals[0] if len(vals) == 1 and ";" not in raw else vals, dtype=np.float64)
    except ValueError:
        raise ValidationError(f"[{section}] {key} = {raw!r} could not be parsed", [f"{section}.{key}"]) from None


def _arch(variant: str, items) -> dict:
    spec = _ARCH_KEYS[variant]
    unknown = [k for k, _ in items if k not in spec]
    if unknown:
        raise ValidationError(f"unknown keys in [model.{variant}]", [f"model.{variant}.{k}" for k in unknown])
    out = {}
    for k, raw in items:
        kind = spec[k]
        try:
            if kind == "ints":
                out[k] = tuple(int(x) for x in raw.split(",") if x.strip())
                if not out[k] or min(out[k]) < 1:
                    raise ValueError(raw)
            elif kind == "int":
                out[k] = int(raw)
            elif kind == "float":
                out[k] = float(raw)
            else:
                out[k] = raw.strip()
        except ValueError:
            raise ValidationError(f"[model.{variant}] {k} = {raw!r} could not be parsed",
                                  [f"model.{variant}.{k}"]) from None
    return out


def _apply(obj_cls, base_kwargs: dict, items, section: str, template):
    names = {f.name for f in dataclasses.fields(obj_cls)}
    out = dict(base_kwargs)
    unknown = [k for k, _ in items if k not in names]
    if unknown:
        raise ValidationError(f"unknown keys in [{section}]", [f"{section}.{k}" for k in unknown])
    for k, raw in items:
        cur = getattr(template, k)
        if isinstance(cur, np.ndarray) or cur is None:
            cur = np.zeros(0)
        out[k] = _parse_value(raw, cur, section, k)
    return out


@dataclass
class RunConfig:
    seed: int = 0
    simulator: SimulatorConfig = field(default_factory=SimulatorConfig)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    train: dict = field(default_factory=dict)  # variant -> TrainConfig
    arch: dict = field(default_factory=dict)  # variant -> builder keyword overrides
    snap_below_dollars: float = DEFAULT_SNAP_DOLLARS
    wasserstein_space: str = "log"
    sparsity_tolerance: float = DEFAULT_SPARSITY_TOLERANCE
    insights: tuple = DEFAULT_INSIGHTS
    source: str | None = None

    def train_config(self, variant: str) -> TrainConfig:
        if variant not in self.train:
            raise ValidationError(f"unknown model variant {variant!r}", ["model"])
        return self.train[variant]

    def generation_seed(self, setting: str) -> int:
        return stage_seed(self.seed, f"generate.{setting}")


def load_run_config(path=None, *, seed: int | None = None, dp_overrides: dict | None = None,
                    train_overrides: dict | None = None) -> RunConfig:
    """Build a :class:`RunConfig` from an optional INI file plus CLI overrides.

    ``seed`` replaces ``[run] seed``; DP and training overrides win over the file.
    """
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                cp.read_file(fh)
        except configparser.Error as e:
            line = getattr(e, "lineno", None)
            raise ParseError(f"config file: {e.message if hasattr(e, 'message') else e}", str(path), line) from None
    unknown = [s for s in cp.sections() if s not in SECTIONS]
    if unknown:
        raise ValidationError("unknown config sections", unknown)

    def items(section):
        return list(cp.items(section)) if cp.has_section(section) else []

    run = dict(items("run"))
    bad_run = [k for k in run if k not in _RUN_KEYS]
    if bad_run:
        raise ValidationError("unknown keys in [run]", [f"run.{k}" for k in bad_run])
    global_seed = int(run.get("seed", 0)) if seed is None else int(seed)
    if not 0 <= global_seed < 2**64:
        raise ValidationError("seed must be an unsigned 64-bit integer", ["seed"])

    sim_template = SimulatorConfig(n_clients=1)
    sim_kwargs = _apply(SimulatorConfig, {"seed": stage_seed(global_seed, "simulate")},
                        items("simulator"), "simulator", sim_template)
    simulator = SimulatorConfig(**sim_kwargs)

    pre_kwargs = _apply(PreprocessConfig, {"seed": stage_seed(global_seed, "split")},
                        items("preprocess"), "preprocess", PreprocessConfig())
    preprocess = PreprocessConfig(**pre_kwargs)

    dp_kwargs = _apply(DpConfig, {}, items("dp"), "dp", DpConfig())
    dp_kwargs.update(dp_overrides or {})
    dp = DpConfig(**dp_kwargs)

    train_template = TrainConfig()
    common = _apply(TrainConfig, {}, [kv for kv in items("train") if kv[0] != "dp"], "train", train_template)
    train = {}
    for v in VARIANTS:
        kw = {"seed": stage_seed(global_seed, f"train.{v}")}
        kw.update(common)
        kw = _apply(TrainConfig, kw, items(f"train.{v}"), f"train.{v}", train_template)
        kw.update(train_overrides or {})
        kw["dp"] = dp
        train[v] = TrainConfig.default_for(v, **kw)

    insights = DEFAULT_INSIGHTS
    if "insights" in run:
        ipath = Path(run["insights"])
        if not ipath.is_absolute() and path is not None:
            ipath = Path(path).parent / ipath
        insights = tuple(load_insights(ipath))
    ws = run.get("wasserstein_space", "log")
    if ws not in ("log", "dollars"):
        raise ValidationError("wasserstein_space must be 'log' or 'dollars'", ["run.wasserstein_space"])
    cfg = RunConfig(
        seed=global_seed,
        simulator=simulator,
        preprocess=preprocess,
        train=train,
        arch={v: _arch(v, items(f"model.{v}")) for v in VARIANTS},
        snap_below_dollars=float(run.get("snap_below_dollars", DEFAULT_SNAP_DOLLARS)),
        wasserstein_space=ws,
        sparsity_tolerance=float(run.get("sparsity_tolerance", DEFAULT_SPARSITY_TOLERANCE)),
        insights=insights,
        source=None if path is None else str(path),
    )
    if not cfg.snap_below_dollars >= 0:
        raise ValidationError("snap_below_dollars must be >= 0", ["run.snap_below_dollars"])
    return cfg
