"""Batch pipeline steps: synth, split, extract, train, eval, importance, report.

Every step reads and writes fixed file names inside one run directory and
records its inputs (with sha256), seeds and the tool version in
``run_manifest.json``. Nothing time-dependent is written, so rerunning a
step with the same configuration reproduces its files byte for byte.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import os
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import (
    DatasetSplit,
    build_profiles,
    parse_corpus,
    parse_references,
    serialize_corpus,
    serialize_profiles,
    serialize_references,
    stratified_split,
)
from .embeddings import make_provider
from .features import (
    FeatureConfig,
    FeatureManifest,
    default_manifest,
    extract_all,
    matrix_from_csv,
    matrix_to_csv,
    to_matrix,
)
from .forest import ForestConfig, ForestModel, ModelError, evaluate, permutation_importance, train
from .pronunciation import DEFAULT_FILLERS
from . import synth

log = logging.getLogger(__name__)

CONFIG_ENV = "SRFEAT_CONFIG"

DEFAULT_CONFIG: dict = {
    "corpus": None,
    "references": None,
    "output_dir": "runs",
    "run_dir": None,
    "split": {"ratios": [0.8, 0.1, 0.1], "seed": 0},
    "profile_source": "train",
    "features": {
        "fillers": list(DEFAULT_FILLERS),
        "top_fraction": 0.3,
        "ratio_cap": 1e6,
        "workers": 1,
    },
    "embeddings": {"provider": "fallback", "dimension": 256, "path": None, "url": None, "timeout": 10.0,
                   "retries": 2},
    "classifier": {"n_trees": 300, "max_depth": 12, "min_leaf": 2, "max_features": 1 / 3,
                   "class_weight": True, "seed": 0},
    "evaluation": {"subset": "test"},
    "importance": {"repeats": 5, "seed": 0, "subset": "test", "top": 5},
    "synth": {"n_utterances": 540, "seed": 0, "mode": "realistic"},
}

CORPUS_FILE = "corpus.jsonl"
REFERENCES_FILE = "references.jsonl"
SPLIT_FILE = "split.json"
FEATURES_FILE = "features.csv"
MANIFEST_FILE = "manifest.jsonl"
PROFILES_FILE = "profiles.jsonl"
FLAGS_FILE = "extraction_flags.csv"
MODEL_FILE = "model.json"
EVAL_FILE = "eval_report.json"
CONFUSION_FILE = "confusion.txt"
IMPORTANCE_FILE = "importance.csv"
TOP_CSV_FILE = "importance_top5.csv"
TOP_SVG_FILE = "importance_top5.svg"
REPORT_FILE = "report.md"
RUN_MANIFEST = "run_manifest.json"


class ConfigError(ValueError):
    pass


class ExtractionFailed(ValueError):
    def __init__(self, errors):
        self.errors = errors
        first = errors[0]
        super().__init__(f"{len(errors)} utterance(s) failed extraction; first: {first[0]}: {first[1]}")


# -- configuration ------------------------------------------------------------

def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown configuration key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where!r} must be an object")
            out[key] = _merge(base[key], value, where + ".")
        else:
            out[key] = value
    return out


def set_dotted(config: dict, dotted: str, value) -> None:
    node = config
    parts = dotted.split(".")
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise ConfigError(f"unknown configuration key {dotted!r}")
        node = node[p]
    if parts[-1] not in node:
        raise ConfigError(f"unknown configuration key {dotted!r}")
    node[parts[-1]] = value


def load_config(path: str | os.PathLike | None = None, overrides: dict | None = None) -> dict:
    """Defaults, then the JSON config file, then ``overrides`` (dotted keys)."""
    config = copy.deepcopy(DEFAULT_CONFIG)
    path = path or os.environ.get(CONFIG_ENV)
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a key/value object")
        config = _merge(config, doc)
    for key, value in (overrides or {}).items():
        if value is not None:
            set_dotted(config, key, value)
    validate_config(config)
    return config


def validate_config(config: dict) -> None:
    ratios = config["split"]["ratios"]
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1) > 1e-9:
        raise ConfigError(f"split.ratios must be three non-negative numbers summing to 1, got {ratios}")
    if config["profile_source"] not in ("train", "all"):
        raise ConfigError("profile_source must be 'train' or 'all'")
    if config["embeddings"]["provider"] not in ("fallback", "file", "remote"):
        raise ConfigError("embeddings.provider must be fallback, file or remote")
    for section in ("evaluation", "importance"):
        if config[section]["subset"] not in ("train", "validation", "test"):
            raise ConfigError(f"{section}.subset must be train, validation or test")


def config_digest(config: dict) -> str:
    body = {k: v for k, v in config.items() if k not in ("output_dir", "run_dir")}
    return hashlib.sha256(json.dumps(body, sort_keys=True).encode("utf-8")).hexdigest()


def run_dir(config: dict) -> Path:
    if config.get("run_dir"):
        return Path(config["run_dir"])
    return Path(config["output_dir"]) / f"run-{config_digest(config)[:12]}"


def forest_config(config: dict) -> ForestConfig:
    c = config["classifier"]
    return ForestConfig(n_trees=c["n_trees"], max_depth=c["max_depth"], min_leaf=c["min_leaf"],
                        max_features=c["max_features"], class_weight=c["class_weight"])


def feature_config(config: dict) -> FeatureConfig:
    f = config["features"]
    return FeatureConfig(fillers=tuple(f["fillers"]), top_fraction=f["top_fraction"], ratio_cap=f["ratio_cap"])


# -- file helpers --------------------------------------------------------------

def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def _read(path: Path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise FileNotFoundError(f"required input not found: {path}") from None


def _record_step(rdir: Path, config: dict, step: str, inputs: list[Path], outputs: list[Path], seeds: dict):
    manifest_path = rdir / RUN_MANIFEST
    if manifest_path.exists():
        doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    else:
        doc = {"tool": "srfeat", "version": __version__, "steps": {}}
    doc["version"] = __version__
    doc["config"] = config
    doc["steps"][step] = {
        "inputs": {str(p): _sha256(Path(p)) for p in inputs},
        "outputs": sorted(Path(p).name for p in outputs),
        "seeds": seeds,
    }
    _write(manifest_path, json.dumps(doc, indent=1, sort_keys=True, ensure_ascii=False) + "\n")


def corpus_path(config: dict) -> Path:
    return Path(config["corpus"]) if config.get("corpus") else run_dir(config) / CORPUS_FILE


def references_path(config: dict) -> Path:
    return Path(config["references"]) if config.get("references") else run_dir(config) / REFERENCES_FILE


def load_split(rdir: Path) -> DatasetSplit:
    return DatasetSplit.from_json(_read(rdir / SPLIT_FILE))


def load_matrix(rdir: Path):
    manifest = FeatureManifest.from_jsonl(_read(rdir / MANIFEST_FILE))
    return matrix_from_csv(_read(rdir / FEATURES_FILE), manifest)


# -- steps -----------------------------------------------------------------------

def run_synth(config: dict) -> Path:
    rdir = run_dir(config)
    s = config["synth"]
    records, refs = synth.generate(s["n_utterances"], seed=s["seed"], mode=s["mode"])
    out_c = _write(corpus_path(config), serialize_corpus(records))
    out_r = _write(references_path(config), serialize_references(refs))
    log.info("synthesized %d utterances (%s mode) into %s", len(records), s["mode"], out_c)
    _record_step(rdir, config, "synth", [], [out_c, out_r], {"synth": s["seed"]})
    return rdir


def run_split(config: dict) -> DatasetSplit:
    rdir = run_dir(config)
    cpath = corpus_path(config)
    records = parse_corpus(_read(cpath))
    sp = config["split"]
    split = stratified_split(records, tuple(sp["ratios"]), sp["seed"])
    out = _write(rdir / SPLIT_FILE, split.to_json())
    log.info("split %d/%d/%d", len(split.train), len(split.validation), len(split.test))
    _record_step(rdir, config, "split", [cpath], [out], {"split": sp["seed"]})
    return split


def run_extract(config: dict) -> Path:
    rdir = run_dir(config)
    cpath, rpath = corpus_path(config), references_path(config)
    records = parse_corpus(_read(cpath))
    refs = parse_references(_read(rpath))
    unknown = sorted({r.sentence_id for r in records} - set(refs))
    if unknown:
        raise ConfigError(f"corpus reads sentences missing from the references file: {unknown}")

    inputs = [cpath, rpath]
    if config["profile_source"] == "train":
        if not (rdir / SPLIT_FILE).exists():
            run_split(config)
        split = load_split(rdir)
        inputs.append(rdir / SPLIT_FILE)
        train_ids = set(split.train)
        healthy_pool = [r for r in records if r.utterance_id in train_ids]
    else:
        healthy_pool = records
    profiles = build_profiles(healthy_pool, refs)

    e = config["embeddings"]
    provider = make_provider(e["provider"], dimension=e["dimension"], path=e["path"], url=e["url"],
                             timeout=e["timeout"], retries=e["retries"])
    fconf = feature_config(config)
    vectors, errors = extract_all(records, profiles, provider, fconf, workers=config["features"]["workers"])
    if errors:
        raise ExtractionFailed(errors)
    manifest = default_manifest(fconf, provider)
    matrix = to_matrix(vectors, manifest)
    outs = [
        _write(rdir / FEATURES_FILE, matrix_to_csv(matrix)),
        _write(rdir / MANIFEST_FILE, manifest.to_jsonl()),
        _write(rdir / PROFILES_FILE, serialize_profiles(profiles[k] for k in sorted(profiles))),
        _write(rdir / FLAGS_FILE, "utterance_id,speech_pause_ratio_capped\n"
               + "".join(f"{v.utterance_id},{int(v.ratio_capped)}\n" for v in vectors)),
    ]
    log.info("extracted %d x %d feature matrix", *matrix.values.shape)
    _record_step(rdir, config, "extract", inputs, outs, {"split": config["split"]["seed"]})
    return rdir / FEATURES_FILE


def _check_classes(labels: np.ndarray, subset: str):
    missing = sorted(set(range(3)) - set(labels.tolist()))
    if missing:
        raise ModelError(f"{subset} split lacks severity class(es) {missing}")


def run_train(config: dict) -> ForestModel:
    rdir = run_dir(config)
    matrix = load_matrix(rdir)
    split = load_split(rdir)
    tr = matrix.rows(split.train)
    _check_classes(tr.labels, "train")
    seed = config["classifier"]["seed"]
    model = train(tr.values, tr.labels, forest_config(config), seed, feature_names=matrix.manifest.names,
                  manifest_digest=matrix.manifest.digest())
    out = _write(rdir / MODEL_FILE, model.to_json())
    log.info("trained %d trees on %d rows", len(model.trees), tr.values.shape[0])
    _record_step(rdir, config, "train", [rdir / FEATURES_FILE, rdir / SPLIT_FILE], [out], {"classifier": seed})
    return model


def _load_model_for(rdir: Path, matrix) -> ForestModel:
    model = ForestModel.from_json(_read(rdir / MODEL_FILE))
    model.check_manifest(matrix.manifest.digest())
    return model


def run_eval(config: dict):
    rdir = run_dir(config)
    matrix = load_matrix(rdir)
    model = _load_model_for(rdir, matrix)
    subset = config["evaluation"]["subset"]
    part = matrix.rows(load_split(rdir).part(subset))
    _check_classes(part.labels, subset)
    report = evaluate(model.predict(part.values), part.labels)
    body = {"subset": subset, "n": int(part.labels.size), **report.to_dict()}
    outs = [
        _write(rdir / EVAL_FILE, json.dumps(body, indent=1) + "\n"),
        _write(rdir / CONFUSION_FILE, report.confusion_table()),
    ]
    log.info("%s accuracy %.4f, balanced accuracy %.4f", subset, report.accuracy, report.balanced_accuracy)
    _record_step(rdir, config, "eval", [rdir / FEATURES_FILE, rdir / SPLIT_FILE, rdir / MODEL_FILE], outs, {})
    return report


def top_svg(entries, width: int = 520, bar_height: int = 26) -> str:
    """Minimal static horizontal bar chart of (name, mean, std) entries."""
    label_w, pad = 190, 10
    height = pad * 2 + bar_height * len(entries)
    scale_max = max([e[1] for e in entries] + [1e-12])
    plot_w = width - label_w - 2 * pad - 60
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'font-family="sans-serif" font-size="12">']
    for k, (name, mean, _std) in enumerate(entries):
        y = pad + k * bar_height
        w = max(0.0, mean) / scale_max * plot_w
        parts.append(f'<text x="{label_w - 6}" y="{y + bar_height * 0.65:.1f}" text-anchor="end">{name}</text>')
        parts.append(f'<rect x="{label_w}" y="{y + 4}" width="{w:.1f}" height="{bar_height - 8}" fill="#4c72b0"/>')
        parts.append(f'<text x="{label_w + w + 4:.1f}" y="{y + bar_height * 0.65:.1f}">{mean:.4f}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def run_importance(config: dict):
    rdir = run_dir(config)
    matrix = load_matrix(rdir)
    model = _load_model_for(rdir, matrix)
    imp_cfg = config["importance"]
    part = matrix.rows(load_split(rdir).part(imp_cfg["subset"]))
    report = permutation_importance(model, part.values, part.labels, repeats=imp_cfg["repeats"],
                                    seed=imp_cfg["seed"], feature_names=matrix.manifest.names)
    top = report.entries[: imp_cfg["top"]]
    cat = dict(zip(matrix.manifest.names, matrix.manifest.categories))
    top_csv = "feature,category,importance_mean,importance_std\n" + "".join(
        f"{n},{cat[n]},{m:.12g},{s:.12g}\n" for n, m, s in top)
    outs = [
        _write(rdir / IMPORTANCE_FILE, report.to_csv()),
        _write(rdir / TOP_CSV_FILE, top_csv),
        _write(rdir / TOP_SVG_FILE, top_svg(top)),
    ]
    log.info("top features: %s", ", ".join(n for n, _, _ in top))
    _record_step(rdir, config, "importance", [rdir / FEATURES_FILE, rdir / SPLIT_FILE, rdir / MODEL_FILE], outs,
                 {"importance": imp_cfg["seed"]})
    return report


def run_report(config: dict) -> Path:
    """split -> extract -> train -> eval -> importance, then a markdown summary."""
    rdir = run_dir(config)
    if not corpus_path(config).exists():
        raise FileNotFoundError(f"corpus not found: {corpus_path(config)} (run `srfeat synth` or set corpus)")
    split = run_split(config)
    run_extract(config)
    model = run_train(config)
    report = run_eval(config)
    importance = run_importance(config)
    subset = config["evaluation"]["subset"]
    lines = [
        "# Severity classification run",
        "",
        f"- tool version: {__version__}",
        f"- config digest: {config_digest(config)[:12]}",
        f"- split sizes (train/validation/test): {len(split.train)}/{len(split.validation)}/{len(split.test)}",
        f"- trees: {len(model.trees)}, seed {model.seed}",
        "",
        f"## {subset.capitalize()} metrics",
        "",
        f"- accuracy: {100 * report.accuracy:.2f}%",
        f"- balanced accuracy: {100 * report.balanced_accuracy:.2f}%",
        "",
        "```",
        report.confusion_table().rstrip("\n"),
        "```",
        "",
        "## Permutation importance (top 10)",
        "",
        "| rank | feature | mean drop | std |",
        "|---:|---|---:|---:|",
    ]
    for rank, (name, mean, std) in enumerate(importance.entries[:10], start=1):
        lines.append(f"| {rank} | {name} | {mean:.4f} | {std:.4f} |")
    out = _write(rdir / REPORT_FILE, "\n".join(lines) + "\n")
    _record_step(rdir, config, "report", [rdir / EVAL_FILE, rdir / IMPORTANCE_FILE], [out], {})
    return out


def shuffled_labels(records, seed: int):
    """Records with severities permuted across the corpus (null control)."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(records))
    return [replace(r, severity=records[k].severity) for r, k in zip(records, perm)]
