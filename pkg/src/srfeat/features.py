"""Feature manifest, per-utterance extraction and matrix (CSV) assembly.

The manifest is the single source of truth for feature names and column
order; every extractor output must appear in it exactly once.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .corpus import ReferenceProfile, Severity, UtteranceRecord
from .embeddings import EmbeddingProvider
from .pronunciation import DEFAULT_FILLERS, bert_score, filler_similarity, max_repetition, syntactic_features
from .prosody import (
    DEFAULT_RATIO_CAP,
    DEFAULT_TOP_FRACTION,
    articulation_features,
    pause_duration_features,
    pause_location_features,
    pause_sequence,
    rhythm_features,
)

log = logging.getLogger(__name__)

PRONUNCIATION = "pronunciation"
PROSODY = "prosody"

# (name, category, note), in output order
FEATURE_SPECS: tuple[tuple[str, str, str], ...] = (
    ("insertion", PRONUNCIATION, "word insertions vs reference"),
    ("deletion", PRONUNCIATION, "word deletions vs reference"),
    ("substitution", PRONUNCIATION, "word substitutions vs reference"),
    ("wer", PRONUNCIATION, "(S+D+I)/(H+S+D)"),
    ("mer", PRONUNCIATION, "(S+D+I)/(H+S+D+I)"),
    ("wil", PRONUNCIATION, "1 - WIP"),
    ("wip", PRONUNCIATION, "H/(H+S+D) * H/(H+S+I)"),
    ("hits", PRONUNCIATION, "word hits vs reference"),
    ("bert_score_f1", PRONUNCIATION, "greedy token cosine F1, no IDF"),
    ("max_repetition", PRONUNCIATION, "longest single-character run within a word"),
    ("filler_similarity", PRONUNCIATION, "mean cosine of filler and hypothesis sentence embeddings"),
    ("pause_ins", PROSODY, "insertions on 0/1 pause sequence"),
    ("pause_del", PROSODY, "deletions on 0/1 pause sequence"),
    ("pause_sub", PROSODY, "substitutions on 0/1 pause sequence"),
    ("pause_cer", PROSODY, "error rate on 0/1 pause sequence"),
    ("pause_mer", PROSODY, "match error rate on 0/1 pause sequence"),
    ("pause_wil", PROSODY, "word information lost on 0/1 pause sequence"),
    ("pause_wip", PROSODY, "word information preserved on 0/1 pause sequence"),
    ("pause_hits", PROSODY, "hits on 0/1 pause sequence"),
    ("pause_dtw", PROSODY, "raw DTW distance between pause sequences (not length-normalized)"),
    ("pause_num", PROSODY, "number of pause tokens"),
    ("pause_sum", PROSODY, "sum of pause durations (s)"),
    ("pause_mean", PROSODY, "mean pause duration (s)"),
    ("pause_sd", PROSODY, "population sd of pause durations (s)"),
    ("pause_max", PROSODY, "longest pause (s)"),
    ("pause_min", PROSODY, "shortest pause (s)"),
    ("ws_dtw", PROSODY, "raw DTW distance to healthy duration sequence of the sentence"),
    ("ws_dur_sum", PROSODY, "sum of word durations / n segments"),
    ("ws_dur_mean", PROSODY, "mean word duration / n segments"),
    ("ws_dur_sd", PROSODY, "population sd of word durations / n segments"),
    ("ws_dur_max", PROSODY, "longest word segment (s)"),
    ("ws_dur_min", PROSODY, "shortest word segment (s)"),
    ("speech_pause_ratio", PROSODY, "speech time / pause time, capped when there are no pauses"),
    ("top30_short_ws", PROSODY, "mean of the k shortest word durations, k = max(1, round(f*n))"),
    ("top30_long_ws", PROSODY, "mean of the k longest word durations, k = max(1, round(f*n))"),
    ("abnormal_speed", PROSODY, "spoken time - healthy total for the sentence (s)"),
    ("speed_change_rate_mean", PROSODY, "mean of (d[i+1]-d[i])/d[i]"),
    ("sps", PROSODY, "syllables per second of articulation"),
    ("increasing_speed", PROSODY, "mean of positive relative changes, 0 if the mean change is negative"),
)

FEATURE_NAMES: tuple[str, ...] = tuple(name for name, _, _ in FEATURE_SPECS)


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureConfig:
    fillers: tuple[str, ...] = DEFAULT_FILLERS
    top_fraction: float = DEFAULT_TOP_FRACTION
    ratio_cap: float = DEFAULT_RATIO_CAP


@dataclass(frozen=True)
class FeatureManifest:
    names: tuple[str, ...]
    categories: tuple[str, ...]
    notes: tuple[str, ...]
    settings: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise FeatureError("duplicate feature names in manifest")
        if not (len(self.names) == len(self.categories) == len(self.notes)):
            raise FeatureError("manifest columns have different lengths")

    def __len__(self) -> int:
        return len(self.names)

    def digest(self) -> str:
        """Hash of the ordered names; models refuse matrices with another digest."""
        return hashlib.sha256("\n".join(self.names).encode("utf-8")).hexdigest()

    def subset(self, category: str) -> list[int]:
        return [k for k, c in enumerate(self.categories) if c == category]

    def to_jsonl(self) -> str:
        lines = [
            json.dumps({"name": n, "category": c, "note": t}, ensure_ascii=False, separators=(",", ":"))
            for n, c, t in zip(self.names, self.categories, self.notes)
        ]
        lines.append(json.dumps({"settings": dict(self.settings)}, ensure_ascii=False, sort_keys=True,
                                separators=(",", ":")))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> FeatureManifest:
        names, cats, notes, settings = [], [], [], {}
        for line in text.splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            if "settings" in obj:
                settings = obj["settings"]
                continue
            names.append(obj["name"])
            cats.append(obj["category"])
            notes.append(obj.get("note", ""))
        return cls(tuple(names), tuple(cats), tuple(notes), settings)


def default_manifest(config: FeatureConfig | None = None, provider: EmbeddingProvider | None = None) -> FeatureManifest:
    config = config or FeatureConfig()
    settings: dict[str, object] = {
        "fillers": list(config.fillers),
        "filler_aggregation": "mean",
        "top_fraction": config.top_fraction,
        "ratio_cap": config.ratio_cap,
        "sd": "population",
        "dtw": "absolute difference, no window, no length normalization",
        "max_repetition": "character runs within whitespace-delimited words",
        "bert_score_idf": False,
    }
    if provider is not None:
        settings["embeddings"] = provider.describe()
    return FeatureManifest(
        names=FEATURE_NAMES,
        categories=tuple(c for _, c, _ in FEATURE_SPECS),
        notes=tuple(t for _, _, t in FEATURE_SPECS),
        settings=settings,
    )


@dataclass(frozen=True)
class FeatureVector:
    utterance_id: str
    values: dict[str, float]
    label: Severity
    # set when speech_pause_ratio was replaced by the cap (no pauses)
    ratio_capped: bool = False


def extract_features(
    record: UtteranceRecord,
    profile: ReferenceProfile,
    provider: EmbeddingProvider,
    config: FeatureConfig | None = None,
) -> FeatureVector:
    config = config or FeatureConfig()
    if profile is None:
        raise FeatureError(f"{record.utterance_id}: no reference profile for sentence {record.sentence_id!r}")
    if profile.sentence_id != record.sentence_id:
        raise FeatureError(f"{record.utterance_id}: profile is for {profile.sentence_id!r}, "
                           f"record reads {record.sentence_id!r}")
    try:
        values = _extract(record, profile, provider, config)
    except FeatureError:
        raise
    except Exception as exc:
        raise FeatureError(f"{record.utterance_id}: {exc}") from exc

    bad = [k for k, v in values.items() if not math.isfinite(v)]
    if bad:
        raise FeatureError(f"{record.utterance_id}: non-finite feature values for {', '.join(bad)}")
    return FeatureVector(record.utterance_id, values, record.severity, ratio_capped=not record.pause_durations)


def _extract(record, profile, provider, config) -> dict[str, float]:
    ref_text = profile.reference_text
    hyp_text = record.hypothesis_text
    if not hyp_text:
        raise FeatureError("utterance has no word tokens")
    out: dict[str, float] = {}

    m = syntactic_features(ref_text, hyp_text)
    out.update(
        insertion=m.insertions, deletion=m.deletions, substitution=m.substitutions,
        wer=m.wer, mer=m.mer, wil=m.wil, wip=m.wip, hits=m.hits,
    )
    out["bert_score_f1"] = bert_score(ref_text, hyp_text, provider)[2]
    out["max_repetition"] = max_repetition(hyp_text)
    out["filler_similarity"] = filler_similarity(hyp_text, config.fillers, provider)

    out.update(pause_location_features(profile.reference_pause_bits(), pause_sequence(record.tokens)))
    s, mean, sd, mx, mn = pause_duration_features(record.tokens)
    out.update(pause_sum=s, pause_mean=mean, pause_sd=sd, pause_max=mx, pause_min=mn)
    out.update(articulation_features(record, profile, ratio_cap=config.ratio_cap, top_fraction=config.top_fraction))
    out.update(rhythm_features(record, profile))

    if set(out) != set(FEATURE_NAMES):
        raise FeatureError(f"extractor outputs disagree with manifest: {sorted(set(out) ^ set(FEATURE_NAMES))}")
    return {name: float(out[name]) for name in FEATURE_NAMES}


def extract_all(
    records: Sequence[UtteranceRecord],
    profiles: Mapping[str, ReferenceProfile],
    provider: EmbeddingProvider,
    config: FeatureConfig | None = None,
    workers: int = 1,
) -> tuple[list[FeatureVector], list[tuple[str, str]]]:
    """Extract every record; returns (vectors, [(utterance_id, error), ...]).

    Row order follows ``records`` regardless of ``workers``.
    """
    def one(rec):
        try:
            profile = profiles.get(rec.sentence_id)
            if profile is None:
                raise FeatureError(f"{rec.utterance_id}: no reference profile for sentence {rec.sentence_id!r}")
            return extract_features(rec, profile, provider, config), None
        except FeatureError as exc:
            return None, (rec.utterance_id, str(exc))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, records))
    else:
        results = [one(r) for r in records]
    vectors, errors = [], []
    for k, (vec, err) in enumerate(results, start=1):
        if err:
            log.error("extraction failed for %s: %s", *err)
            errors.append(err)
        else:
            vectors.append(vec)
        if k % 100 == 0:
            log.info("extracted %d/%d utterances", k, len(records))
    return vectors, errors


@dataclass(frozen=True)
class FeatureMatrix:
    utterance_ids: tuple[str, ...]
    values: np.ndarray  # (rows, features)
    labels: np.ndarray  # (rows,) int
    manifest: FeatureManifest

    def rows(self, ids: Sequence[str]) -> FeatureMatrix:
        index = {u: k for k, u in enumerate(self.utterance_ids)}
        missing = [u for u in ids if u not in index]
        if missing:
            raise FeatureError(f"utterances missing from matrix: {missing[:5]}")
        sel = np.array([index[u] for u in ids], dtype=int)
        return FeatureMatrix(tuple(ids), self.values[sel], self.labels[sel], self.manifest)

    def columns(self, names: Sequence[str]) -> FeatureMatrix:
        cols = [self.manifest.names.index(n) for n in names]
        m = self.manifest
        sub = FeatureManifest(tuple(names), tuple(m.categories[c] for c in cols), tuple(m.notes[c] for c in cols),
                              m.settings)
        return FeatureMatrix(self.utterance_ids, self.values[:, cols], self.labels, sub)


def to_matrix(vectors: Sequence[FeatureVector], manifest: FeatureManifest | None = None) -> FeatureMatrix:
    manifest = manifest or default_manifest()
    rows = []
    for vec in vectors:
        for name in manifest.names:
            if name not in vec.values:
                raise FeatureError(f"{vec.utterance_id}: missing feature {name!r}")
        extra = set(vec.values) - set(manifest.names)
        if extra:
            raise FeatureError(f"{vec.utterance_id}: features not in manifest: {sorted(extra)}")
        rows.append([vec.values[n] for n in manifest.names])
    values = np.array(rows, dtype=float).reshape(len(rows), len(manifest))
    labels = np.array([int(v.label) for v in vectors], dtype=int)
    return FeatureMatrix(tuple(v.utterance_id for v in vectors), values, labels, manifest)


def _fmt(x: float) -> str:
    # shortest round-trip repr: exact on reload and identical on every IEEE-754 platform
    x = float(x)
    if x == 0:
        return "0"
    s = repr(x)
    return s[:-2] if s.endswith(".0") else s


def matrix_to_csv(matrix: FeatureMatrix) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["utterance_id", "label", *matrix.manifest.names])
    for uid, label, row in zip(matrix.utterance_ids, matrix.labels, matrix.values):
        writer.writerow([uid, int(label), *(_fmt(v) for v in row)])
    return buf.getvalue()


def matrix_from_csv(text: str, manifest: FeatureManifest | None = None) -> FeatureMatrix:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise FeatureError("feature matrix file is empty") from None
    if header[:2] != ["utterance_id", "label"]:
        raise FeatureError("feature matrix header must start with utterance_id,label")
    names = tuple(header[2:])
    if manifest is None:
        manifest = default_manifest() if names == FEATURE_NAMES else FeatureManifest(
            names, ("unknown",) * len(names), ("",) * len(names))
    elif names != manifest.names:
        raise FeatureError("feature matrix columns do not match the manifest")
    ids, labels, rows = [], [], []
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(header):
            raise FeatureError(f"feature matrix line {lineno}: expected {len(header)} fields, got {len(row)}")
        ids.append(row[0])
        labels.append(int(row[1]))
        rows.append([float(v) for v in row[2:]])
    values = np.array(rows, dtype=float).reshape(len(rows), len(names))
    return FeatureMatrix(tuple(ids), values, np.array(labels, dtype=int), manifest)
