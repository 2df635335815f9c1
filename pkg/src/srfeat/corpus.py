"""Corpus records, line-delimited ingestion, stratified splitting and
healthy-speaker reference profiles."""

from __future__ import annotations

import enum
import json
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

import numpy as np

from .align import align_sequences


class CorpusFormatError(ValueError):
    """A corpus line could not be decoded."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class ValidationError(ValueError):
    """A decoded record violates a domain invariant."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


class Severity(enum.IntEnum):
    NONE = 0
    MILD = 1
    SEVERE = 2


SEVERITY_LEVELS = tuple(int(s) for s in Severity)


def as_severity(value) -> Severity:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise ValidationError("severity", f"expected an integer level, got {value!r}")
    try:
        return Severity(int(value))
    except ValueError:
        raise ValidationError("severity", f"level {value!r} outside {{0, 1, 2}}") from None


@dataclass(frozen=True)
class Token:
    kind: str  # "word" or "pause"
    text: str = ""
    pause_duration: float | None = None

    def __post_init__(self):
        if self.kind == "word":
            if not self.text:
                raise ValidationError("tokens", "word token with empty text")
            if self.pause_duration is not None:
                raise ValidationError("tokens", "word token carries a pause_duration")
        elif self.kind == "pause":
            if self.text:
                raise ValidationError("tokens", "pause token with non-empty text")
            d = self.pause_duration
            if d is None or not math.isfinite(d) or d <= 0:
                raise ValidationError("tokens", f"pause token needs a positive duration, got {d!r}")
        else:
            raise ValidationError("tokens", f"unknown token kind {self.kind!r}")

    @property
    def is_pause(self) -> bool:
        return self.kind == "pause"

    @classmethod
    def word(cls, text: str) -> Token:
        return cls("word", text)

    @classmethod
    def pause(cls, duration: float) -> Token:
        return cls("pause", "", float(duration))


@dataclass(frozen=True)
class WordSegment:
    start: float
    end: float

    def __post_init__(self):
        if not (math.isfinite(self.start) and math.isfinite(self.end)):
            raise ValidationError("segments", "non-finite segment boundary")
        if self.end <= self.start:
            raise ValidationError("segments", f"segment end {self.end} <= start {self.start}")

    def duration(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class UtteranceRecord:
    utterance_id: str
    speaker_id: str
    sentence_id: str
    severity: Severity
    tokens: tuple[Token, ...]
    word_segments: tuple[WordSegment, ...]

    def __post_init__(self):
        object.__setattr__(self, "severity", as_severity(self.severity))
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "word_segments", tuple(self.word_segments))
        n_words = sum(1 for t in self.tokens if not t.is_pause)
        if n_words != len(self.word_segments):
            raise ValidationError(
                "segments",
                f"segment/token count mismatch ({len(self.word_segments)} segments, {n_words} word tokens)",
            )
        for prev, nxt in zip(self.word_segments, self.word_segments[1:]):
            if prev.end > nxt.start:
                raise ValidationError("segments", f"overlapping segments at {prev.end} > {nxt.start}")

    @property
    def words(self) -> list[str]:
        return [t.text for t in self.tokens if not t.is_pause]

    @property
    def hypothesis_text(self) -> str:
        return " ".join(self.words)

    @property
    def pause_durations(self) -> list[float]:
        return [t.pause_duration for t in self.tokens if t.is_pause]

    @property
    def durations(self) -> list[float]:
        return [s.duration() for s in self.word_segments]


@dataclass(frozen=True)
class SentenceReference:
    """Reference text plus clinician pause flags for one sentence.

    ``canonical_pauses`` has one flag per gap including the leading and
    trailing positions, i.e. ``len(tokens) + 1`` entries: flag ``k`` marks a
    pause right before token ``k``.
    """

    sentence_id: str
    tokens: tuple[str, ...]
    canonical_pauses: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        flags = tuple(int(f) for f in self.canonical_pauses)
        n = len(self.tokens)
        if n == 0:
            raise ValidationError("tokens", f"sentence {self.sentence_id!r} has no reference tokens")
        if len(flags) == n - 1:
            flags = (0, *flags, 0)
        if len(flags) != n + 1:
            raise ValidationError(
                "canonical_pauses", f"expected {n - 1} or {n + 1} flags for {n} tokens, got {len(flags)}"
            )
        if any(f not in (0, 1) for f in flags):
            raise ValidationError("canonical_pauses", "flags must be 0 or 1")
        object.__setattr__(self, "canonical_pauses", flags)


@dataclass(frozen=True)
class ReferenceProfile:
    sentence_id: str
    reference_tokens: tuple[str, ...]
    canonical_pause_sequence: tuple[int, ...]
    healthy_duration_sequence: tuple[float, ...]
    healthy_total_duration: float

    def __post_init__(self):
        object.__setattr__(self, "reference_tokens", tuple(self.reference_tokens))
        object.__setattr__(self, "canonical_pause_sequence", tuple(int(f) for f in self.canonical_pause_sequence))
        object.__setattr__(self, "healthy_duration_sequence", tuple(float(d) for d in self.healthy_duration_sequence))
        n = len(self.reference_tokens)
        if len(self.healthy_duration_sequence) != n:
            raise ValidationError("healthy_duration_sequence", "length differs from reference_tokens")
        if len(self.canonical_pause_sequence) != n + 1:
            raise ValidationError("canonical_pause_sequence", f"expected {n + 1} gap flags")
        if any(not (d > 0 and math.isfinite(d)) for d in self.healthy_duration_sequence):
            raise ValidationError("healthy_duration_sequence", "durations must be positive")
        if abs(self.healthy_total_duration - math.fsum(self.healthy_duration_sequence)) > 1e-9:
            raise ValidationError("healthy_total_duration", "does not equal the sum of the duration sequence")

    @property
    def reference_text(self) -> str:
        return " ".join(self.reference_tokens)

    def reference_pause_bits(self) -> list[int]:
        """Reference tokens interleaved with canonical pauses, as 0/1 bits."""
        flags = self.canonical_pause_sequence
        bits = [1] if flags[0] else []
        for k in range(len(self.reference_tokens)):
            bits.append(0)
            if flags[k + 1]:
                bits.append(1)
        return bits


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[str, ...]
    validation: tuple[str, ...]
    test: tuple[str, ...]

    def __post_init__(self):
        seen: set[str] = set()
        for name in ("train", "validation", "test"):
            ids = tuple(getattr(self, name))
            object.__setattr__(self, name, ids)
            if seen.intersection(ids) or len(set(ids)) != len(ids):
                raise ValidationError(name, "split parts overlap")
            seen.update(ids)

    def part(self, name: str) -> tuple[str, ...]:
        if name not in ("train", "validation", "test"):
            raise KeyError(name)
        return getattr(self, name)

    def to_json(self) -> str:
        return json.dumps(
            {"train": list(self.train), "validation": list(self.validation), "test": list(self.test)},
            ensure_ascii=False,
            indent=1,
        ) + "\n"

    @classmethod
    def from_json(cls, text: str) -> DatasetSplit:
        obj = json.loads(text)
        return cls(tuple(obj["train"]), tuple(obj["validation"]), tuple(obj["test"]))


# -- serialization -----------------------------------------------------------

RECORD_KEYS = ("utterance_id", "speaker_id", "sentence_id", "severity", "tokens", "segments")


def _dumps(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def record_to_dict(record: UtteranceRecord) -> dict:
    tokens = []
    for t in record.tokens:
        if t.is_pause:
            tokens.append({"kind": "pause", "text": "", "pause_duration": t.pause_duration})
        else:
            tokens.append({"kind": "word", "text": t.text})
    return {
        "utterance_id": record.utterance_id,
        "speaker_id": record.speaker_id,
        "sentence_id": record.sentence_id,
        "severity": int(record.severity),
        "tokens": tokens,
        "segments": [{"start": s.start, "end": s.end} for s in record.word_segments],
    }


def record_from_dict(obj: dict) -> UtteranceRecord:
    if not isinstance(obj, dict):
        raise ValidationError("record", "expected a key/value object")
    missing = [k for k in RECORD_KEYS if k not in obj]
    if missing:
        raise ValidationError(missing[0], "missing field")
    for key in ("utterance_id", "speaker_id", "sentence_id"):
        if not isinstance(obj[key], str) or not obj[key]:
            raise ValidationError(key, "expected a non-empty string")
    if not isinstance(obj["tokens"], list):
        raise ValidationError("tokens", "expected an array")
    if not isinstance(obj["segments"], list):
        raise ValidationError("segments", "expected an array")
    tokens = []
    for t in obj["tokens"]:
        if not isinstance(t, dict) or "kind" not in t:
            raise ValidationError("tokens", f"malformed token {t!r}")
        dur = t.get("pause_duration")
        if dur is not None and (isinstance(dur, bool) or not isinstance(dur, (int, float))):
            raise ValidationError("tokens", f"pause_duration must be a number, got {dur!r}")
        tokens.append(Token(t["kind"], t.get("text", ""), None if dur is None else float(dur)))
    segments = []
    for s in obj["segments"]:
        try:
            segments.append(WordSegment(float(s["start"]), float(s["end"])))
        except (TypeError, KeyError) as exc:
            raise ValidationError("segments", f"malformed segment {s!r}") from exc
    return UtteranceRecord(
        utterance_id=obj["utterance_id"],
        speaker_id=obj["speaker_id"],
        sentence_id=obj["sentence_id"],
        severity=as_severity(obj["severity"]),
        tokens=tuple(tokens),
        word_segments=tuple(segments),
    )


def parse_corpus(document: str | IO[str] | Iterable[str]) -> list[UtteranceRecord]:
    """Decode a line-delimited corpus; blank lines are skipped.

    Errors are re-raised with the 1-based line number attached.
    """
    lines = document.splitlines() if isinstance(document, str) else document
    records = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusFormatError(f"malformed record ({exc.msg})", lineno) from exc
        try:
            records.append(record_from_dict(obj))
        except ValidationError as exc:
            raise CorpusFormatError(str(exc), lineno) from exc
    return records


def serialize_corpus(records: Iterable[UtteranceRecord]) -> str:
    return "".join(_dumps(record_to_dict(r)) + "\n" for r in records)


def parse_references(document: str | Iterable[str]) -> dict[str, SentenceReference]:
    lines = document.splitlines() if isinstance(document, str) else document
    refs: dict[str, SentenceReference] = {}
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            ref = SentenceReference(obj["sentence_id"], tuple(obj["tokens"]), tuple(obj["canonical_pauses"]))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise CorpusFormatError(f"malformed reference ({exc})", lineno) from exc
        except ValidationError as exc:
            raise CorpusFormatError(str(exc), lineno) from exc
        if ref.sentence_id in refs:
            raise CorpusFormatError(f"duplicate sentence_id {ref.sentence_id!r}", lineno)
        refs[ref.sentence_id] = ref
    return refs


def serialize_references(refs: Iterable[SentenceReference]) -> str:
    return "".join(
        _dumps({"sentence_id": r.sentence_id, "tokens": list(r.tokens), "canonical_pauses": list(r.canonical_pauses)})
        + "\n"
        for r in refs
    )


def serialize_profiles(profiles: Iterable[ReferenceProfile]) -> str:
    return "".join(
        _dumps(
            {
                "sentence_id": p.sentence_id,
                "reference_tokens": list(p.reference_tokens),
                "canonical_pause_sequence": list(p.canonical_pause_sequence),
                "healthy_duration_sequence": list(p.healthy_duration_sequence),
                "healthy_total_duration": p.healthy_total_duration,
            }
        )
        + "\n"
        for p in profiles
    )


def parse_profiles(document: str) -> dict[str, ReferenceProfile]:
    out = {}
    for line in document.splitlines():
        if line.strip():
            p = ReferenceProfile(**json.loads(line))
            out[p.sentence_id] = p
    return out


# -- splitting ---------------------------------------------------------------

def _largest_remainder(total: int, ratios: Sequence[float]) -> list[int]:
    quotas = [r * total for r in ratios]
    counts = [math.floor(q + 1e-9) for q in quotas]
    remainders = [q - c for q, c in zip(quotas, counts)]
    leftover = total - sum(counts)
    # stable sort: equal remainders go to the earlier part (train first)
    order = sorted(range(len(ratios)), key=lambda k: -remainders[k])
    for k in order[:leftover]:
        counts[k] += 1
    counts[0] += total - sum(counts)
    return counts


def stratified_split(
    records: Sequence[UtteranceRecord],
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> DatasetSplit:
    """Per-severity train/validation/test split with largest-remainder rounding."""
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three non-negative numbers summing to 1, got {ratios!r}")
    by_class: dict[int, list[str]] = defaultdict(list)
    for r in records:
        by_class[int(r.severity)].append(r.utterance_id)

    rng = np.random.default_rng(seed)
    parts: list[list[str]] = [[], [], []]
    for level in sorted(by_class):
        ids = by_class[level]
        if len(ids) < 3:
            raise ValueError(f"severity {level} has {len(ids)} records; at least 3 are needed to split")
        order = rng.permutation(len(ids))
        shuffled = [ids[k] for k in order]
        counts = _largest_remainder(len(ids), ratios)
        start = 0
        for part, c in zip(parts, counts):
            part.extend(shuffled[start:start + c])
            start += c
    return DatasetSplit(tuple(parts[0]), tuple(parts[1]), tuple(parts[2]))


# -- healthy reference profiles ----------------------------------------------

def build_reference_profile(
    healthy_records: Sequence[UtteranceRecord],
    reference_tokens: Sequence[str],
    canonical_pauses: Sequence[int],
) -> ReferenceProfile:
    """Average healthy word durations per reference position.

    Each healthy utterance is word-aligned to the reference; hits and
    substitutions contribute their segment duration to the aligned reference
    position. Positions no record realized get the global mean word duration.
    """
    if not healthy_records:
        raise ValueError("build_reference_profile needs at least one healthy record")
    reference_tokens = tuple(reference_tokens)
    if not reference_tokens:
        raise ValueError("reference_tokens must be non-empty")
    sentence_ids = {r.sentence_id for r in healthy_records}
    if len(sentence_ids) != 1:
        raise ValueError(f"healthy records span several sentences: {sorted(sentence_ids)}")
    if any(r.severity != Severity.NONE for r in healthy_records):
        raise ValueError("healthy records must all have severity 0")
    sentence = SentenceReference(sentence_ids.pop(), reference_tokens, tuple(canonical_pauses))

    sums = [0.0] * len(reference_tokens)
    counts = [0] * len(reference_tokens)
    all_durations = []
    for rec in healthy_records:
        durations = rec.durations
        all_durations.extend(durations)
        alignment = align_sequences(reference_tokens, rec.words)
        for ref_i, hyp_j in alignment.aligned_pairs():
            sums[ref_i] += durations[hyp_j]
            counts[ref_i] += 1
    if not all_durations:
        raise ValueError("healthy records contain no word segments")
    global_mean = math.fsum(all_durations) / len(all_durations)
    sequence = tuple(s / c if c else global_mean for s, c in zip(sums, counts))
    return ReferenceProfile(
        sentence_id=sentence.sentence_id,
        reference_tokens=reference_tokens,
        canonical_pause_sequence=sentence.canonical_pauses,
        healthy_duration_sequence=sequence,
        healthy_total_duration=math.fsum(sequence),
    )


def build_profiles(
    records: Iterable[UtteranceRecord],
    references: dict[str, SentenceReference],
) -> dict[str, ReferenceProfile]:
    """One profile per reference sentence from the severity-0 records given."""
    healthy: dict[str, list[UtteranceRecord]] = defaultdict(list)
    for r in records:
        if r.severity == Severity.NONE:
            healthy[r.sentence_id].append(r)
    profiles = {}
    for sid, ref in references.items():
        if not healthy[sid]:
            raise ValueError(f"no healthy records for sentence {sid!r}; cannot build its profile")
        profiles[sid] = build_reference_profile(healthy[sid], ref.tokens, ref.canonical_pauses)
    return profiles
