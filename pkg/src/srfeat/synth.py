"""Synthetic stand-in corpus with severity-dependent transcripts and timings.

Two modes:

``realistic``
    error rates, tempo, pause placement and pause length all worsen with
    severity, so most features carry some signal.
``planted``
    every class shares the same error/tempo/pause distribution and each
    utterance gets the same number of inserted one-syllable words; severity
    only decides how many of those insertions are filler words. The label
    is therefore visible to ``filler_similarity`` and (almost) nothing else.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .corpus import SentenceReference, Token, UtteranceRecord, WordSegment, _largest_remainder
from .pronunciation import DEFAULT_FILLERS

# utterance counts per severity in the source corpus; the generator keeps the mix
CLASS_COUNTS = (431, 1950, 186)
PLANTED_FEATURE = "filler_similarity"

SENTENCES = (
    ("s1", "가을 하늘은 높고 맑아서 기분이 좋습니다", (0, 0, 0, 1, 0, 0, 0)),
    ("s2", "들판에는 누렇게 익은 벼가 바람에 흔들립니다", (0, 0, 0, 1, 0, 0, 0)),
    ("s3", "아이들은 낙엽을 밟으며 즐겁게 뛰어 놉니다", (0, 0, 1, 0, 0, 0, 0)),
    ("s4", "저녁이 되면 서늘한 바람이 창문으로 들어옵니다", (0, 0, 1, 0, 0, 0, 0)),
    ("s5", "우리는 따뜻한 차를 마시며 이야기를 나눕니다", (0, 0, 0, 1, 0, 0, 0)),
    ("s6", "올해 가을에는 가족과 함께 여행을 가고 싶습니다", (0, 0, 1, 0, 1, 0, 0, 0)),
)

_SYLLABLES = "가나다라마바사자차카타파하고노도로모보소오조초코토포호구누두루무부수우주추투푸후기니디리미비시지치키티피히"
_NON_FILLER_WORDS = ("네", "좀", "저", "막", "뭐", "아")


@dataclass(frozen=True)
class SeverityProfile:
    p_sub: float
    p_del: float
    p_ins: float
    filler_share: float
    p_stutter: float
    tempo: float
    duration_sigma: float
    p_keep_pause: float
    p_extra_pause: float
    pause_median: float


REALISTIC = (
    SeverityProfile(0.03, 0.01, 0.02, 0.2, 0.00, 1.00, 0.15, 0.90, 0.03, 0.30),
    SeverityProfile(0.12, 0.05, 0.06, 0.5, 0.05, 1.25, 0.25, 0.75, 0.12, 0.50),
    SeverityProfile(0.30, 0.12, 0.12, 0.7, 0.15, 1.70, 0.35, 0.60, 0.25, 0.90),
)
# one shared profile for every class; insertions are handled separately
PLANTED = SeverityProfile(0.05, 0.02, 0.0, 0.0, 0.0, 1.10, 0.20, 0.80, 0.08, 0.45)
PLANTED_INSERTIONS = 3
PLANTED_FILLERS = (0, 1, 3)


def references() -> list[SentenceReference]:
    return [SentenceReference(sid, tuple(text.split()), flags) for sid, text, flags in SENTENCES]


def class_counts(n: int) -> list[int]:
    total = sum(CLASS_COUNTS)
    return _largest_remainder(n, [c / total for c in CLASS_COUNTS])


def _syllable_base(word: str) -> float:
    # healthy articulation time: ~0.17 s per syllable plus a small onset
    return 0.08 + 0.17 * len(word)


def _substitute(word: str, rng: np.random.Generator) -> str:
    k = int(rng.integers(len(word)))
    neighbours = {word[k], word[k - 1] if k > 0 else "", word[k + 1] if k + 1 < len(word) else ""}
    choices = [s for s in _SYLLABLES if s not in neighbours]
    return word[:k] + choices[int(rng.integers(len(choices)))] + word[k + 1:]


class _Generator:
    def __init__(self, seed: int, mode: str):
        if mode not in ("realistic", "planted"):
            raise ValueError(f"unknown synth mode {mode!r}")
        self.rng = np.random.default_rng(seed)
        self.mode = mode
        self.refs = references()

    def words(self, ref: SentenceReference, severity: int) -> list[tuple[str, int | None]]:
        """Hypothesis words with the reference index they realize (None if inserted)."""
        rng = self.rng
        prof = PLANTED if self.mode == "planted" else REALISTIC[severity]
        out: list[tuple[str, int | None]] = []
        for i, word in enumerate(ref.tokens):
            u = rng.random()
            if u < prof.p_del:
                continue
            if u < prof.p_del + prof.p_sub:
                word = _substitute(word, rng)
            if rng.random() < prof.p_stutter:
                word = word[0] * int(rng.integers(2, 5)) + word[1:]
            out.append((word, i))
            if rng.random() < prof.p_ins:
                pool = DEFAULT_FILLERS if rng.random() < prof.filler_share else _NON_FILLER_WORDS
                out.append((pool[int(rng.integers(len(pool)))], None))
        if not out:
            out.append((ref.tokens[0], 0))
        if self.mode == "planted":
            n_fill = PLANTED_FILLERS[severity]
            inserts = [DEFAULT_FILLERS[int(rng.integers(len(DEFAULT_FILLERS)))] for _ in range(n_fill)]
            inserts += [_NON_FILLER_WORDS[int(rng.integers(len(_NON_FILLER_WORDS)))]
                        for _ in range(PLANTED_INSERTIONS - n_fill)]
            rng.shuffle(inserts)
            for w in inserts:
                # never next to another inserted word, so runs stay within one word
                slots = [k for k in range(len(out) + 1)
                         if (k == 0 or out[k - 1][1] is not None) and (k == len(out) or out[k][1] is not None)]
                pos = slots[int(rng.integers(len(slots)))] if slots else len(out)
                out.insert(pos, (w, None))
        return out

    def utterance(self, uid: str, speaker: str, ref: SentenceReference, severity: int) -> UtteranceRecord:
        rng = self.rng
        prof = PLANTED if self.mode == "planted" else REALISTIC[severity]
        words = self.words(ref, severity)
        tokens: list[Token] = []
        segments: list[WordSegment] = []
        t = round(float(rng.uniform(0.1, 0.4)), 4)

        def pause():
            nonlocal t
            d = round(float(prof.pause_median * math.exp(0.4 * rng.normal())), 4)
            d = max(d, 0.05)
            tokens.append(Token.pause(d))
            t = round(t + d, 4)

        for k, (word, ref_index) in enumerate(words):
            if k > 0:
                canonical = ref_index is not None and ref.canonical_pauses[ref_index] == 1
                if (canonical and rng.random() < prof.p_keep_pause) or (not canonical and rng.random() < prof.p_extra_pause):
                    pause()
            d = _syllable_base(word) * prof.tempo * math.exp(prof.duration_sigma * rng.normal())
            d = max(round(d, 4), 0.03)
            tokens.append(Token.word(word))
            segments.append(WordSegment(t, round(t + d, 4)))
            t = round(t + d + float(rng.uniform(0.0, 0.03)), 4)
        if rng.random() < prof.p_extra_pause * 0.5:
            pause()
        return UtteranceRecord(uid, speaker, ref.sentence_id, severity, tuple(tokens), tuple(segments))


def generate(n_utterances: int = 540, seed: int = 0, mode: str = "realistic") -> tuple[list[UtteranceRecord], list[SentenceReference]]:
    """Synthetic corpus plus its sentence references.

    Class sizes follow the source corpus mix (431/1950/186) scaled to
    ``n_utterances``. Speakers read the sentences in order, six per speaker.
    """
    gen = _Generator(seed, mode)
    records = []
    counter = 0
    n_sent = len(gen.refs)
    for severity, count in enumerate(class_counts(n_utterances)):
        for k in range(count):
            ref = gen.refs[k % n_sent]
            speaker = f"spk{severity}_{k // n_sent:03d}"
            records.append(gen.utterance(f"utt{counter:05d}", speaker, ref, severity))
            counter += 1
    return records, gen.refs
