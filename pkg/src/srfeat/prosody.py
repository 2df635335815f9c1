"""Structural-prosody features: pause location, pause duration,
articulation duration and rhythm."""

from __future__ import annotations

import math
import re
from typing import Callable, Sequence

import numpy as np

from .align import align_sequences, error_metrics
from .corpus import ReferenceProfile, Token, UtteranceRecord
from .dtw import dtw_distance

DEFAULT_RATIO_CAP = 1e6
DEFAULT_TOP_FRACTION = 0.3

_VOWEL_GROUP = re.compile(r"[aeiouy]+", re.IGNORECASE)


def pause_sequence(tokens: Sequence[Token]) -> list[int]:
    return [1 if t.is_pause else 0 for t in tokens]


def pause_location_features(reference_pauses: Sequence[int], hypothesis_pauses: Sequence[int]) -> dict[str, float]:
    if not reference_pauses:
        raise ValueError("reference pause sequence is empty")
    m = error_metrics(align_sequences(list(reference_pauses), list(hypothesis_pauses)))
    if hypothesis_pauses:
        dtw = dtw_distance([float(b) for b in reference_pauses], [float(b) for b in hypothesis_pauses]).distance
    else:
        # nothing to warp against: every reference position is unmatched
        dtw = float(sum(reference_pauses))
    return {
        "pause_ins": m.insertions,
        "pause_del": m.deletions,
        "pause_sub": m.substitutions,
        "pause_cer": m.wer,
        "pause_mer": m.mer,
        "pause_wil": m.wil,
        "pause_wip": m.wip,
        "pause_hits": m.hits,
        "pause_dtw": dtw,
        "pause_num": int(sum(hypothesis_pauses)),
    }


def _stats(values: Sequence[float]) -> tuple[float, float, float, float, float]:
    """(sum, mean, population sd, max, min)."""
    arr = np.asarray(values, dtype=float)
    total = math.fsum(arr.tolist())
    lo, hi = float(arr.min()), float(arr.max())
    if lo == hi:
        return total, lo, 0.0, hi, lo
    mean = min(max(total / arr.size, lo), hi)
    sd = math.sqrt(math.fsum(((arr - mean) ** 2).tolist()) / arr.size)
    return total, mean, sd, hi, lo


def pause_duration_features(tokens: Sequence[Token]) -> tuple[float, float, float, float, float]:
    durations = [t.pause_duration for t in tokens if t.is_pause]
    if not durations:
        return 0.0, 0.0, 0.0, 0.0, 0.0
    return _stats(durations)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def top_fraction_means(durations: Sequence[float], fraction: float = DEFAULT_TOP_FRACTION) -> tuple[float, float]:
    """Mean of the k shortest and k longest durations, k = max(1, round(fraction * n))."""
    ordered = sorted(durations)
    k = max(1, _round_half_up(fraction * len(ordered)))
    return math.fsum(ordered[:k]) / k, math.fsum(ordered[-k:]) / k


def articulation_features(
    record: UtteranceRecord,
    profile: ReferenceProfile,
    *,
    ratio_cap: float = DEFAULT_RATIO_CAP,
    top_fraction: float = DEFAULT_TOP_FRACTION,
) -> dict[str, float]:
    """Word-segment duration features.

    ``ws_dur_sum``, ``ws_dur_mean`` and ``ws_dur_sd`` are divided by the
    number of segments; max and min are raw. With no pauses at all the
    speech-to-pause ratio is ``ratio_cap``.
    """
    durations = record.durations
    n = len(durations)
    if n == 0:
        raise ValueError(f"utterance {record.utterance_id!r} has no word segments")
    total, mean, sd, dmax, dmin = _stats(durations)
    pause_total = math.fsum(record.pause_durations)
    ratio = total / pause_total if pause_total > 0 else ratio_cap
    short, long_ = top_fraction_means(durations, top_fraction)
    return {
        "ws_dtw": dtw_distance(durations, profile.healthy_duration_sequence).distance,
        "ws_dur_sum": total / n,
        "ws_dur_mean": mean / n,
        "ws_dur_sd": sd / n,
        "ws_dur_max": dmax,
        "ws_dur_min": dmin,
        "speech_pause_ratio": min(ratio, ratio_cap),
        "top30_short_ws": short,
        "top30_long_ws": long_,
    }


def count_syllables(text: str) -> int:
    """Hangul syllable blocks count one each; other words count vowel groups."""
    count = 0
    for word in text.split():
        latin = []
        for ch in word:
            if "가" <= ch <= "힣":
                count += 1
                latin.append(" ")
            else:
                latin.append(ch)
        count += len(_VOWEL_GROUP.findall("".join(latin)))
    return count


def change_rates(durations: Sequence[float]) -> list[float]:
    return [(b - a) / a for a, b in zip(durations, durations[1:])]


def rhythm_features(
    record: UtteranceRecord,
    profile: ReferenceProfile,
    syllable_counter: Callable[[str], int] = count_syllables,
) -> dict[str, float]:
    durations = record.durations
    spoken = math.fsum(durations)
    rates = change_rates(durations)
    if rates:
        rate_mean = math.fsum(rates) / len(rates)
        increasing = 0.0 if rate_mean < 0 else math.fsum(max(0.0, r) for r in rates) / len(rates)
    else:
        rate_mean = increasing = 0.0
    syllables = sum(syllable_counter(w) for w in record.words)
    return {
        "abnormal_speed": spoken - profile.healthy_total_duration,
        "speed_change_rate_mean": rate_mean,
        "sps": syllables / spoken if spoken > 0 else 0.0,
        "increasing_speed": increasing,
    }
