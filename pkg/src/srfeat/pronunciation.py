"""Pronunciation-correctness features: syntactic error metrics, BERT score
and disfluency (max repetition, filler similarity)."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .align import ErrorMetrics, align_sequences, error_metrics, tokenize
from .embeddings import EmbeddingProvider

# [ʌ], [ɯm], [ɯ], [kɯ] in Hangul
DEFAULT_FILLERS = ("어", "음", "으", "그")


def syntactic_features(reference_text: str, hypothesis_text: str) -> ErrorMetrics:
    """Word-level alignment metrics. The hypothesis must already have its
    pause markers removed; callers pass word text only."""
    ref = tokenize(reference_text, "word")
    if not ref:
        raise ValueError("reference text is empty")
    return error_metrics(align_sequences(ref, tokenize(hypothesis_text, "word")))


def bert_score(reference_text: str, hypothesis_text: str, provider: EmbeddingProvider) -> tuple[float, float, float]:
    """Greedy-matching BERT score without IDF weighting.

    Returns (precision, recall, f1).
    """
    ref = provider.embed_tokens(reference_text).vectors
    hyp = provider.embed_tokens(hypothesis_text).vectors
    sim = hyp @ ref.T
    # fsum keeps the result independent of token order
    precision = math.fsum(sim.max(axis=1).tolist()) / sim.shape[0]
    recall = math.fsum(sim.max(axis=0).tolist()) / sim.shape[1]
    denom = precision + recall
    f1 = 0.0 if denom == 0 else 2 * precision * recall / denom
    return precision, recall, f1


def max_repetition(hypothesis_text: str) -> int:
    """Longest run of one repeated character; whitespace breaks a run."""
    best = 0
    for word in hypothesis_text.split():
        run = 1
        best = max(best, 1)
        for prev, ch in zip(word, word[1:]):
            run = run + 1 if ch == prev else 1
            if run > best:
                best = run
    return best


def filler_similarity(hypothesis_text: str, fillers: Sequence[str], provider: EmbeddingProvider) -> float:
    if not fillers:
        raise ValueError("filler inventory is empty")
    hyp = provider.embed_sentence(hypothesis_text).vector
    sims = [float(np.dot(provider.embed_sentence(f).vector, hyp)) for f in fillers]
    return math.fsum(sims) / len(sims)
