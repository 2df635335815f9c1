import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from srfeat.corpus import ReferenceProfile, Token, UtteranceRecord, WordSegment
from srfeat.embeddings import HashingProvider


def make_record(words, durations, pauses=None, *, uid="u1", sentence="s1", severity=0, gap=0.0):
    """Record with back-to-back segments; ``pauses`` maps a token slot
    (pause inserted before word k, or k == len(words) for a trailing pause)
    to its duration."""
    pauses = pauses or {}
    tokens, segments, t = [], [], 0.0
    for k, (w, d) in enumerate(zip(words, durations)):
        if k in pauses:
            tokens.append(Token.pause(pauses[k]))
            t += pauses[k]
        tokens.append(Token.word(w))
        segments.append(WordSegment(t, t + d))
        t += d + gap
    if len(words) in pauses:
        tokens.append(Token.pause(pauses[len(words)]))
    return UtteranceRecord(uid, "spk", sentence, severity, tuple(tokens), tuple(segments))


def make_profile(words, durations, flags=None, sentence="s1"):
    flags = tuple(flags) if flags is not None else (0,) * (len(words) + 1)
    return ReferenceProfile(sentence, tuple(words), flags, tuple(durations), sum(durations))


@pytest.fixture
def provider():
    return HashingProvider()


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS, line

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(line(number))
