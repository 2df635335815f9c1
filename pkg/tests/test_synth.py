from collections import Counter

from srfeat.corpus import parse_corpus, serialize_corpus
from srfeat.synth import CLASS_COUNTS, class_counts, generate


def test_default_class_mix():
    records, refs = generate()
    counts = Counter(int(r.severity) for r in records)
    assert len(records) == 540
    assert [counts[c] for c in range(3)] == [91, 410, 39]
    total = sum(CLASS_COUNTS)
    for c in range(3):
        assert abs(counts[c] / 540 - CLASS_COUNTS[c] / total) < 0.005
    assert {r.sentence_id for r in records} == {r.sentence_id for r in refs}


def test_fixed_seed_identical_bytes():
    a = serialize_corpus(generate(120, seed=5)[0])
    b = serialize_corpus(generate(120, seed=5)[0])
    assert a == b
    assert a != serialize_corpus(generate(120, seed=6)[0])


def test_records_roundtrip_and_are_valid():
    records, _ = generate(120, seed=1, mode="planted")
    assert parse_corpus(serialize_corpus(records)) == records


def test_class_counts_sum():
    for n in (10, 99, 540, 2567):
        assert sum(class_counts(n)) == n
    assert class_counts(2567) == list(CLASS_COUNTS)


def test_severe_pauses_longer_than_healthy():
    records, _ = generate(540, seed=0)
    mean = {}
    for level in (0, 2):
        pauses = [d for r in records if r.severity == level for d in r.pause_durations]
        mean[level] = sum(pauses) / len(pauses)
    assert mean[2] > mean[0]
