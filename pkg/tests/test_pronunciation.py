import pytest
from hypothesis import given, strategies as st

from srfeat.embeddings import FileProvider, HashingProvider
from srfeat.pronunciation import (
    DEFAULT_FILLERS,
    bert_score,
    filler_similarity,
    max_repetition,
    syntactic_features,
)

words = st.text(alphabet="가을하늘높abxyz", min_size=1, max_size=5)
sentences = st.lists(words, min_size=1, max_size=6).map(" ".join)


def test_syntactic_identity_and_deletion():
    m = syntactic_features("가을 하늘 참", "가을 하늘 참")
    assert m.wer == 0 and m.wip == 1
    m = syntactic_features("가을 하늘 참", "가을 하늘")
    assert (m.deletions, m.hits) == (1, 2)
    assert m.wer == pytest.approx(1 / 3)


def test_syntactic_empty_hypothesis_and_reference():
    assert syntactic_features("가을 하늘", "").wer == 1.0
    with pytest.raises(ValueError):
        syntactic_features("  ", "가을")


def test_bert_score_identity(provider):
    p, r, f = bert_score("가을 하늘은 높다", "가을 하늘은 높다", provider)
    assert f == pytest.approx(1.0, abs=1e-9)


def test_bert_score_disjoint(provider):
    assert bert_score("가을 하늘", "xyz qrs", provider)[2] < 0.5


def test_bert_score_extra_word(provider):
    p, r, f = bert_score("가을 하늘", "가을 하늘 음", provider)
    assert r == pytest.approx(1.0, abs=1e-9)
    assert p < 1.0


@given(sentences, sentences)
def test_bert_score_bounds(ref, hyp):
    p, r, f = bert_score(ref, hyp, HashingProvider(64))
    for v in (p, r, f):
        assert -1 - 1e-12 <= v <= 1 + 1e-12
    assert min(p, r) - 1e-12 <= f <= max(p, r) + 1e-12 or f == 0


@pytest.mark.parametrize("text,expected", [("aaab", 3), ("abc", 1), ("어어어어 가을", 4), ("", 0), ("a a a", 1)])
def test_max_repetition(text, expected):
    assert max_repetition(text) == expected


def test_filler_similarity_single_filler(provider):
    assert filler_similarity("어", ["어"], provider) == pytest.approx(1.0, abs=1e-9)


def test_filler_similarity_mean_of_one_and_zero():
    p = FileProvider({"a": {"text": "a", "vectors": [[1, 0]]}, "b": {"text": "b", "vectors": [[0, 1]]}}, 2)
    assert filler_similarity("a", ["a", "b"], p) == pytest.approx(0.5, abs=1e-9)


def test_filler_similarity_default_set(provider):
    v = filler_similarity("가을 하늘은 높고 맑다", DEFAULT_FILLERS, provider)
    assert -1 <= v <= 1
    assert v == filler_similarity("가을 하늘은 높고 맑다", DEFAULT_FILLERS, HashingProvider())


def test_filler_similarity_grows_with_fillers(provider):
    base = filler_similarity("가을 하늘은 높다", DEFAULT_FILLERS, provider)
    more = filler_similarity("어 가을 음 하늘은 그 높다", DEFAULT_FILLERS, provider)
    assert more > base


@given(sentences)
def test_syntactic_self_is_perfect(x):
    m = syntactic_features(x, x)
    assert (m.wer, m.mer, m.wil) == (0, 0, 0)


@given(sentences, st.lists(words, min_size=1, max_size=6), st.randoms(use_true_random=False))
def test_bert_score_token_order_free_and_nonnegative(ref, hyp_words, rnd):
    p = HashingProvider(64)
    shuffled = list(hyp_words)
    rnd.shuffle(shuffled)
    a = bert_score(ref, " ".join(hyp_words), p)
    b = bert_score(ref, " ".join(shuffled), p)
    assert a == pytest.approx(b, abs=1e-12)
    assert all(-1e-12 <= v <= 1 + 1e-12 for v in a)


@given(st.text(alphabet="abc어", min_size=1, max_size=10))
def test_max_repetition_ignores_nonrepeating_padding(core):
    base = max_repetition(core)
    pad_l = "x" if core[0] != "x" else "y"
    pad_r = "z" if core[-1] != "z" else "y"
    assert max_repetition(pad_l + core + pad_r) == base


@given(st.permutations(DEFAULT_FILLERS))
def test_filler_order_irrelevant(order):
    p = HashingProvider()
    text = "어 가을 하늘은 음 높다"
    assert filler_similarity(text, list(order), p) == filler_similarity(text, DEFAULT_FILLERS, p)
