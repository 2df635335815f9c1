import math

import pytest
from hypothesis import given, strategies as st

from oracles import apply_ops, edit_distance
from srfeat.align import align_sequences, error_metrics, tokenize

seqs = st.lists(st.sampled_from("abcd"), max_size=8)


def test_identity():
    a = align_sequences("abc", "abc")
    assert (a.hits, a.substitutions, a.deletions, a.insertions) == (3, 0, 0, 0)


def test_single_substitution():
    a = align_sequences(["a", "b", "c"], ["a", "x", "c"])
    assert (a.hits, a.substitutions, a.deletions, a.insertions) == (2, 1, 0, 0)
    m = error_metrics(a)
    assert m.wer == pytest.approx(1 / 3)
    assert m.mer == pytest.approx(1 / 3)
    assert m.wip == pytest.approx(4 / 9)
    assert m.wil == pytest.approx(5 / 9)


def test_full_deletion():
    a = align_sequences(["a", "b"], [])
    assert (a.hits, a.substitutions, a.deletions, a.insertions) == (0, 0, 2, 0)
    m = error_metrics(a)
    assert (m.wer, m.mer, m.wip, m.wil) == (1.0, 1.0, 0.0, 1.0)


def test_perfect_metrics():
    m = error_metrics(align_sequences("abc", "abc"))
    assert (m.wer, m.mer, m.wip, m.wil) == (0.0, 0.0, 1.0, 0.0)


def test_empty_reference_conventions():
    assert error_metrics(align_sequences([], [])).wer == 0.0
    assert error_metrics(align_sequences([], [])).wip == 1.0
    m = error_metrics(align_sequences([], ["x"]))
    assert (m.wer, m.mer, m.wip) == (1.0, 1.0, 0.0)


def test_tie_break_prefers_diagonal_then_deletion():
    # "ab" -> "b": delete a, hit b (cost 1); substitution paths cost 2
    a = align_sequences("ab", "b")
    assert [op.kind for op in a.ops] == ["del", "hit"]
    # equal-cost sub vs del+ins resolves to the substitution
    a = align_sequences("a", "b")
    assert [op.kind for op in a.ops] == ["sub"]


def test_tokenize():
    assert tokenize("가을 하늘", "word") == ["가을", "하늘"]
    assert tokenize("ab c", "character") == ["a", "b", "c"]
    assert tokenize("", "word") == []
    with pytest.raises(ValueError):
        tokenize("x", "phoneme")


@given(seqs, seqs)
def test_counts_and_cost_match_oracle(ref, hyp):
    a = align_sequences(ref, hyp)
    assert a.hits + a.substitutions + a.deletions == len(ref)
    assert a.hits + a.substitutions + a.insertions == len(hyp)
    assert a.substitutions + a.deletions + a.insertions == edit_distance(ref, hyp)
    assert apply_ops(ref, hyp, a.ops) == list(hyp)


@given(seqs, seqs)
def test_metric_ranges(ref, hyp):
    m = error_metrics(align_sequences(ref, hyp))
    assert 0 <= m.mer <= 1 and 0 <= m.wip <= 1
    assert m.wip + m.wil == pytest.approx(1.0, abs=1e-12)
    assert m.wer >= 0 and math.isfinite(m.wer)
    assert m.mer <= m.wer or not ref


@given(seqs)
def test_self_alignment_is_perfect(seq):
    m = error_metrics(align_sequences(seq, seq))
    assert m.wer == 0 and m.hits == len(seq)


@given(seqs, seqs)
def test_swap_exchanges_deletions_and_insertions(ref, hyp):
    a, b = align_sequences(ref, hyp), align_sequences(hyp, ref)
    assert (a.hits, a.substitutions) == (b.hits, b.substitutions)
    assert (a.deletions, a.insertions) == (b.insertions, b.deletions)


@given(seqs, seqs, st.permutations("abcd"))
def test_metrics_invariant_under_relabeling(ref, hyp, perm):
    relabel = dict(zip("abcd", perm))
    m = error_metrics(align_sequences(ref, hyp))
    r = error_metrics(align_sequences([relabel[c] for c in ref], [relabel[c] for c in hyp]))
    assert m == r


@given(st.lists(st.sampled_from("abcd"), min_size=1, max_size=8))
def test_identity_metrics_zero(seq):
    m = error_metrics(align_sequences(seq, seq))
    assert (m.wer, m.mer, m.wil) == (0, 0, 0)
