import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import PUBLISHED_SCORES, PUBLISHED_CONFUSION, expand_confusion
from srfeat.forest import (
    ForestConfig,
    ForestModel,
    ModelError,
    balanced_accuracy,
    class_weights,
    evaluate,
    permutation_importance,
    predict,
    train,
)

SMALL = ForestConfig(n_trees=25, max_depth=8)


def _separable(n=200, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(n, 2))
    y = (X[:, 0] + X[:, 1] > 0).astype(int) + (X[:, 0] > 0.6).astype(int)
    return X, y


def test_separable_training_accuracy():
    X, y = _separable()
    model = train(X, y, ForestConfig(n_trees=50, max_depth=20, min_leaf=1), seed=1)
    assert (model.predict(X) == y).mean() == 1.0


def test_deterministic_training():
    X, y = _separable()
    probe = np.random.default_rng(9).uniform(-1, 1, size=(50, 2))
    a = train(X, y, SMALL, seed=4)
    b = train(X, y, SMALL, seed=4)
    assert np.array_equal(a.predict_proba(probe), b.predict_proba(probe))
    assert a.to_json() == b.to_json()


def test_constant_features_predict_majority():
    X = np.ones((30, 3))
    y = np.array([0] * 5 + [1] * 20 + [2] * 5)
    model = train(X, y, ForestConfig(n_trees=10, class_weight=False), seed=0)
    assert set(model.predict(np.random.default_rng(0).normal(size=(10, 3))).tolist()) == {1}


def _one_tree(value_leaf_left, value_leaf_right):
    tree = {
        "feature": [0, -1, 1, -1, -1],
        "threshold": [0.5, 0.0, 2.0, 0.0, 0.0],
        "left": [1, -1, 3, -1, -1],
        "right": [2, -1, 4, -1, -1],
        "value": [[0, 0, 0], value_leaf_left, [0, 0, 0], [0, 1, 0], value_leaf_right],
    }
    return ForestModel([tree], ForestConfig(n_trees=1), 0, ["a", "b"], "d")


def test_hand_traced_tree():
    model = _one_tree([1, 0, 0], [0, 0, 1])
    # x0 <= 0.5 -> leaf 1 (class 0); else x1 <= 2 -> class 1, else class 2
    assert predict(model, [0.5, 9])[0] == 0
    assert predict(model, [0.6, 2.0])[0] == 1
    assert predict(model, [0.6, 2.1])[0] == 2


def test_tie_goes_to_lower_class():
    model = _one_tree([0.5, 0, 0.5], [0, 0, 1])
    label, scores = predict(model, [0.0, 0.0])
    assert label == 0 and scores[0] == scores[2]


def test_predict_length_mismatch():
    with pytest.raises(ModelError):
        predict(_one_tree([1, 0, 0], [0, 0, 1]), [1.0, 2.0, 3.0])


def test_bad_leaf_rejected():
    with pytest.raises(ModelError):
        _one_tree([0.5, 0, 0], [0, 0, 1])


def test_training_errors():
    X = np.zeros((4, 2))
    with pytest.raises(ModelError, match="two classes"):
        train(X, [1, 1, 1, 1])
    with pytest.raises(ModelError):
        train(np.array([[np.nan, 0], [0, 0]]), [0, 1])
    with pytest.raises(ModelError):
        train(X, [0, 1, 3, 1])


def test_model_json_roundtrip():
    X, y = _separable()
    model = train(X, y, SMALL, seed=2, feature_names=["p", "q"], manifest_digest="abc")
    again = ForestModel.from_json(model.to_json())
    assert again.feature_names == ("p", "q")
    assert np.array_equal(again.predict_proba(X), model.predict_proba(X))
    again.check_manifest("abc")
    with pytest.raises(ModelError, match="manifest"):
        again.check_manifest("xyz")


def test_class_weights():
    w = class_weights(np.array([0, 1, 1, 1]))
    assert w.tolist() == pytest.approx([2.0, 2 / 3, 0.0])


@pytest.mark.parametrize("key", "abc")
def test_evaluate_published_matrices(key):
    report = evaluate(*expand_confusion(PUBLISHED_CONFUSION[key]))
    ba, acc = PUBLISHED_SCORES[key]
    assert 100 * report.balanced_accuracy == pytest.approx(ba, abs=0.01)
    assert 100 * report.accuracy == pytest.approx(acc, abs=0.01)
    assert report.confusion == PUBLISHED_CONFUSION[key]


def test_confusion_table_layout():
    report = evaluate(*expand_confusion(PUBLISHED_CONFUSION["c"]))
    lines = report.confusion_table().splitlines()
    assert lines[0] == "GT \\ Pred | 0 | 1 | 2"
    assert lines[1] == "0 | 81.48% (44/54) | 18.52% (10/54) | 0.00% (0/54)"
    assert lines[3] == "2 | 0.00% (0/18) | 0.00% (0/18) | 100.00% (18/18)"


def test_evaluate_perfect_and_errors():
    r = evaluate([0, 1, 2, 1], [0, 1, 2, 1])
    assert r.accuracy == r.balanced_accuracy == 1.0
    with pytest.raises(ValueError):
        evaluate([0, 1], [0])


def test_absent_class_excluded_from_macro_recall():
    r = evaluate([0, 1, 1], [0, 1, 0])
    assert math.isnan(r.per_class_recall[2])
    assert r.balanced_accuracy == pytest.approx(0.75)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)), min_size=1, max_size=60))
def test_balanced_accuracy_bounds(pairs):
    pred, truth = zip(*pairs)
    r = evaluate(pred, truth)
    assert 0 <= r.balanced_accuracy <= 1 and 0 <= r.accuracy <= 1
    assert sum(map(sum, r.confusion)) == len(pairs)


def _planted(n=500, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 5))
    y = np.digitize(X[:, 2], [-0.5, 0.7])
    return X, y


def test_importance_planted_first_and_independent_near_zero():
    X, y = _planted()
    model = train(X, y, SMALL, seed=0)
    rep = permutation_importance(model, X, y, repeats=10, seed=0)
    assert rep.ranking()[0] == "f2"
    for name, mean, _ in rep.entries:
        if name != "f2":
            assert abs(mean) < 0.05, name


def test_importance_repeats_prefix_stability():
    X, y = _planted(300, seed=1)
    model = train(X, y, SMALL, seed=0)
    one = permutation_importance(model, X, y, repeats=1, seed=5)
    ten = permutation_importance(model, X, y, repeats=10, seed=5)
    assert one.ranking()[0] == ten.ranking()[0]
    assert np.sign(one.entries[0][1]) == np.sign(ten.entries[0][1])
    assert permutation_importance(model, X, y, repeats=3, seed=5) == permutation_importance(model, X, y, repeats=3,
                                                                                             seed=5)


def test_duplicated_column_is_deterministic():
    X, y = _planted(200)
    X2 = np.hstack([X, X[:, [2]]])
    a = train(X2, y, SMALL, seed=3)
    b = train(X2, y, SMALL, seed=3)
    assert balanced_accuracy(a.predict(X2), y) == balanced_accuracy(b.predict(X2), y)


def test_features_per_split():
    assert ForestConfig(max_features="sqrt").features_per_split(39) == 6
    assert ForestConfig().features_per_split(39) == 13
    assert ForestConfig(max_features=1.0).features_per_split(5) == 5


@given(st.lists(st.integers(0, 2), min_size=3, max_size=80), st.integers(0, 2))
def test_majority_predictor_scores_one_third(truth, majority):
    truth = list(truth) + [0, 1, 2]
    assert balanced_accuracy([majority] * len(truth), truth) == pytest.approx(1 / 3, abs=1e-12)
