"""Random-forest severity classifier, evaluation metrics and permutation
feature importance.

Trees are stored as flat node arrays (feature, threshold, left, right,
class distribution) and the whole forest is traversed at once with numpy,
which keeps prediction cheap enough for repeated permutation scoring.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

N_CLASSES = 3
MODEL_FORMAT = "srfeat-forest/1"


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 300
    max_depth: int = 12
    min_leaf: int = 2
    # "sqrt" or a fraction of the feature count; sqrt(39) = 6 candidates lets
    # nuisance columns isolate minority-class samples, a third does not
    max_features: str | float = 1 / 3
    class_weight: bool = True

    def features_per_split(self, n_features: int) -> int:
        if self.max_features == "sqrt":
            k = int(round(math.sqrt(n_features)))
        else:
            k = int(round(float(self.max_features) * n_features))
        return min(n_features, max(1, k))


@dataclass
class _TreeBuilder:
    feature: list = field(default_factory=list)
    threshold: list = field(default_factory=list)
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    value: list = field(default_factory=list)

    def add(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append([0.0] * N_CLASSES)
        return len(self.feature) - 1


def _best_split(X, Wy, feats, min_leaf):
    """Lowest weighted-Gini split over ``feats``; None if no valid split.

    ``Wy`` is the (n, classes) matrix of sample weights spread over one-hot
    labels. Ties keep the first candidate in (feature order, position).
    """
    n = X.shape[0]
    cols = X[:, feats]
    order = np.argsort(cols, axis=0, kind="stable")
    sorted_vals = np.take_along_axis(cols, order, axis=0)
    cum = np.cumsum(Wy[order], axis=0)  # (n, k, classes)
    total = cum[-1]  # (k, classes)
    left = cum[:-1]
    right = total[None, :, :] - left
    wl = left.sum(axis=2)
    wr = right.sum(axis=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        purity = (left ** 2).sum(axis=2) / wl + (right ** 2).sum(axis=2) / wr
    valid = sorted_vals[:-1] < sorted_vals[1:]
    pos = np.arange(1, n)[:, None]
    valid &= (pos >= min_leaf) & (n - pos >= min_leaf) & (wl > 0) & (wr > 0)
    if not valid.any():
        return None
    purity = np.where(valid, purity, -np.inf)
    # argmax over a (k, n-1) layout scans features first, then positions
    flat = int(np.argmax(purity.T))
    f_idx, p = divmod(flat, n - 1)
    parent = float((total[f_idx] ** 2).sum() / total[f_idx].sum())
    if purity[p, f_idx] <= parent + 1e-12:
        return None
    lo, hi = sorted_vals[p, f_idx], sorted_vals[p + 1, f_idx]
    thr = (lo + hi) / 2.0
    if not (lo <= thr < hi):
        thr = lo
    return int(feats[f_idx]), float(thr)


def _grow_tree(X, y, w, config: ForestConfig, rng: np.random.Generator) -> _TreeBuilder:
    n_features = X.shape[1]
    k = config.features_per_split(n_features)
    onehot = np.eye(N_CLASSES)[y]
    Wy = onehot * w[:, None]
    tree = _TreeBuilder()
    root = tree.add()
    stack = [(root, np.arange(X.shape[0]), 0)]
    while stack:
        node, idx, depth = stack.pop()
        counts = Wy[idx].sum(axis=0)
        tree.value[node] = (counts / counts.sum()).tolist()
        if depth >= config.max_depth or idx.size < 2 * config.min_leaf or np.count_nonzero(counts) <= 1:
            continue
        # sampled features that cannot improve the node do not end it: further
        # blocks of k features are drawn until one splits or all are exhausted
        perm = rng.permutation(n_features)
        split = None
        for start in range(0, n_features, k):
            split = _best_split(X[idx], Wy[idx], perm[start:start + k], config.min_leaf)
            if split is not None:
                break
        if split is None:
            continue
        f, thr = split
        go_left = X[idx, f] <= thr
        left_id, right_id = tree.add(), tree.add()
        tree.feature[node] = f
        tree.threshold[node] = thr
        tree.left[node] = left_id
        tree.right[node] = right_id
        # push right first so nodes are numbered depth-first, left to right
        stack.append((right_id, idx[~go_left], depth + 1))
        stack.append((left_id, idx[go_left], depth + 1))
    return tree


class ForestModel:
    """Trained forest bound to a feature manifest digest."""

    def __init__(self, trees: list[dict], config: ForestConfig, seed: int, feature_names: Sequence[str],
                 manifest_digest: str):
        self.trees = trees
        self.config = config
        self.seed = seed
        self.feature_names = tuple(feature_names)
        self.manifest_digest = manifest_digest
        self._pack()

    def _pack(self):
        offsets, feat, thr, left, right, value = [], [], [], [], [], []
        base = 0
        for t in self.trees:
            offsets.append(base)
            feat.extend(t["feature"])
            thr.extend(t["threshold"])
            left.extend(base + c if c >= 0 else -1 for c in t["left"])
            right.extend(base + c if c >= 0 else -1 for c in t["right"])
            value.extend(t["value"])
            base += len(t["feature"])
        self._roots = np.array(offsets, dtype=np.int64)
        self._feature = np.array(feat, dtype=np.int64)
        self._threshold = np.array(thr, dtype=float)
        self._left = np.array(left, dtype=np.int64)
        self._right = np.array(right, dtype=np.int64)
        self._value = np.array(value, dtype=float).reshape(-1, N_CLASSES)
        n_features = len(self.feature_names)
        if np.any(self._feature >= n_features):
            raise ModelError("tree references a feature index outside the manifest")
        leaf_sums = self._value[self._feature < 0].sum(axis=1)
        if np.any(np.abs(leaf_sums - 1.0) > 1e-9):
            raise ModelError("leaf class distributions must sum to 1")
        self._depth = max(self._tree_depth(t) for t in self.trees)

    @staticmethod
    def _tree_depth(tree: dict) -> int:
        depth, stack = 0, [(0, 0)]
        while stack:
            node, d = stack.pop()
            depth = max(depth, d)
            if tree["feature"][node] >= 0:
                stack.append((tree["left"][node], d + 1))
                stack.append((tree["right"][node], d + 1))
        return depth

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ModelError(f"row length {X.shape[1]} != model feature count {self.n_features}")
        n = X.shape[0]
        node = np.repeat(self._roots[:, None], n, axis=1)
        rows = np.broadcast_to(np.arange(n)[None, :], node.shape)
        for _ in range(self._depth):
            f = self._feature[node]
            internal = f >= 0
            x = X[rows, np.where(internal, f, 0)]
            nxt = np.where(x <= self._threshold[node], self._left[node], self._right[node])
            node = np.where(internal, nxt, node)
        return self._value[node].mean(axis=0)

    def predict(self, X) -> np.ndarray:
        # argmax returns the first maximum, i.e. the lowest class index on ties
        return np.argmax(self.predict_proba(X), axis=1)

    def to_json(self) -> str:
        obj = {
            "format": MODEL_FORMAT,
            "config": asdict(self.config),
            "seed": self.seed,
            "manifest_digest": self.manifest_digest,
            "feature_names": list(self.feature_names),
            "trees": self.trees,
        }
        return json.dumps(obj, separators=(",", ":")) + "\n"

    @classmethod
    def from_json(cls, text: str) -> ForestModel:
        obj = json.loads(text)
        if obj.get("format") != MODEL_FORMAT:
            raise ModelError(f"unsupported model format {obj.get('format')!r}")
        return cls(obj["trees"], ForestConfig(**obj["config"]), obj["seed"], obj["feature_names"],
                   obj["manifest_digest"])

    def check_manifest(self, digest: str):
        if digest != self.manifest_digest:
            raise ModelError("feature manifest hash differs from the one the model was trained on")


def class_weights(labels: np.ndarray) -> np.ndarray:
    """Inverse-frequency weights n / (K * n_c) over the classes present."""
    counts = np.bincount(labels, minlength=N_CLASSES).astype(float)
    present = counts > 0
    weights = np.zeros(N_CLASSES)
    weights[present] = labels.size / (present.sum() * counts[present])
    return weights


def train(matrix, labels, config: ForestConfig | None = None, seed: int = 0, *,
          feature_names: Sequence[str] | None = None, manifest_digest: str = "") -> ForestModel:
    """Fit a forest; tree ``t`` draws its bootstrap and feature subsets from
    ``default_rng(seed + t)``."""
    config = config or ForestConfig()
    X = np.asarray(matrix, dtype=float)
    y = np.asarray(labels, dtype=int)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ModelError("matrix and labels disagree in length")
    if X.shape[0] == 0:
        raise ModelError("cannot train on an empty matrix")
    if not np.all(np.isfinite(X)):
        raise ModelError("feature matrix contains non-finite values")
    if np.any((y < 0) | (y >= N_CLASSES)):
        raise ModelError("labels must be severity levels 0, 1 or 2")
    if np.unique(y).size < 2:
        raise ModelError("training data must contain at least two classes")
    names = tuple(feature_names) if feature_names is not None else tuple(f"f{k}" for k in range(X.shape[1]))
    if len(names) != X.shape[1]:
        raise ModelError("feature_names length differs from matrix width")

    sample_w = class_weights(y)[y] if config.class_weight else np.ones(y.size)
    trees = []
    for t in range(config.n_trees):
        rng = np.random.default_rng(seed + t)
        boot = rng.integers(0, y.size, size=y.size)
        tb = _grow_tree(X[boot], y[boot], sample_w[boot], config, rng)
        trees.append({"feature": tb.feature, "threshold": tb.threshold, "left": tb.left, "right": tb.right,
                      "value": tb.value})
    return ForestModel(trees, config, seed, names, manifest_digest)


def predict(model: ForestModel, feature_row) -> tuple[int, np.ndarray]:
    row = np.asarray(feature_row, dtype=float)
    if row.ndim != 1 or row.size != model.n_features:
        raise ModelError(f"row length {row.size} != manifest length {model.n_features}")
    scores = model.predict_proba(row)[0]
    return int(np.argmax(scores)), scores


# -- evaluation -------------------------------------------------------------

@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    balanced_accuracy: float
    confusion: tuple[tuple[int, ...], ...]  # rows ground truth, columns prediction
    per_class_recall: tuple[float, ...]  # nan for classes absent from ground truth

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "balanced_accuracy": self.balanced_accuracy,
            "confusion": [list(r) for r in self.confusion],
            "per_class_recall": [None if math.isnan(r) else r for r in self.per_class_recall],
        }

    def confusion_table(self) -> str:
        """Confusion matrix as text cells ``percent (count/total)``."""
        header = ["GT \\ Pred", *(str(c) for c in range(N_CLASSES))]
        lines = [" | ".join(header)]
        for gt, row in enumerate(self.confusion):
            total = sum(row)
            cells = []
            for c in row:
                pct = 100.0 * c / total if total else 0.0
                cells.append(f"{pct:.2f}% ({c}/{total})")
            lines.append(" | ".join([str(gt), *cells]))
        return "\n".join(lines) + "\n"


def confusion_matrix(predictions, ground_truth) -> np.ndarray:
    cm = np.zeros((N_CLASSES, N_CLASSES), dtype=int)
    np.add.at(cm, (np.asarray(ground_truth, dtype=int), np.asarray(predictions, dtype=int)), 1)
    return cm


def evaluate(predictions, ground_truth) -> EvalReport:
    pred = np.asarray(predictions, dtype=int)
    truth = np.asarray(ground_truth, dtype=int)
    if pred.shape != truth.shape:
        raise ValueError(f"{pred.size} predictions for {truth.size} ground-truth labels")
    if truth.size == 0:
        raise ValueError("evaluate needs at least one item")
    cm = confusion_matrix(pred, truth)
    support = cm.sum(axis=1)
    recall = tuple(float(cm[c, c] / support[c]) if support[c] else math.nan for c in range(N_CLASSES))
    present = [r for r in recall if not math.isnan(r)]
    return EvalReport(
        accuracy=float(np.trace(cm) / truth.size),
        balanced_accuracy=math.fsum(present) / len(present),
        confusion=tuple(tuple(int(v) for v in row) for row in cm),
        per_class_recall=recall,
    )


def balanced_accuracy(predictions, ground_truth) -> float:
    return evaluate(predictions, ground_truth).balanced_accuracy


# -- permutation importance ---------------------------------------------------

@dataclass(frozen=True)
class ImportanceReport:
    baseline: float
    entries: tuple[tuple[str, float, float], ...]  # (name, mean drop, std), descending mean

    def ranking(self) -> list[str]:
        return [name for name, _, _ in self.entries]

    def to_csv(self) -> str:
        lines = ["rank,feature,importance_mean,importance_std"]
        for rank, (name, mean, std) in enumerate(self.entries, start=1):
            lines.append(f"{rank},{name},{mean:.12g},{std:.12g}")
        return "\n".join(lines) + "\n"


def permutation_importance(model: ForestModel, matrix, labels, repeats: int = 5, seed: int = 0,
                           feature_names: Sequence[str] | None = None) -> ImportanceReport:
    """Drop in balanced accuracy when one column is shuffled.

    Shuffle ``r`` of feature ``j`` uses ``default_rng([seed, j, r])``, so a run
    with fewer repeats sees a prefix of the permutations of a longer run.
    """
    X = np.asarray(matrix, dtype=float)
    y = np.asarray(labels, dtype=int)
    if X.shape[0] == 0:
        raise ValueError("permutation importance needs a non-empty matrix")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    names = tuple(feature_names) if feature_names is not None else model.feature_names
    baseline = balanced_accuracy(model.predict(X), y)
    results = []
    for j in range(X.shape[1]):
        scores = []
        for r in range(repeats):
            rng = np.random.default_rng([seed, j, r])
            Xp = X.copy()
            Xp[:, j] = X[rng.permutation(X.shape[0]), j]
            scores.append(balanced_accuracy(model.predict(Xp), y))
        drops = baseline - np.array(scores)
        results.append((names[j], float(drops.mean()), float(drops.std())))
    order = sorted(range(len(results)), key=lambda k: -results[k][1])
    return ImportanceReport(baseline, tuple(results[k] for k in order))
