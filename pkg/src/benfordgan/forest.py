"""Random Forest classifier: CART trees with Gini splits, bootstrap
resampling, majority vote.

Everything is deterministic given (samples, hyperparams, seed). Bootstrap
and feature-subset draws come from per-tree Philox streams; resampling is
defined over samples in canonical order (stable sort by sample_id), so
shuffling the input rows does not change the model. Ties are broken the
same way everywhere: lowest feature index, then lowest threshold, and
class 0 wins vote ties.
"""

import json
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from ._version import __version__
from .features import FeatureVector
from .streams import DOMAIN_TREE, stream


class SingleClassError(ValueError):
    """Training set contains only one class."""


class DimensionMismatchError(ValueError):
    """Feature vectors of inconsistent length."""


class FingerprintMismatchError(ValueError):
    """Features came from a different configuration than the model."""


class EmptyNodeError(ValueError):
    """Gini impurity of a node with no samples."""


@dataclass(frozen=True)
class LabeledSample:
    """One training/test sample: features, class label, dataset group.

    ``sample_id`` (typically the image path) defines the canonical sample
    order used for bootstrap draws; leave it empty to keep input order.
    """

    features: np.ndarray
    label: int
    group: str = ""
    sample_id: str = ""

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")


@dataclass(frozen=True)
class ForestHyperparams:
    tree_count: int = 100
    max_features: str = "sqrt"
    min_samples_split: int = 2
    bootstrap: bool = True

    def to_dict(self) -> dict:
        return {
            "tree_count": self.tree_count,
            "max_features": self.max_features,
            "min_samples_split": self.min_samples_split,
            "bootstrap": self.bootstrap,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ForestHyperparams":
        return cls(**d)


@dataclass
class Tree:
    """Flattened binary tree in preorder. feature = -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    class_counts: np.ndarray

    def votes(self, X: np.ndarray) -> np.ndarray:
        """Per-row leaf vote: majority class of the reached leaf, ties to 0."""
        pos = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            feat = self.feature[pos]
            active = feat >= 0
            if not active.any():
                break
            r = rows[active]
            p = pos[active]
            go_left = X[r, feat[active]] <= self.threshold[p]
            pos[r] = np.where(go_left, self.left[p], self.right[p])
        counts = self.class_counts[pos]
        return (counts[:, 1] > counts[:, 0]).astype(np.int64)


@dataclass
class ForestModel:
    trees: List[Tree]
    hyperparams: ForestHyperparams
    seed: int
    config_fingerprint: str = ""
    n_features: int = 0
    feature_config: Optional[dict] = None
    oob_accuracy: Optional[float] = None


def gini_impurity(class_counts) -> float:
    """1 - sum of squared class fractions."""
    counts = np.asarray(class_counts, dtype=np.float64)
    if (counts < 0).any():
        raise ValueError("negative class count")
    total = counts.sum()
    if total == 0:
        raise EmptyNodeError("impurity of an empty node")
    frac = counts / total
    return float(1.0 - (frac @ frac))


def _best_split(X, y, idx, feats, parent_gini):
    """Best (feature, threshold, decrease) over candidate features.

    Thresholds are midpoints of consecutive distinct sorted values; the
    scan keeps the first strictly-better candidate, so with features
    examined in ascending order ties resolve to the lowest feature index
    and then the lowest threshold.
    """
    n = len(idx)
    labels = y[idx]
    total_one = int(labels.sum())
    best = None
    for f in feats:
        xv = X[idx, f]
        order = np.argsort(xv, kind="stable")
        xs = xv[order]
        boundary = xs[1:] != xs[:-1]
        if not boundary.any():
            continue
        ones_left = np.cumsum(labels[order])[:-1].astype(np.float64)
        n_left = np.arange(1, n, dtype=np.float64)
        n_right = n - n_left
        zeros_left = n_left - ones_left
        ones_right = total_one - ones_left
        zeros_right = n_right - ones_right
        gini_left = 1.0 - (zeros_left**2 + ones_left**2) / n_left**2
        gini_right = 1.0 - (zeros_right**2 + ones_right**2) / n_right**2
        weighted = (n_left * gini_left + n_right * gini_right) / n
        decrease = np.where(boundary, parent_gini - weighted, -np.inf)
        i = int(np.argmax(decrease))
        if decrease[i] <= 0:
            continue
        if best is None or decrease[i] > best[2]:
            best = (f, (xs[i] + xs[i + 1]) / 2.0, float(decrease[i]))
    return best


def _grow_tree(X, y, sample_idx, rng, max_feat, min_split):
    feature, threshold, left, right, counts = [], [], [], [], []

    def build(idx):
        node = len(feature)
        c = np.bincount(y[idx], minlength=2)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append((int(c[0]), int(c[1])))
        if c[0] == 0 or c[1] == 0 or len(idx) < min_split:
            return node
        feats = np.sort(rng.choice(X.shape[1], size=max_feat, replace=False))
        split = _best_split(X, y, idx, feats, gini_impurity(c))
        if split is None:
            return node
        f, thr, _ = split
        feature[node] = f
        threshold[node] = thr
        mask = X[idx, f] <= thr
        left[node] = build(idx[mask])
        right[node] = build(idx[~mask])
        return node

    build(sample_idx)
    return Tree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        class_counts=np.asarray(counts, dtype=np.int64),
    )


def train_forest(
    samples,
    hyperparams: ForestHyperparams = ForestHyperparams(),
    seed: int = 0,
    config_fingerprint: str = "",
    feature_config: Optional[dict] = None,
) -> ForestModel:
    """Train the ensemble.

    Tree t draws its bootstrap resample and every node's candidate-feature
    subset (ceil(sqrt(dim)) features, without replacement, in depth-first
    node order) from a Philox stream keyed by (seed, tree index). Out-of-bag
    accuracy is recorded when bootstrap sampling is on.
    """
    samples = list(samples)
    if len(samples) < 2:
        raise ValueError("need at least 2 samples")
    dim = len(samples[0].features)
    if any(len(s.features) != dim for s in samples):
        raise DimensionMismatchError("samples have inconsistent feature lengths")
    order = sorted(range(len(samples)), key=lambda i: samples[i].sample_id)
    X = np.asarray([samples[i].features for i in order], dtype=np.float64)
    y = np.asarray([samples[i].label for i in order], dtype=np.int64)
    if len(np.unique(y)) < 2:
        raise SingleClassError("training set contains a single class")
    n = len(y)
    max_feat = int(np.ceil(np.sqrt(dim)))
    trees = []
    oob_votes = np.zeros((n, 2), dtype=np.int64)
    for t in range(hyperparams.tree_count):
        rng = stream(seed, DOMAIN_TREE, t)
        if hyperparams.bootstrap:
            boot = rng.integers(0, n, size=n)
        else:
            boot = np.arange(n)
        tree = _grow_tree(X, y, boot, rng, max_feat, hyperparams.min_samples_split)
        trees.append(tree)
        if hyperparams.bootstrap:
            out = np.setdiff1d(np.arange(n), boot, assume_unique=False)
            if out.size:
                votes = tree.votes(X[out])
                oob_votes[out, 0] += votes == 0
                oob_votes[out, 1] += votes == 1
    oob_accuracy = None
    if hyperparams.bootstrap:
        seen = oob_votes.sum(axis=1) > 0
        if seen.any():
            pred = (oob_votes[seen, 1] > oob_votes[seen, 0]).astype(np.int64)
            oob_accuracy = float((pred == y[seen]).mean())
    return ForestModel(
        trees=trees,
        hyperparams=hyperparams,
        seed=seed,
        config_fingerprint=config_fingerprint,
        n_features=dim,
        feature_config=feature_config,
        oob_accuracy=oob_accuracy,
    )


def predict_matrix(model: ForestModel, X: np.ndarray):
    """(labels, scores) for a feature matrix already known to match the model."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise DimensionMismatchError(
            f"expected {model.n_features} features, got shape {X.shape}"
        )
    votes = np.zeros(len(X), dtype=np.int64)
    for tree in model.trees:
        votes += tree.votes(X)
    scores = votes / len(model.trees)
    labels = (votes * 2 > len(model.trees)).astype(np.int64)
    return labels, scores


def predict(model: ForestModel, features: FeatureVector):
    """Majority vote over the trees: (label, fraction of trees voting 1)."""
    if features.config_fingerprint != model.config_fingerprint:
        raise FingerprintMismatchError(
            f"model fingerprint {model.config_fingerprint!r} != "
            f"features fingerprint {features.config_fingerprint!r}"
        )
    if len(features.values) != model.n_features:
        raise DimensionMismatchError(
            f"expected {model.n_features} features, got {len(features.values)}"
        )
    labels, scores = predict_matrix(model, features.values[None, :])
    return int(labels[0]), float(scores[0])


# ---------------------------------------------------------------------------
# Model file

def _tree_to_json(tree: Tree) -> dict:
    nodes = []
    for i in range(len(tree.feature)):
        if tree.feature[i] < 0:
            nodes.append(
                {
                    "kind": "leaf",
                    "feature": None,
                    "threshold": None,
                    "left": None,
                    "right": None,
                    "class_counts": [int(tree.class_counts[i, 0]), int(tree.class_counts[i, 1])],
                }
            )
        else:
            nodes.append(
                {
                    "kind": "split",
                    "feature": int(tree.feature[i]),
                    "threshold": float(tree.threshold[i]),
                    "left": int(tree.left[i]),
                    "right": int(tree.right[i]),
                    "class_counts": [int(tree.class_counts[i, 0]), int(tree.class_counts[i, 1])],
                }
            )
    return {"nodes": nodes}


def _tree_from_json(data: dict) -> Tree:
    nodes = data["nodes"]
    feature = np.asarray(
        [n["feature"] if n["kind"] == "split" else -1 for n in nodes], dtype=np.int64
    )
    threshold = np.asarray(
        [n["threshold"] if n["kind"] == "split" else 0.0 for n in nodes], dtype=np.float64
    )
    left = np.asarray([n["left"] if n["kind"] == "split" else -1 for n in nodes], dtype=np.int64)
    right = np.asarray([n["right"] if n["kind"] == "split" else -1 for n in nodes], dtype=np.int64)
    counts = np.asarray([n["class_counts"] for n in nodes], dtype=np.int64)
    return Tree(feature=feature, threshold=threshold, left=left, right=right, class_counts=counts)


def model_to_json(model: ForestModel, run_config: Optional[dict] = None) -> str:
    doc = {
        "schema_version": 1,
        "tool_version": __version__,
        "hyperparams": model.hyperparams.to_dict(),
        "seed": model.seed,
        "config_fingerprint": model.config_fingerprint,
        "feature_config": model.feature_config,
        "n_features": model.n_features,
        "oob_accuracy": model.oob_accuracy,
        "run_config": run_config,
        "trees": [_tree_to_json(t) for t in model.trees],
    }
    return json.dumps(doc, sort_keys=True)


def save_model(model: ForestModel, path, run_config: Optional[dict] = None):
    with open(path, "w", newline="") as fh:
        fh.write(model_to_json(model, run_config) + "\n")
    return path


def load_model(path) -> ForestModel:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema_version") != 1:
        raise ValueError(f"{path}: unsupported model schema {doc.get('schema_version')}")
    return ForestModel(
        trees=[_tree_from_json(t) for t in doc["trees"]],
        hyperparams=ForestHyperparams.from_dict(doc["hyperparams"]),
        seed=doc["seed"],
        config_fingerprint=doc["config_fingerprint"],
        n_features=doc["n_features"],
        feature_config=doc.get("feature_config"),
        oob_accuracy=doc.get("oob_accuracy"),
    )
