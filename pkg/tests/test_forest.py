import numpy as np
import pytest

from benfordgan.features import FeatureVector
from benfordgan.forest import (
    DimensionMismatchError,
    EmptyNodeError,
    FingerprintMismatchError,
    ForestHyperparams,
    LabeledSample,
    SingleClassError,
    gini_impurity,
    load_model,
    model_to_json,
    predict,
    predict_matrix,
    save_model,
    train_forest,
)


def separable_samples(rng, n=200, dim=2, margin=1.0, with_ids=True):
    """Class decided by the sign of feature 0, separated by a margin."""
    X = rng.normal(0, 1, size=(n, dim))
    y = (rng.uniform(size=n) < 0.5).astype(int)
    X[:, 0] = np.where(y == 1, np.abs(X[:, 0]) + margin, -np.abs(X[:, 0]) - margin)
    return [
        LabeledSample(
            features=X[i], label=int(y[i]), sample_id=f"s{i:04d}" if with_ids else ""
        )
        for i in range(n)
    ]


class TestGini:
    def test_balanced(self):
        assert gini_impurity([2, 2]) == 0.5

    def test_pure(self):
        assert gini_impurity([4, 0]) == 0.0

    def test_unbalanced(self):
        assert gini_impurity([1, 3]) == pytest.approx(0.375)

    def test_empty_rejected(self):
        with pytest.raises(EmptyNodeError):
            gini_impurity([0, 0])


class TestTrain:
    def test_separable_is_perfect(self, rng):
        samples = separable_samples(rng)
        model = train_forest(samples, ForestHyperparams(tree_count=25), seed=3)
        assert model.oob_accuracy == 1.0
        fresh = separable_samples(np.random.default_rng(99), n=100)
        X = np.vstack([s.features for s in fresh])
        y = np.array([s.label for s in fresh])
        labels, _ = predict_matrix(model, X)
        assert (labels == y).all()

    def test_monotone_sanity_any_tree_count(self, rng):
        samples = separable_samples(rng, n=60)
        X = np.vstack([s.features for s in samples])
        y = np.array([s.label for s in samples])
        for trees in (1, 3, 10):
            model = train_forest(samples, ForestHyperparams(tree_count=trees), seed=0)
            labels, _ = predict_matrix(model, X)
            assert (labels == y).all()

    def test_deterministic_serialization(self, rng):
        samples = separable_samples(rng)
        a = train_forest(samples, ForestHyperparams(tree_count=10), seed=7)
        b = train_forest(samples, ForestHyperparams(tree_count=10), seed=7)
        assert model_to_json(a) == model_to_json(b)

    def test_seed_changes_model(self, rng):
        samples = separable_samples(rng)
        a = train_forest(samples, ForestHyperparams(tree_count=10), seed=7)
        b = train_forest(samples, ForestHyperparams(tree_count=10), seed=8)
        assert model_to_json(a) != model_to_json(b)

    def test_single_class_rejected(self, rng):
        samples = [
            LabeledSample(features=rng.normal(size=3), label=1, sample_id=str(i))
            for i in range(10)
        ]
        with pytest.raises(SingleClassError):
            train_forest(samples)

    def test_inconsistent_dims_rejected(self, rng):
        samples = [
            LabeledSample(features=np.zeros(3), label=0),
            LabeledSample(features=np.zeros(4), label=1),
        ]
        with pytest.raises(DimensionMismatchError):
            train_forest(samples)

    def test_permutation_robustness(self, rng):
        # bootstrap is defined over samples sorted by sample_id, so row
        # order must not matter
        samples = separable_samples(rng, n=80)
        shuffled = list(samples)
        np.random.default_rng(5).shuffle(shuffled)
        a = train_forest(samples, ForestHyperparams(tree_count=8), seed=2)
        b = train_forest(shuffled, ForestHyperparams(tree_count=8), seed=2)
        assert model_to_json(a) == model_to_json(b)

    def test_root_counts_cover_bootstrap(self, rng):
        samples = separable_samples(rng, n=50)
        model = train_forest(samples, ForestHyperparams(tree_count=5), seed=1)
        for tree in model.trees:
            assert tree.class_counts[0].sum() == 50

    def test_leaf_counts_partition_parent(self, rng):
        samples = separable_samples(rng, n=50)
        model = train_forest(samples, ForestHyperparams(tree_count=5), seed=1)
        for tree in model.trees:
            for i in range(len(tree.feature)):
                if tree.feature[i] >= 0:
                    child_sum = (
                        tree.class_counts[tree.left[i]] + tree.class_counts[tree.right[i]]
                    )
                    assert (child_sum == tree.class_counts[i]).all()

    def test_duplicate_rows_mixed_labels(self):
        # identical feature rows with different labels must yield a leaf,
        # not an endless split search
        samples = [
            LabeledSample(features=np.array([1.0, 1.0]), label=i % 2, sample_id=str(i))
            for i in range(8)
        ]
        model = train_forest(samples, ForestHyperparams(tree_count=3), seed=0)
        labels, _ = predict_matrix(model, np.array([[1.0, 1.0]]))
        assert labels[0] in (0, 1)


class TestPredict:
    def test_training_points_recalled(self, rng):
        samples = separable_samples(rng, n=100)
        model = train_forest(
            samples, ForestHyperparams(tree_count=15), seed=4, config_fingerprint="fp"
        )
        for s in samples[:10]:
            fv = FeatureVector(values=s.features, config_fingerprint="fp")
            label, score = predict(model, fv)
            assert label == s.label
            assert score in (0.0, 1.0)

    def test_fingerprint_mismatch(self, rng):
        samples = separable_samples(rng, n=20)
        model = train_forest(samples, ForestHyperparams(tree_count=3), seed=0,
                             config_fingerprint="expected")
        fv = FeatureVector(values=np.zeros(2), config_fingerprint="other")
        with pytest.raises(FingerprintMismatchError):
            predict(model, fv)

    def test_dimension_mismatch(self, rng):
        samples = separable_samples(rng, n=20)
        model = train_forest(samples, ForestHyperparams(tree_count=3), seed=0)
        fv = FeatureVector(values=np.zeros(5), config_fingerprint="")
        with pytest.raises(DimensionMismatchError):
            predict(model, fv)

    def test_score_is_vote_fraction(self, rng):
        samples = separable_samples(rng, n=100)
        model = train_forest(samples, ForestHyperparams(tree_count=10), seed=4)
        _, scores = predict_matrix(model, np.array([[5.0, 0.0], [-5.0, 0.0]]))
        assert scores[0] == 1.0 and scores[1] == 0.0


class TestModelFile:
    def test_round_trip_preserves_predictions(self, rng, tmp_path):
        samples = separable_samples(rng)
        model = train_forest(samples, ForestHyperparams(tree_count=10), seed=6,
                             config_fingerprint="abc", feature_config={"bases": [10]})
        path = tmp_path / "model.json"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.config_fingerprint == "abc"
        assert loaded.feature_config == {"bases": [10]}
        assert loaded.oob_accuracy == model.oob_accuracy
        X = rng.normal(size=(1000, 2))
        la, sa = predict_matrix(model, X)
        lb, sb = predict_matrix(loaded, X)
        assert np.array_equal(la, lb) and np.array_equal(sa, sb)

    def test_save_is_byte_stable(self, rng, tmp_path):
        samples = separable_samples(rng, n=40)
        model = train_forest(samples, ForestHyperparams(tree_count=4), seed=6)
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        save_model(model, a)
        save_model(model, b)
        assert a.read_bytes() == b.read_bytes()

    def test_bad_schema_rejected(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text('{"schema_version": 99}')
        with pytest.raises(ValueError):
            load_model(path)
