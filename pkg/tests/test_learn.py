import math
from dataclasses import replace

import numpy as np
import pytest

from waveshape_nilm.errors import ArgumentError, LoadError, SizeError
from waveshape_nilm.learn import (
    Algorithm,
    ClassifierParams,
    Dataset,
    EaState,
    LabeledExample,
    SplitDataset,
    accuracy,
    confusion_matrix,
    ea_refine,
    ea_step,
    model_from_dict,
    predict,
    predict_many,
    samme_alpha,
    split,
    train_adaboost,
    train_ann,
    train_model,
    train_svm,
)
from waveshape_nilm.learn.dataset import allocate, check_fractions
from waveshape_nilm.learn.svm import rbf_kernel, smo

XOR = Dataset(X=[[0, 0], [0, 1], [1, 0], [1, 1]], y=[0, 1, 1, 0])


def only_train(data: Dataset) -> SplitDataset:
    return split(data, (1.0, 0.0, 0.0), seed=0)


def test_dataset_validates_labels():
    with pytest.raises(SizeError):
        Dataset(X=np.zeros((3, 2)), y=[0, 1])
    with pytest.raises(ArgumentError):
        Dataset(X=np.zeros((2, 2)), y=[0, 3], n_classes=2)
    assert Dataset(X=np.zeros((2, 2)), y=[0, 3]).n_classes == 4


def test_dataset_from_examples():
    data = Dataset.from_examples([LabeledExample(x=[1.0, 2.0], y=1), LabeledExample(x=[3.0, 4.0], y=0)])
    assert data.X.shape == (2, 2)
    assert data.n_classes == 2
    with pytest.raises(ArgumentError):
        Dataset.from_examples([LabeledExample(x=[1.0], y=0), LabeledExample(x=[1.0, 2.0], y=0)])


def test_allocate_largest_remainder():
    assert allocate(50, (0.45, 0.10, 0.45)).tolist() == [23, 5, 22]
    assert allocate(7, (1.0, 0.0, 0.0)).tolist() == [7, 0, 0]


def test_check_fractions():
    assert check_fractions([0.5, 0.25, 0.25]) == (0.5, 0.25, 0.25)
    with pytest.raises(ArgumentError):
        check_fractions([0.5, 0.5])
    with pytest.raises(ArgumentError):
        check_fractions([0.5, 0.2, 0.2])
    with pytest.raises(ArgumentError):
        check_fractions([0.0, 0.5, 0.5])


def test_split_is_stratified_and_disjoint():
    X = np.arange(100, dtype=float).reshape(100, 1)
    data = Dataset(X=X, y=np.repeat([0, 1], 50))
    parts = split(data, seed=3)
    assert (len(parts.train), len(parts.cv), len(parts.test)) == (46, 10, 44)
    assert np.bincount(parts.train.y).tolist() == [23, 23]
    ids = np.concatenate([parts.train.X[:, 0], parts.cv.X[:, 0], parts.test.X[:, 0]])
    assert sorted(ids.tolist()) == list(range(100))
    again = split(data, seed=3)
    assert np.array_equal(again.test.X, parts.test.X)
    assert not np.array_equal(split(data, seed=4).test.X, parts.test.X)


def test_split_falls_back_for_tiny_classes(caplog):
    data = Dataset(X=np.arange(10, dtype=float).reshape(10, 1), y=[0] * 9 + [1])
    parts = split(data, seed=0)
    assert len(parts.train) + len(parts.cv) + len(parts.test) == 10
    assert "unstratified" in caplog.text
    assert parts.n_classes == 2


def test_ann_learns_xor():
    solved = 0
    for seed in range(10):
        model = train_ann(only_train(XOR), n_h=2, seed=seed)
        solved += accuracy(model, XOR) == 1.0
    assert solved >= 8


def test_ann_separates_blobs(blob_split):
    model = train_ann(blob_split, n_h=5, seed=0)
    assert model.layer_sizes == [4, 5, 3]
    assert accuracy(model, blob_split.test) == 1.0


def test_ann_rejects_bad_arguments(blob_split):
    with pytest.raises(ArgumentError):
        train_ann(blob_split, n_h=0, seed=0)
    empty = Dataset(X=np.zeros((0, 4)), y=[], n_classes=3)
    with pytest.raises(SizeError):
        train_ann(SplitDataset(train=empty, cv=empty, test=empty), n_h=3, seed=0)


def test_ann_weight_vector_round_trip(blob_split):
    model = train_ann(blob_split, n_h=3, seed=1, max_epochs=5)
    rebuilt = model.with_vector(model.to_vector())
    assert np.array_equal(rebuilt.outputs(blob_split.test.X), model.outputs(blob_split.test.X))
    restored = model_from_dict(model.to_dict())
    assert np.allclose(restored.outputs(blob_split.test.X), model.outputs(blob_split.test.X))


def test_ea_step_momentum():
    assert ea_step(np.array([1.0]), np.array([2.0]), m=0.5, g=0.01) == pytest.approx([0.51])
    state = EaState(m=0.5, g=0.01, delta_w=np.zeros(1)).step(np.array([2.0]))
    assert state.delta_w == pytest.approx([0.01])
    with pytest.raises(ArgumentError):
        EaState(m=1.0, g=0.01, delta_w=np.zeros(1))
    with pytest.raises(ArgumentError):
        EaState(m=0.5, g=0.2, delta_w=np.zeros(1))


def test_ea_refine_never_lowers_cv_accuracy(blob_split):
    model = train_ann(blob_split, n_h=2, seed=2, max_epochs=3)
    refined = ea_refine(model, blob_split, m=0.5, generations=5, seed=1)
    assert accuracy(refined, blob_split.cv) >= accuracy(model, blob_split.cv)
    assert ea_refine(model, blob_split, m=0.5, generations=0) is model


def test_svm_separates_blobs(blob_split):
    model = train_svm(blob_split, gamma=0.5, cbox=10.0)
    assert accuracy(model, blob_split.test) == 1.0
    assert len(model.pairs) == 3
    assert max(model.dual_residuals()) < 1e-9


def test_svm_with_duplicate_rows(blobs):
    doubled = blobs.concat(blobs)
    model = train_svm(only_train(doubled), gamma=0.25, cbox=1.0, tol=1e-10)
    assert max(model.dual_residuals()) < 1e-6
    assert accuracy(model, blobs) == 1.0


def test_smo_two_points():
    X = np.array([[0.0], [1.0]])
    y = np.array([1.0, -1.0])
    beta, bias = smo(rbf_kernel(X, X, 1.0), y, cbox=10.0, tol=1e-9)
    assert beta.sum() == pytest.approx(0.0, abs=1e-12)
    decision = rbf_kernel(X, X, 1.0) @ beta + bias
    assert decision[0] > 0 > decision[1]
    assert bias == pytest.approx(0.0, abs=1e-6)


def test_svm_single_class_predicts_it():
    data = Dataset(X=np.random.default_rng(0).normal(size=(5, 2)), y=[1] * 5, n_classes=3)
    model = train_svm(only_train(data))
    assert predict_many(model, np.zeros((2, 2))).tolist() == [1, 1]


def test_samme_alpha():
    assert samme_alpha(0.25, 3) == pytest.approx(math.log(6.0))
    assert samme_alpha(0.5, 2) == pytest.approx(0.0)


def test_adaboost_stops_after_a_perfect_stump():
    data = Dataset(X=[[0.0], [1.0], [2.0], [3.0]], y=[0, 0, 1, 1])
    model = train_adaboost(only_train(data), T=20)
    assert model.num_rounds == 1
    assert model.rounds[0].stump.threshold == pytest.approx(1.5)
    assert predict_many(model, [[0.5], [2.5]]).tolist() == [0, 1]


def test_adaboost_fits_interval_classes():
    x = np.linspace(0.0, 3.0, 90, endpoint=False)
    data = Dataset(X=x.reshape(-1, 1), y=(x // 1.0).astype(int))
    model = train_adaboost(only_train(data), T=50)
    assert model.num_rounds > 1
    assert accuracy(model, data) >= 0.95


def test_adaboost_stops_when_no_stump_beats_chance():
    data = Dataset(X=np.ones((6, 2)), y=[0, 1, 0, 1, 1, 0])
    model = train_adaboost(only_train(data))
    assert model.num_rounds == 0
    assert predict_many(model, np.zeros((3, 2))).tolist() == [0, 0, 0]


def xor_blobs(seed: int = 0) -> Dataset:
    """Four Gaussian blobs of 25 points on the corners of a square, XOR labeled."""
    rng = np.random.default_rng(seed)
    corners = np.array([[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]])
    X = np.concatenate([c + rng.normal(0.0, 0.4, size=(25, 2)) for c in corners])
    return Dataset(X=X, y=np.repeat([0, 1, 1, 0], 25))


@pytest.mark.parametrize("seed", range(5))
def test_adaboost_loss_bound_shrinks_every_round(seed):
    data = xor_blobs(seed)
    model = train_adaboost(only_train(data), T=5)
    assert model.num_rounds == 5
    bound = 1.0
    for t, r in enumerate(model.rounds, start=1):
        # exponential-loss bound on the training error of the first t rounds
        factor = 2.0 * math.sqrt(r.error * (1.0 - r.error))
        assert factor < 1.0
        bound *= factor
        staged = replace(model, rounds=model.rounds[:t])
        assert 1.0 - accuracy(staged, data) <= bound + 1e-12


def test_adaboost_rejects_bad_round_count(blob_split):
    with pytest.raises(ArgumentError):
        train_adaboost(blob_split, T=0)


@pytest.mark.parametrize("algorithm", list(Algorithm))
def test_train_model_every_algorithm(algorithm, blob_split):
    params = ClassifierParams(n_h=4, max_epochs=50, ea_generations=3, boost_rounds=20)
    model = train_model(algorithm, blob_split, params, seed=5)
    assert accuracy(model, blob_split.test) >= 0.95
    restored = model_from_dict(model.to_dict())
    assert np.array_equal(predict_many(restored, blob_split.test.X), predict_many(model, blob_split.test.X))


def test_predict_checks_dimensions(blob_split):
    model = train_adaboost(blob_split, T=20)
    assert predict(model, blob_split.test.X[0]) == blob_split.test.y[0]
    with pytest.raises(ArgumentError):
        predict_many(model, np.zeros((2, 3)))
    with pytest.raises(ArgumentError):
        predict(model, np.zeros((2, 4)))
    with pytest.raises(ArgumentError):
        predict_many(object(), np.zeros((1, 4)))


def test_confusion_matrix_counts():
    matrix = confusion_matrix([0, 0, 1, 2], [0, 1, 1, 2], n_classes=3)
    assert matrix.tolist() == [[1, 1, 0], [0, 1, 0], [0, 0, 1]]
    assert np.trace(matrix) == 3


def test_model_from_dict_unknown_kind():
    with pytest.raises(LoadError):
        model_from_dict({"kind": "tree"})


def scaled(parts: SplitDataset, s: float) -> SplitDataset:
    return SplitDataset(
        train=Dataset(X=parts.train.X * s, y=parts.train.y, n_classes=parts.n_classes),
        cv=Dataset(X=parts.cv.X * s, y=parts.cv.y, n_classes=parts.n_classes),
        test=Dataset(X=parts.test.X * s, y=parts.test.y, n_classes=parts.n_classes),
    )


# Power-of-two scales keep z-scored features bit-identical
@pytest.mark.parametrize("s", [0.25, 4.0, 1024.0])
@pytest.mark.parametrize("algorithm", [Algorithm.ANN, Algorithm.SVM, Algorithm.ADABOOST])
def test_predictions_ignore_feature_scale(algorithm, s, blob_split):
    params = ClassifierParams(n_h=3, max_epochs=20, boost_rounds=10)
    model = train_model(algorithm, blob_split, params, seed=4)
    rescaled = train_model(algorithm, scaled(blob_split, s), params, seed=4)
    points = np.random.default_rng(9).normal(3.0, 3.0, size=(40, 4))
    assert np.array_equal(predict_many(rescaled, points * s), predict_many(model, points))


def test_svm_dual_coefficients_stay_in_the_box(blobs):
    rng = np.random.default_rng(2)
    X = blobs.X + rng.normal(0.0, 2.0, size=blobs.X.shape)
    y = np.where(blobs.y == 0, 1.0, -1.0)
    cbox = 0.5
    beta, _ = smo(rbf_kernel(X, X, 0.25), y, cbox=cbox, tol=1e-8)
    alpha = beta * y
    assert np.all(alpha >= 0.0)
    assert np.all(alpha <= cbox)
    assert np.any(alpha == cbox)
    model = train_svm(only_train(Dataset(X=X, y=blobs.y)), gamma=0.25, cbox=cbox)
    for pair in model.pairs:
        assert np.all(np.abs(pair.coef) <= cbox)


@pytest.mark.slow
def test_ea_refine_never_lowers_cv_accuracy_on_random_data():
    rng = np.random.default_rng(12)
    for k in range(50):
        centers = rng.normal(0.0, 2.0, size=(3, 3))
        X = np.concatenate([c + rng.normal(0.0, 1.0, size=(20, 3)) for c in centers])
        parts = split(Dataset(X=X, y=np.repeat([0, 1, 2], 20)), (0.5, 0.25, 0.25), seed=k)
        model = train_ann(parts, n_h=2, seed=k, max_epochs=5)
        refined = ea_refine(model, parts, m=0.5, generations=4, seed=k)
        assert accuracy(refined, parts.cv) >= accuracy(model, parts.cv)
