from dataclasses import replace

import numpy as np
import pytest

from app.classifier.evaluation import confusion_matrix, evaluate, metrics_from_predictions
from app.classifier.model import build_classifier, decide
from app.classifier.training import HISTORY_COLUMNS, augment_training_set, train_classifier
from app.config.schema import ClassifierConfig, GanConfig
from app.dal.spectrogram_store import SpectrogramSet
from app.gan.models import build_discriminator
from app.utils.error_handler import DataError
from conftest import toy_spectrograms

CLASSES = ("healthy", "COVID-19")


class EchoModel:
    """预测值直接取自给定标签"""

    def __init__(self, answers):
        self.answers = np.asarray(answers)

    def predict(self, x, batch_size=256):
        return self.answers


def test_perfect_and_constant_predictors():
    y = np.array([0, 0, 0, 1])
    assert evaluate(EchoModel(y), np.zeros((4, 1, 2, 2)), y, CLASSES).accuracy == 1.0

    metrics = evaluate(EchoModel(np.zeros(4, dtype=np.int64)), np.zeros((4, 1, 2, 2)), y, CLASSES)
    assert metrics.accuracy == 0.75
    assert metrics.precision == [0.75, 0.0]
    assert metrics.recall == [1.0, 0.0]
    assert metrics.confusion == [[3, 0], [1, 0]]
    report = metrics.to_dict()
    assert report["precision"] == {"healthy": 0.75, "COVID-19": 0.0}
    assert report["sample_count"] == 4


def test_accuracy_equals_confusion_trace():
    rng = np.random.default_rng(0)
    y_true, y_pred = rng.integers(0, 3, 50), rng.integers(0, 3, 50)
    metrics = metrics_from_predictions(y_true, y_pred, ("a", "b", "c"))
    matrix = np.array(metrics.confusion)
    assert metrics.accuracy == np.trace(matrix) / matrix.sum()
    np.testing.assert_array_equal(matrix, confusion_matrix(y_true, y_pred, 3))
    with pytest.raises(DataError):
        metrics_from_predictions(np.array([], dtype=np.int64), np.array([], dtype=np.int64), ("a", "b"))


def test_decision_rules():
    np.testing.assert_array_equal(decide(np.array([[0.5], [0.49], [0.9]])), [1, 0, 1])
    np.testing.assert_array_equal(decide(np.array([[0.2, 0.5, 0.3], [0.6, 0.3, 0.1]])), [1, 0])


def test_three_class_probabilities(tiny_clf_cfg):
    model = build_classifier(replace(tiny_clf_cfg, n_outputs=3))
    probabilities = model.predict_proba(np.random.default_rng(1).uniform(-1, 1, (5, 1, 16, 8)))
    assert probabilities.shape == (5, 3)
    np.testing.assert_allclose(probabilities.sum(axis=1), 1.0)


def test_classifier_trunk_matches_discriminator_trunk():
    gan_cfg = GanConfig(image_shape=(16, 8), disc_filters=(2, 3, 3, 4, 4), gen_base_maps=2,
                        gen_channels=(2, 2), latent_dim=4, seed=0)
    disc = build_discriminator(gan_cfg)
    clf = build_classifier(ClassifierConfig(image_shape=(16, 8), filters=(2, 3, 3, 4, 4), seed=0))
    assert sum(v.size for v in clf.trunk.parameters().values()) == \
        sum(v.size for v in disc.trunk.parameters().values())
    assert clf.trunk.stage_shapes == disc.trunk.stage_shapes


def _records(count, label_pattern, provenance="real"):
    spectrograms = np.random.default_rng(count).uniform(-1, 1, (count, 1, 2, 2))
    labels = np.array([label_pattern[i % len(label_pattern)] for i in range(count)])
    return SpectrogramSet(spectrograms, labels, CLASSES, provenance=(provenance,) * count)


def test_augmentation_counts_and_provenance():
    real = _records(800, [0, 1])
    synthetic = _records(200, [0, 1], provenance="synthetic")
    augmented = augment_training_set(real, synthetic, shuffle_seed=4)
    assert len(augmented) == 1000
    assert augmented.synthetic_count() == 200
    assert augmented.class_counts() == {"healthy": 500, "COVID-19": 500}
    again = augment_training_set(real, synthetic, shuffle_seed=4)
    np.testing.assert_array_equal(augmented.spectrograms, again.spectrograms)
    assert augmented.provenance == again.provenance


def test_augmentation_with_empty_synthetic_set():
    real = _records(10, [0, 1])
    empty = SpectrogramSet(np.zeros((0, 1, 2, 2)), np.zeros(0), CLASSES)
    augmented = augment_training_set(real, empty, shuffle_seed=1)
    assert len(augmented) == 10
    assert sorted(augmented.uuids) == sorted(real.uuids)
    assert augmented.synthetic_count() == 0


def test_augmentation_rejects_mismatched_sets():
    real = _records(4, [0, 1])
    other = SpectrogramSet(np.zeros((2, 1, 2, 2)), [0, 1], ("a", "b"))
    with pytest.raises(DataError):
        augment_training_set(real, other, shuffle_seed=0)
    with pytest.raises(DataError):
        augment_training_set(real, SpectrogramSet(np.zeros((2, 1, 3, 3)), [0, 1], CLASSES), shuffle_seed=0)


def test_learns_separable_toy_set(tiny_clf_cfg):
    cfg = replace(tiny_clf_cfg, filters=(4, 8, 8, 8, 8), epochs=50)
    train_x, train_y = toy_spectrograms(40, seed=0)
    val_x, val_y = toy_spectrograms(20, seed=1)
    test_x, test_y = toy_spectrograms(20, seed=2)
    run = train_classifier(train_x, train_y, val_x, val_y, cfg, progress=False)
    assert run.best_val_accuracy >= 0.95
    assert evaluate(run.best_model(), test_x, test_y, CLASSES).accuracy >= 0.95

    frame = run.history_frame()
    assert list(frame.columns) == HISTORY_COLUMNS
    assert len(frame) == 50
    assert frame["val_accuracy"].max() == run.best_val_accuracy


def test_training_is_deterministic(tiny_clf_cfg):
    x, y = toy_spectrograms(8)
    first = train_classifier(x, y, x, y, tiny_clf_cfg, progress=False)
    second = train_classifier(x, y, x, y, tiny_clf_cfg, progress=False)
    assert first.history_frame().equals(second.history_frame())
    for key, value in first.model.state_dict().items():
        np.testing.assert_array_equal(value, second.model.state_dict()[key])


def test_training_rejects_bad_sets(tiny_clf_cfg):
    x, y = toy_spectrograms(4)
    with pytest.raises(DataError):
        train_classifier(x[:0], y[:0], x, y, tiny_clf_cfg, progress=False)
    with pytest.raises(DataError):
        train_classifier(x, y[:-1], x, y, tiny_clf_cfg, progress=False)
    with pytest.raises(DataError):
        train_classifier(x, y + 1, x, y, tiny_clf_cfg, progress=False)
