"""Before/after privatization evaluation shared by the CLI and the acceptance tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adversary import (
    ConfusionMatrix,
    bayes_attack_accuracy,
    evaluate,
    majority_baseline,
    train_vote_classifier,
)
from .core import LabeledDataset, PrivacyMapping, ValidationError, encode_dataset
from .density import build_histogram, equal_width_grid
from .learner import mapped_mi

REPORT_VERSION = 1


@dataclass
class SideResult:
    """Attack results on one representation of the data (raw or encoded)."""

    confusion: ConfusionMatrix
    mi: float
    bayes_accuracy: float

    @property
    def accuracy(self) -> float:
        return self.confusion.accuracy

    def to_dict(self) -> dict:
        return {
            "confusion": self.confusion.counts.tolist(),
            "accuracy": self.accuracy,
            "mi_bits": self.mi,
            "bayes_attack_accuracy": self.bayes_accuracy,
        }


@dataclass
class EvaluationReport:
    classes: tuple[str, ...]
    bins: list[int]
    majority_baseline: float
    before: SideResult
    after: SideResult
    n_train: int
    n_test: int

    def to_dict(self) -> dict:
        return {
            "format_version": REPORT_VERSION,
            "classes": list(self.classes),
            "bins": list(self.bins),
            "n_train": self.n_train,
            "n_test": self.n_test,
            "confusion_layout": "rows = predicted, columns = true class",
            "majority_baseline": self.majority_baseline,
            "before": self.before.to_dict(),
            "after": self.after.to_dict(),
        }


def _side(train, test, bins, folds, centers, seed) -> SideResult:
    clf = train_vote_classifier(train, folds=folds, n_centers=centers, seed=seed)
    model = build_histogram(train, equal_width_grid(train.points, bins))
    return SideResult(
        confusion=evaluate(clf, test),
        mi=mapped_mi(train, train.points, bins),
        bayes_accuracy=bayes_attack_accuracy(model, test),
    )


def run_evaluation(
    mapping: PrivacyMapping,
    train: LabeledDataset,
    test: LabeledDataset,
    bins=10,
    folds: int = 10,
    centers: int = 100,
    seed: int = 0,
) -> EvaluationReport:
    """Attack the raw and the encoded data with the same adversaries.

    The vote classifier and the histogram MAP attacker are trained on the
    training split and scored on the test split; MI is measured on the
    training split with the min/max equal-width grid used by the learner.
    """
    if tuple(mapping.classes) != train.classes or train.classes != test.classes:
        raise ValidationError("mapping, training and test classes must match in order")
    bins = list(np.broadcast_to(np.asarray(bins, dtype=int), (train.dimension,)))
    before = _side(train, test, bins, folds, centers, seed)
    after = _side(
        encode_dataset(mapping, train), encode_dataset(mapping, test), bins, folds, centers, seed
    )
    return EvaluationReport(
        classes=train.classes,
        bins=[int(b) for b in bins],
        majority_baseline=majority_baseline(test),
        before=before,
        after=after,
        n_train=len(train),
        n_test=len(test),
    )
