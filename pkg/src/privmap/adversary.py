"""How well can an eavesdropper infer the private class?

Two attackers are provided. The Bayesian MAP attacker reads the class off
a histogram model of ``p(z | c)``. The vote classifier mirrors an ordinal
ensemble: for ``k`` ordered classes it trains ``k - 1`` binary scorers
whose positive side is classes ``0..i``, and predicts the number of
scorers that vote negative.

Confusion matrices put predictions on rows and ground truth on columns.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.optimize import minimize
from scipy.special import expit, log_expit

from .core import LabeledDataset, ValidationError
from .density import CLAMP, HistogramModel, posterior_table

BANDWIDTHS = (0.25, 0.5, 1.0)
PENALTIES = (1e-4, 1e-3, 1e-2)


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Prediction counts, rows = predicted class, columns = true class.

    ``n_test`` is the size of the test set when it differs from the matrix
    total (for instance a published matrix that lost some records);
    accuracy is always taken over the whole test set.
    """

    counts: np.ndarray
    classes: tuple[str, ...] | None = None
    n_test: int | None = None

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValidationError("confusion matrix must be square")
        if np.any(counts < 0):
            raise ValidationError("confusion counts must be non-negative")
        if self.n_test is not None and self.n_test < counts.sum():
            raise ValidationError(f"test set of {self.n_test} is smaller than the matrix total")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_predictions(cls, predicted, truth, n_classes: int, classes=None) -> "ConfusionMatrix":
        predicted = np.asarray(predicted, dtype=np.int64)
        truth = np.asarray(truth, dtype=np.int64)
        flat = np.bincount(predicted * n_classes + truth, minlength=n_classes * n_classes)
        return cls(flat.reshape(n_classes, n_classes), classes)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def size(self) -> int:
        """Number of test records the matrix summarizes."""
        return self.total if self.n_test is None else int(self.n_test)

    @property
    def accuracy(self) -> float:
        """trace / test-set size."""
        if self.size == 0:
            raise ValidationError("empty confusion matrix")
        return float(np.trace(self.counts)) / self.size

    @property
    def majority_share(self) -> float:
        """Accuracy of always predicting the most common true class."""
        if self.size == 0:
            raise ValidationError("empty confusion matrix")
        return float(self.counts.sum(axis=0).max()) / self.size


def majority_baseline(test: LabeledDataset) -> float:
    if len(test) == 0:
        raise ValidationError("test set is empty")
    return float(test.class_counts().max()) / len(test)


def bayes_attack_accuracy(model: HistogramModel, test: LabeledDataset) -> float:
    """Share of test points whose MAP class under ``model`` is correct.

    Ties go to the lower class index; bins no class produces fall back to
    the prior.
    """
    if model.grid is None:
        raise ValidationError("model has no grid")
    if model.n_classes != test.n_classes:
        raise ValidationError("model and test set disagree on the number of classes")
    if len(test) == 0:
        raise ValidationError("test set is empty")
    best = np.argmax(posterior_table(model), axis=0)
    flat, _ = model.grid.bin_index(test.points, CLAMP)
    return float(np.mean(best[flat] == test.labels))


# -- scorers ---------------------------------------------------------------


@dataclass(eq=False)
class RBFLogisticScorer:
    """L2-regularized logistic regression on Gaussian radial features."""

    centers: np.ndarray
    bandwidth: float
    penalty: float
    weights: np.ndarray | None = None

    def features(self, x: np.ndarray) -> np.ndarray:
        sq = ((x[:, None, :] - self.centers[None, :, :]) ** 2).sum(axis=2)
        phi = np.exp(-sq / (2.0 * self.bandwidth**2))
        return np.hstack([phi, np.ones((len(x), 1))])

    def fit(self, x: np.ndarray, positive: np.ndarray) -> "RBFLogisticScorer":
        phi = self.features(x)
        sign = np.where(positive, 1.0, -1.0)
        m = len(x)
        lam = self.penalty

        def loss(w):
            margin = sign * (phi @ w)
            reg = 0.5 * lam * (w[:-1] @ w[:-1])
            grad_margin = -expit(-margin) * sign
            grad = phi.T @ grad_margin / m
            grad[:-1] += lam * w[:-1]
            return -log_expit(margin).mean() + reg, grad

        res = minimize(loss, np.zeros(phi.shape[1]), jac=True, method="L-BFGS-B",
                       options={"maxiter": 500})
        self.weights = res.x
        return self

    def decision(self, x: np.ndarray) -> np.ndarray:
        return self.features(x) @ self.weights

    def predict(self, x: np.ndarray) -> np.ndarray:
        """True where the scorer votes positive."""
        return self.decision(x) >= 0.0


@dataclass(eq=False)
class VoteClassifier:
    """Ordinal ensemble of ``k - 1`` binary scorers.

    Scorer ``i`` is positive for classes ``0..i``. The predicted class is
    the number of negative votes, so monotone vote patterns decode to the
    class between the last positive and first negative scorer.
    """

    scorers: list
    classes: tuple[str, ...]
    center: np.ndarray = field(default_factory=lambda: np.zeros(0))
    scale: np.ndarray = field(default_factory=lambda: np.ones(0))
    chosen: list[tuple[float, float]] = field(default_factory=list)

    def __post_init__(self):
        if len(self.scorers) != len(self.classes) - 1:
            raise ValidationError(
                f"{len(self.classes)} ordered classes need {len(self.classes) - 1} scorers"
            )

    def _standardize(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.center.size:
            x = (x - self.center) / self.scale
        return x

    def votes(self, x) -> np.ndarray:
        """Boolean ``(m, k - 1)`` array, True = positive vote."""
        x = self._standardize(x)
        if not self.scorers:
            return np.zeros((len(x), 0), dtype=bool)
        return np.column_stack([s.predict(x) for s in self.scorers])

    def predict(self, x) -> np.ndarray:
        return votes_to_class(self.votes(x), len(self.classes))


def votes_to_class(votes, n_classes: int) -> np.ndarray:
    """Class index = number of negative votes, clamped to the class range."""
    votes = np.atleast_2d(np.asarray(votes, dtype=bool))
    return np.clip((~votes).sum(axis=1), 0, n_classes - 1)


def classify(clf: VoteClassifier, x) -> int:
    """Class index predicted for a single point."""
    return int(clf.predict(np.asarray(x, dtype=float).reshape(1, -1))[0])


def _stratified_folds(y: np.ndarray, folds: int, rng: np.random.Generator) -> np.ndarray:
    assignment = np.empty(len(y), dtype=np.int64)
    for value in np.unique(y):
        idx = np.flatnonzero(y == value)
        idx = idx[rng.permutation(len(idx))]
        assignment[idx] = np.arange(len(idx)) % folds
    return assignment


def _cv_select(x, positive, centers, folds, rng) -> tuple[float, float]:
    fold_of = _stratified_folds(positive.astype(int), folds, rng)
    best, best_acc = (BANDWIDTHS[0], PENALTIES[0]), -1.0
    for bw in BANDWIDTHS:
        for lam in PENALTIES:
            correct = 0
            for f in range(folds):
                held = fold_of == f
                if held.all() or not held.any():
                    continue
                s = RBFLogisticScorer(centers, bw, lam).fit(x[~held], positive[~held])
                correct += int((s.predict(x[held]) == positive[held]).sum())
            acc = correct / len(x)
            if acc > best_acc:
                best, best_acc = (bw, lam), acc
    return best


def _centers(x: np.ndarray, n_centers: int, rng: np.random.Generator) -> np.ndarray:
    unique = np.unique(x, axis=0)
    if len(unique) <= n_centers:
        return unique
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        centers, _ = kmeans2(x, n_centers, iter=20, minit="++", seed=rng)
    return np.unique(centers, axis=0)


def train_vote_classifier(
    train: LabeledDataset,
    folds: int = 10,
    n_centers: int = 100,
    seed: int = 0,
) -> VoteClassifier:
    """Fit the ``k - 1`` ordinal scorers with cross-validated hyperparameters.

    Features are standardized with training statistics. Radial centers come
    from k-means on the whole training set and are shared by all scorers;
    each scorer picks bandwidth and penalty from a 3x3 grid by
    ``folds``-fold cross-validated accuracy.
    """
    if len(train) == 0:
        raise ValidationError("training set is empty")
    if folds < 2:
        raise ValidationError("need at least two folds")
    train.require_nonempty_classes()
    rng = np.random.default_rng(seed)
    center = train.points.mean(axis=0)
    scale = train.points.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    x = (train.points - center) / scale
    centers = _centers(x, n_centers, rng)
    scorers, chosen = [], []
    for i in range(train.n_classes - 1):
        positive = train.labels <= i
        if positive.all() or not positive.any():
            raise ValidationError(f"binary split {i} has an empty side")
        minority = int(min(positive.sum(), (~positive).sum()))
        bw, lam = _cv_select(x, positive, centers, max(2, min(folds, minority)), rng)
        scorers.append(RBFLogisticScorer(centers, bw, lam).fit(x, positive))
        chosen.append((bw, lam))
    return VoteClassifier(scorers, train.classes, center, scale, chosen)


def evaluate(clf: VoteClassifier, test: LabeledDataset) -> ConfusionMatrix:
    if len(test) == 0:
        raise ValidationError("test set is empty")
    if tuple(clf.classes) != test.classes:
        raise ValidationError("classifier and test set use different classes")
    pred = clf.predict(test.points)
    return ConfusionMatrix.from_predictions(pred, test.labels, test.n_classes, test.classes)


def accuracy(predicted: Sequence[int], truth: Sequence[int]) -> float:
    predicted, truth = np.asarray(predicted), np.asarray(truth)
    return float(np.mean(predicted == truth))
