"""Dataset preparation: weight-status labeling, synthetic cohorts, splits."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .core import LabeledDataset, ValidationError

log = logging.getLogger(__name__)

WEIGHT_CLASSES = ("UW", "HW", "OW", "OB")
WEIGHT_FEATURES = ("bmi", "weight")
#: Percentile cut points: UW < 5 <= HW < 85 <= OW < 95 <= OB.
PERCENTILE_CUTS = (5.0, 85.0, 95.0)
MIN_GROUP_SIZE = 20
MAX_AGE_MONTHS = 240


@dataclass(frozen=True)
class BodyRecord:
    subject_id: str
    age_months: int
    gender: str
    bmi: float
    weight: float

    def __post_init__(self):
        if not self.subject_id:
            raise ValidationError("empty subject id")
        if self.age_months < 0:
            raise ValidationError(f"{self.subject_id}: negative age")
        if self.gender not in ("male", "female"):
            raise ValidationError(f"{self.subject_id}: gender must be 'male' or 'female'")
        for name in ("bmi", "weight"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValidationError(f"{self.subject_id}: {name} must be positive and finite")


def weight_status(percentile: float) -> int:
    """Index into ``WEIGHT_CLASSES`` for a BMI-for-age percentile."""
    return int(np.searchsorted(PERCENTILE_CUTS, percentile, side="right"))


def label_weight_status(
    records: Sequence[BodyRecord],
    min_group: int = MIN_GROUP_SIZE,
    max_age_months: int = MAX_AGE_MONTHS,
) -> LabeledDataset:
    """Label each record by its BMI percentile within its (age year, gender) group.

    Percentiles use ``(rank - 0.5) / n * 100`` with mid-ranks for ties.
    Records older than ``max_age_months`` are dropped. Groups smaller than
    ``min_group`` trigger a warning but are still labeled.
    """
    kept = [r for r in records if r.age_months <= max_age_months]
    if len(kept) < len(records):
        log.info("dropped %d records above %d months", len(records) - len(kept), max_age_months)
    groups: dict[tuple[int, str], list[int]] = {}
    for i, r in enumerate(kept):
        groups.setdefault((r.age_months // 12, r.gender), []).append(i)
    labels = np.empty(len(kept), dtype=np.int64)
    bmi = np.array([r.bmi for r in kept], dtype=float)
    for (year, gender), members in sorted(groups.items()):
        if len(members) < min_group:
            warnings.warn(
                f"group age {year}, {gender} has only {len(members)} records; percentiles are coarse",
                RuntimeWarning,
                stacklevel=2,
            )
        idx = np.asarray(members)
        pct = (rankdata(bmi[idx], method="average") - 0.5) / len(idx) * 100.0
        labels[idx] = np.searchsorted(PERCENTILE_CUTS, pct, side="right")
    points = np.array([[r.bmi, r.weight] for r in kept], dtype=float).reshape(-1, 2)
    return LabeledDataset(
        points, labels, WEIGHT_CLASSES, WEIGHT_FEATURES, tuple(r.subject_id for r in kept)
    )


# -- synthetic cohorts -----------------------------------------------------

#: Default cohort of 3355 youths: 126 underweight, then roughly 64% healthy,
#: 17% overweight and 15% obese.
COHORT_COUNTS = (126, 2147, 570, 512)

DEFAULT_COHORT = {
    "features": list(WEIGHT_FEATURES),
    "classes": [
        {"name": "UW", "proportion": COHORT_COUNTS[0] / 3355, "family": "gaussian",
         "mean": [15.2, 38.0], "cov": [[1.0, 6.0], [6.0, 120.0]]},
        {"name": "HW", "proportion": COHORT_COUNTS[1] / 3355, "family": "gaussian",
         "mean": [19.0, 50.0], "cov": [[4.0, 20.0], [20.0, 250.0]]},
        {"name": "OW", "proportion": COHORT_COUNTS[2] / 3355, "family": "gaussian",
         "mean": [24.5, 66.0], "cov": [[2.5, 16.0], [16.0, 260.0]]},
        {"name": "OB", "proportion": COHORT_COUNTS[3] / 3355, "family": "gaussian",
         "mean": [31.0, 85.0], "cov": [[16.0, 50.0], [50.0, 500.0]]},
    ],
}


def largest_remainder(weights: Sequence[float], total: int) -> np.ndarray:
    """Integer apportionment of ``total`` proportional to ``weights``.

    Floors first, then one extra unit to the largest fractional parts
    (ties to the lower index).
    """
    w = np.asarray(weights, dtype=float)
    if total == 0 or w.sum() == 0:
        return np.zeros(len(w), dtype=np.int64)
    quota = w / w.sum() * total
    # guard against representation error in quotas like 1370.9999999999998
    base = np.floor(quota + 1e-9).astype(np.int64)
    short = total - int(base.sum())
    frac = quota - base
    order = np.lexsort((np.arange(len(w)), -frac))
    base[order[:short]] += 1
    return base


def _draw(rng: np.random.Generator, cls: Mapping, size: int, n: int) -> np.ndarray:
    family = cls.get("family", "gaussian")
    if family == "gaussian":
        mean = np.asarray(cls["mean"], dtype=float)
        cov = np.asarray(cls.get("cov", np.eye(n)), dtype=float)
        if mean.shape != (n,) or cov.shape != (n, n):
            raise ValidationError(f"class {cls['name']}: mean/cov shapes do not match {n} features")
        if np.any(np.abs(cov - cov.T) > 1e-12 * max(1.0, np.abs(cov).max())):
            raise ValidationError(f"class {cls['name']}: covariance is not symmetric")
        if np.linalg.eigvalsh(cov)[0] < -1e-12 * np.abs(cov).max():
            raise ValidationError(f"class {cls['name']}: covariance is not positive semi-definite")
        return rng.multivariate_normal(mean, cov, size=size, method="eigh")
    if family == "gamma":
        shape = np.broadcast_to(np.asarray(cls["shape"], dtype=float), (n,))
        scale = np.broadcast_to(np.asarray(cls["scale"], dtype=float), (n,))
        if np.any(shape <= 0) or np.any(scale <= 0):
            raise ValidationError(f"class {cls['name']}: gamma parameters must be positive")
        return rng.gamma(shape, scale, size=(size, n))
    raise ValidationError(f"class {cls.get('name')}: unknown family {family!r}")


def synth_cohort(cohort: Mapping | None, n: int, seed: int) -> LabeledDataset:
    """Draw ``n`` labeled points from per-class generative models.

    ``cohort`` has ``features`` (names) and ``classes``, each with ``name``,
    ``proportion`` and either ``family: gaussian`` (``mean``, ``cov``) or
    ``family: gamma`` (per-dimension ``shape``, ``scale``). Class sizes are
    apportioned by largest remainder; draws are class by class from one
    generator seeded with ``seed``.
    """
    cohort = DEFAULT_COHORT if cohort is None else cohort
    if n < 0:
        raise ValidationError("n must be non-negative")
    classes = cohort["classes"]
    features = tuple(cohort["features"])
    props = np.array([c["proportion"] for c in classes], dtype=float)
    if np.any(props < 0) or abs(props.sum() - 1.0) > 1e-9:
        raise ValidationError(f"class proportions must sum to 1, got {props.sum()!r}")
    sizes = largest_remainder(props, n)
    rng = np.random.default_rng(seed)
    dim = len(features)
    blocks = [_draw(rng, c, int(m), dim).reshape(int(m), dim) for c, m in zip(classes, sizes)]
    points = np.vstack(blocks) if blocks else np.zeros((0, dim))
    labels = np.repeat(np.arange(len(classes)), sizes)
    subjects = tuple(f"synth-{i:05d}" for i in range(len(labels)))
    return LabeledDataset(points, labels, tuple(c["name"] for c in classes), features, subjects)


def split(
    data: LabeledDataset, train_fraction: float, seed: int
) -> tuple[LabeledDataset, LabeledDataset]:
    """Stratified shuffle split.

    The training side gets ``round(train_fraction * N)`` records, apportioned
    over classes by largest remainder. Both sides keep the original record
    order.
    """
    f = float(train_fraction)
    if not 0.0 < f < 1.0:
        raise ValidationError("train fraction must lie strictly between 0 and 1")
    counts = data.class_counts()
    small = [data.classes[i] for i in np.flatnonzero(counts < 2)]
    if small:
        raise ValidationError(f"classes with fewer than 2 records: {', '.join(small)}")
    total = int(math.floor(f * len(data) + 0.5 + 1e-9))
    per_class = largest_remainder(counts * f, total)
    rng = np.random.default_rng(seed)
    train_idx = []
    for i in range(data.n_classes):
        idx = np.flatnonzero(data.labels == i)
        train_idx.append(idx[rng.permutation(len(idx))[: per_class[i]]])
    mask = np.zeros(len(data), dtype=bool)
    mask[np.concatenate(train_idx)] = True
    return data.subset(np.flatnonzero(mask)), data.subset(np.flatnonzero(~mask))


def records_from_rows(rows: Iterable[Mapping[str, str]]) -> list[BodyRecord]:
    """Body records from dict rows with ``subject_id, age_months, gender, bmi, weight``.

    Gender accepts ``male``/``female`` or the survey codes 1/2. Rows with an
    empty bmi or weight are skipped.
    """
    out = []
    for row in rows:
        if not row.get("bmi") or not row.get("weight"):
            continue
        gender = str(row["gender"]).strip().lower()
        gender = {"1": "male", "1.0": "male", "2": "female", "2.0": "female"}.get(gender, gender)
        out.append(
            BodyRecord(
                subject_id=str(row["subject_id"]),
                age_months=int(float(row["age_months"])),
                gender=gender,
                bmi=float(row["bmi"]),
                weight=float(row["weight"]),
            )
        )
    return out
