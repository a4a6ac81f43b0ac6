import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from privmap.core import LabeledDataset, ValidationError
from privmap.data import (
    COHORT_COUNTS,
    WEIGHT_CLASSES,
    BodyRecord,
    label_weight_status,
    largest_remainder,
    records_from_rows,
    split,
    synth_cohort,
    weight_status,
)


def group(n, age=120, gender="male", prefix="s"):
    return [BodyRecord(f"{prefix}{i}", age, gender, 15.0 + i * 0.01, 40.0) for i in range(n)]


def test_weight_status_cuts():
    assert [weight_status(p) for p in (2.5, 4.99, 5.0, 49.5, 85.0, 94.9, 95.0, 95.5)] == [
        0, 0, 1, 1, 2, 2, 3, 3,
    ]


def test_rank_examples():
    ds = label_weight_status(group(100))
    # records are in increasing bmi order, so index = rank - 1
    assert WEIGHT_CLASSES[ds.labels[2]] == "UW"
    assert WEIGHT_CLASSES[ds.labels[49]] == "HW"
    assert WEIGHT_CLASSES[ds.labels[95]] == "OB"
    assert ds.class_counts().tolist() == [5, 80, 10, 5]
    assert ds.feature_names == ("bmi", "weight")


def test_ties_use_mid_ranks():
    recs = [BodyRecord(f"t{i}", 60, "female", 20.0, 30.0) for i in range(40)]
    ds = label_weight_status(recs, min_group=1)
    # all tied at mid-rank 20.5 -> percentile 50
    assert set(ds.labels.tolist()) == {1}


def test_groups_are_independent():
    recs = group(100, age=120, gender="male", prefix="m") + group(100, age=120, gender="female", prefix="f")
    recs += group(100, age=132, gender="male", prefix="o")
    ds = label_weight_status(recs)
    assert ds.class_counts().tolist() == [15, 240, 30, 15]


def test_small_group_warns_and_old_records_dropped():
    recs = group(5) + [BodyRecord("old", 241, "male", 30.0, 90.0)]
    with pytest.warns(RuntimeWarning, match="only 5"):
        ds = label_weight_status(recs)
    assert len(ds) == 5 and "old" not in ds.subjects


@settings(max_examples=5, deadline=None)
@given(seed=st.integers(0, 1000))
def test_label_proportions_converge(seed):
    rng = np.random.default_rng(seed)
    recs = [BodyRecord(f"r{i}", 150, "female", float(b), 50.0)
            for i, b in enumerate(rng.lognormal(3.0, 0.2, 2000))]
    ds = label_weight_status(recs)
    share = ds.class_counts() / len(ds)
    assert np.all(np.abs(share - [0.05, 0.80, 0.10, 0.05]) <= 0.03)


def test_body_record_validation():
    for bad in (dict(bmi=-1.0), dict(weight=float("nan")), dict(gender="x"), dict(age_months=-2)):
        kw = dict(subject_id="a", age_months=10, gender="male", bmi=20.0, weight=40.0) | bad
        with pytest.raises(ValidationError):
            BodyRecord(**kw)


def test_records_from_rows_codes_and_blanks():
    rows = [
        {"subject_id": "1", "age_months": "100", "gender": "1", "bmi": "17.5", "weight": "30"},
        {"subject_id": "2", "age_months": "100", "gender": "2", "bmi": "", "weight": "30"},
        {"subject_id": "3", "age_months": "90.0", "gender": "Female", "bmi": "16", "weight": "25"},
    ]
    recs = records_from_rows(rows)
    assert [r.gender for r in recs] == ["male", "female"] and recs[1].age_months == 90


def test_largest_remainder():
    assert largest_remainder([1, 1, 1], 10).tolist() == [4, 3, 3]
    assert largest_remainder(np.array(COHORT_COUNTS) / 3355, 3355).tolist() == list(COHORT_COUNTS)
    assert largest_remainder([0.5, 0.5], 0).tolist() == [0, 0]


@given(st.lists(st.floats(0.01, 10), min_size=1, max_size=8), st.integers(0, 5000))
def test_largest_remainder_properties(w, total):
    out = largest_remainder(w, total)
    assert out.sum() == total
    quota = np.asarray(w) / sum(w) * total
    assert np.all(np.abs(out - quota) < 1 + 1e-9)


def test_default_cohort_counts():
    ds = synth_cohort(None, 3355, 0)
    assert ds.class_counts().tolist() == [126, 2147, 570, 512]
    assert ds.classes == WEIGHT_CLASSES


def test_rounded_proportions_rejected():
    cohort = {"features": ["x"], "classes": [
        {"name": n, "proportion": p, "mean": [0.0], "cov": [[1.0]]}
        for n, p in zip("abcd", (0.0376, 0.64, 0.17, 0.15))
    ]}
    with pytest.raises(ValidationError, match="sum to 1"):
        synth_cohort(cohort, 3355, 0)


def test_synth_empty_and_deterministic():
    assert len(synth_cohort(None, 0, 1)) == 0
    a, b = synth_cohort(None, 500, 42), synth_cohort(None, 500, 42)
    assert a.points.tobytes() == b.points.tobytes()
    assert not np.array_equal(a.points, synth_cohort(None, 500, 43).points)


def test_synth_gamma_and_invalid_covariance():
    cohort = {"features": ["x", "y"], "classes": [
        {"name": "a", "proportion": 0.5, "family": "gamma", "shape": [3, 3], "scale": [1, 2]},
        {"name": "b", "proportion": 0.5, "mean": [0, 0], "cov": [[1, 2], [2, 1]]},
    ]}
    with pytest.raises(ValidationError, match="positive semi-definite"):
        synth_cohort(cohort, 10, 0)
    cohort["classes"][1]["cov"] = [[1, 0], [0, 1]]
    ds = synth_cohort(cohort, 1000, 0)
    assert np.all(ds.class_points("a") > 0)


def test_split_cohort_sizes():
    ds = synth_cohort(None, 3355, 1)
    train, test = split(ds, 1371 / 3355, 1)
    assert (len(train), len(test)) == (1371, 1984)
    # 0.409 * 3355 = 1372.2 rounds to 1372
    assert len(split(ds, 0.409, 1)[0]) == 1372


def test_split_balanced_example():
    ds = LabeledDataset(np.arange(100.0)[:, None], np.repeat([0, 1], 50), ("a", "b"))
    train, test = split(ds, 0.5, 3)
    assert train.class_counts().tolist() == [25, 25] == test.class_counts().tolist()
    t2, _ = split(ds, 0.5, 3)
    assert train.points.tobytes() == t2.points.tobytes()


@settings(max_examples=30, deadline=None)
@given(sizes=st.lists(st.integers(2, 60), min_size=2, max_size=5),
       f=st.floats(0.05, 0.95), seed=st.integers(0, 100))
def test_split_conservation(sizes, f, seed):
    labels = np.repeat(np.arange(len(sizes)), sizes)
    ds = LabeledDataset(np.arange(len(labels), dtype=float)[:, None], labels,
                        tuple(f"c{i}" for i in range(len(sizes))))
    train, test = split(ds, f, seed)
    assert len(train) + len(test) == len(ds)
    assert sorted(np.r_[train.points[:, 0], test.points[:, 0]].tolist()) == ds.points[:, 0].tolist()
    assert np.all(np.abs(train.class_counts() - f * np.array(sizes)) <= 1 + 1e-9)


def test_split_errors():
    ds = LabeledDataset(np.zeros((3, 1)), [0, 0, 1], ("a", "b"))
    with pytest.raises(ValidationError, match="fewer than 2"):
        split(ds, 0.5, 0)
    with pytest.raises(ValidationError):
        split(ds, 1.0, 0)
