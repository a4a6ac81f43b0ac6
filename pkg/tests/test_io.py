import json
import time

import numpy as np
import pytest

from privmap.closed_form import fit_normal
from privmap.core import Family, LabeledDataset, PrivacyMapping, ValidationError, encode, validate_mapping
from privmap.data import synth_cohort
from privmap.io import (
    load_config,
    parse_dataset,
    parse_mapping,
    read_body_records,
    serialize_mapping,
    write_dataset,
)


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_small_labeled_csv(tmp_path):
    ds = parse_dataset(write(tmp_path, "class,x,y\na,1.5,2\nb,3,4e-1\n"))
    assert len(ds) == 2 and ds.dimension == 2
    assert ds.classes == ("a", "b") and ds.feature_names == ("x", "y")
    np.testing.assert_array_equal(ds.points, [[1.5, 2.0], [3.0, 0.4]])


def test_missing_class_column(tmp_path):
    with pytest.raises(ValidationError, match="'class'"):
        parse_dataset(write(tmp_path, "x,y\n1,2\n"))
    ds = parse_dataset(write(tmp_path, "x,y\n1,2\n"), require_labels=False)
    assert ds.classes == ("unlabeled",)


def test_errors_name_row_and_column(tmp_path):
    with pytest.raises(ValidationError, match=r":3: column 'y'"):
        parse_dataset(write(tmp_path, "class,x,y\na,1,2\na,1,abc\n"))
    with pytest.raises(ValidationError, match=r":2: expected 3 cells, found 2"):
        parse_dataset(write(tmp_path, "class,x,y\na,1\n"))
    with pytest.raises(ValidationError, match="unknown class 'zz'"):
        parse_dataset(write(tmp_path, "class,x\nzz,1\n"), classes=["a"])
    with pytest.raises(ValidationError, match="non-finite"):
        parse_dataset(write(tmp_path, "class,x\na,inf\n"))


def test_class_order_and_feature_subset(tmp_path):
    p = write(tmp_path, "subject_id,class,x,y\ns1,b,1,2\ns2,a,3,4\n")
    ds = parse_dataset(p, classes=["a", "b"], features=["y"])
    assert ds.classes == ("a", "b") and ds.labels.tolist() == [1, 0]
    assert ds.points[:, 0].tolist() == [2.0, 4.0] and ds.subjects == ("s1", "s2")


def test_dataset_round_trip_exact(tmp_path):
    ds = synth_cohort(None, 3355, 2)
    p = tmp_path / "cohort.csv"
    write_dataset(p, ds)
    t0 = time.perf_counter()
    back = parse_dataset(p)
    assert time.perf_counter() - t0 < 1.0
    assert back.points.tobytes() == ds.points.tobytes()
    assert back.classes == ds.classes and back.subjects == ds.subjects
    np.testing.assert_array_equal(back.labels, ds.labels)


def test_body_records(tmp_path):
    p = write(tmp_path, "subject_id,age_months,gender,bmi,weight\n1,100,1,17.5,30\n2,99,female,,20\n")
    recs = read_body_records(p)
    assert len(recs) == 1 and recs[0].gender == "male"
    with pytest.raises(ValidationError, match="missing columns"):
        read_body_records(write(tmp_path, "subject_id,bmi\n1,2\n", "b.csv"))


def test_identity_mapping_round_trip():
    m = PrivacyMapping.identity(["a", "b"], 2)
    back, features = parse_mapping(serialize_mapping(m, ["x", "y"]))
    assert features == ("x", "y")
    for name in ("matrix", "offset"):
        assert back.params[name].tobytes() == m.params[name].tobytes()


def test_all_families_round_trip_bitwise():
    rng = np.random.default_rng(0)
    maps = [
        PrivacyMapping.affine(["a", "b"], rng.normal(size=(2, 3, 3)), rng.normal(size=(2, 3))),
        PrivacyMapping(Family.EXPONENTIAL, ("a",), {"rate": rng.random((1, 3))}),
        PrivacyMapping(Family.GAMMA, ("a",), {"shape": rng.random(3), "scale": rng.random((1, 3))}),
        PrivacyMapping(Family.UNIFORM, ("a",), {"low": -rng.random((1, 3)), "high": rng.random((1, 3))}),
    ]
    for m in maps:
        back, _ = parse_mapping(serialize_mapping(m))
        assert back.family == m.family and back.classes == m.classes
        for k in m.params:
            assert back.params[k].tobytes() == m.params[k].tobytes()


def test_fitted_normal_probe_zero_ulp():
    rng = np.random.default_rng(12)
    ds = LabeledDataset.from_blocks({
        "a": rng.multivariate_normal([1, 2], [[2, 0.7], [0.7, 1]], 500),
        "b": rng.multivariate_normal([-3, 0], [[0.3, 0.1], [0.1, 4]], 500),
    })
    m = fit_normal(ds)
    back, _ = parse_mapping(serialize_mapping(m))
    probes = rng.normal(scale=5, size=(100, 2))
    for c in m.classes:
        assert encode(back, c, probes).tobytes() == encode(m, c, probes).tobytes()


def test_serialization_uses_17_digits():
    m = PrivacyMapping.affine(["a"], [[[0.1]]], [[1 / 3]])
    assert "0.33333333333333331" in serialize_mapping(m)


def test_singular_mapping_parses_then_fails_validation():
    text = serialize_mapping(PrivacyMapping.affine(["a"], [[[1.0, 2.0], [2.0, 4.0]]], [[0.0, 0.0]]))
    m, _ = parse_mapping(text)
    assert validate_mapping(m) == ["class a: singular A"]


def test_mapping_version_and_malformed():
    doc = json.loads(serialize_mapping(PrivacyMapping.identity(["a"], 1)))
    doc["format_version"] = 2
    with pytest.raises(ValidationError, match="version"):
        parse_mapping(json.dumps(doc))
    with pytest.raises(ValidationError):
        parse_mapping("{not json")
    doc["format_version"] = 1
    doc["params"]["matrix"] = [[1.0, 2.0]]
    with pytest.raises(ValidationError):
        parse_mapping(json.dumps(doc))


def test_config(tmp_path):
    p = write(tmp_path, json.dumps({
        "seed": 3, "dimensions": {"bmi": 8, "weight": 12}, "gauge_class": "HW",
        "ga": {"population": 10}, "classifier": {"folds": 5},
    }), "cfg.json")
    cfg = load_config(p)
    assert cfg.bins(2) == [8, 12] and cfg.features == ["bmi", "weight"]
    assert cfg.ga.population == 10 and cfg.ga.seed == 3 and cfg.classifier.seed == 3
    assert cfg.classifier.folds == 5
    with pytest.raises(ValidationError, match="unknown config keys"):
        load_config(write(tmp_path, '{"sed": 1}', "bad.json"))
    ds = LabeledDataset(np.zeros((1, 1)), [0], ("UW",), ("bmi",))
    with pytest.raises(ValidationError, match="weight"):
        cfg.check_against(ds)
