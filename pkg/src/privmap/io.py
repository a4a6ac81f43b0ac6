"""CSV datasets, mapping files, run configurations and reports.

Mapping files are JSON with a ``format_version`` field. Parameter values
are written with 17 significant digits so a parsed mapping reproduces the
original encoder outputs bit for bit.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .core import Family, LabeledDataset, PrivacyMapping, PARAM_NAMES, ValidationError
from .data import BodyRecord, records_from_rows
from .learner import GAConfig

FORMAT_VERSION = 1
SUBJECT_COL = "subject_id"
CLASS_COL = "class"
UNLABELED = "unlabeled"


# -- datasets --------------------------------------------------------------


def parse_dataset(
    path,
    classes: Sequence[str] | None = None,
    require_labels: bool = True,
    features: Sequence[str] | None = None,
) -> LabeledDataset:
    """Read a labeled CSV.

    Columns ``subject_id`` and ``class`` are optional; every other column is
    a numeric feature unless ``features`` picks a subset (in that order).
    Class order follows ``classes`` when given, else first appearance.
    Errors name the line and column of the first bad cell.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        if len(set(header)) != len(header):
            raise ValidationError(f"{path}: duplicate column names")
        if require_labels and CLASS_COL not in header:
            raise ValidationError(f"{path}: missing required column {CLASS_COL!r}")
        available = [h for h in header if h not in (SUBJECT_COL, CLASS_COL)]
        if features is None:
            features = available
        else:
            missing = [f for f in features if f not in available]
            if missing:
                raise ValidationError(f"{path}: missing feature columns {', '.join(missing)}")
        feat_pos = [header.index(f) for f in features]
        cls_pos = header.index(CLASS_COL) if CLASS_COL in header else None
        sub_pos = header.index(SUBJECT_COL) if SUBJECT_COL in header else None

        names = list(classes) if classes is not None else []
        fixed = classes is not None
        points, labels, subjects = [], [], []
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValidationError(
                    f"{path}:{line}: expected {len(header)} cells, found {len(row)}"
                )
            vals = []
            for p in feat_pos:
                cell = row[p].strip()
                try:
                    v = float(cell)
                except ValueError:
                    raise ValidationError(
                        f"{path}:{line}: column {header[p]!r}: {cell!r} is not a number"
                    ) from None
                if not np.isfinite(v):
                    raise ValidationError(f"{path}:{line}: column {header[p]!r}: non-finite value")
                vals.append(v)
            points.append(vals)
            if cls_pos is not None:
                name = row[cls_pos].strip()
                if name not in names:
                    if fixed:
                        raise ValidationError(
                            f"{path}:{line}: column {CLASS_COL!r}: unknown class {name!r}"
                        )
                    names.append(name)
                labels.append(names.index(name))
            else:
                labels.append(0)
            if sub_pos is not None:
                subjects.append(row[sub_pos].strip())
    if cls_pos is None:
        names = [UNLABELED]
    arr = np.array(points, dtype=float).reshape(len(points), len(features))
    if sub_pos is not None and any(s == "" for s in subjects):
        line = subjects.index("") + 2
        raise ValidationError(f"{path}:{line}: column {SUBJECT_COL!r}: empty subject id")
    return LabeledDataset(
        arr, labels, tuple(names), tuple(features), tuple(subjects) if sub_pos is not None else None
    )


def write_dataset(path, data: LabeledDataset) -> None:
    """Write ``subject_id`` (when present), ``class`` and the features."""
    names = data.feature_names or tuple(f"x{i}" for i in range(data.dimension))
    header = ([SUBJECT_COL] if data.subjects is not None else []) + [CLASS_COL, *names]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(len(data)):
            row = [data.subjects[i]] if data.subjects is not None else []
            row.append(data.classes[data.labels[i]])
            row.extend(repr(float(v)) for v in data.points[i])
            w.writerow(row)


def read_body_records(path) -> list[BodyRecord]:
    """Records from a CSV with ``subject_id, age_months, gender, bmi, weight``."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        need = {"subject_id", "age_months", "gender", "bmi", "weight"}
        missing = need - set(reader.fieldnames or ())
        if missing:
            raise ValidationError(f"{path}: missing columns {', '.join(sorted(missing))}")
        try:
            return records_from_rows(reader)
        except (ValueError, KeyError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(f"{path}:{reader.line_num}: {exc}") from None


# -- mappings --------------------------------------------------------------


def _num(v: float) -> str:
    return format(float(v), ".17g")


def _dump(obj: Any, indent: int = 0) -> str:
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}  {json.dumps(k)}: {_dump(v, indent + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, np.ndarray):
        if obj.ndim == 1:
            return "[" + ", ".join(_num(v) for v in obj) + "]"
        rows = [pad + "  " + _dump(r, indent + 1) for r in obj]
        return "[\n" + ",\n".join(rows) + "\n" + pad + "]"
    return json.dumps(obj)


def serialize_mapping(mapping: PrivacyMapping, features: Sequence[str] | None = None) -> str:
    doc: dict[str, Any] = {
        "format_version": FORMAT_VERSION,
        "family": mapping.family.value,
        "classes": list(mapping.classes),
    }
    if features is not None:
        doc["features"] = list(features)
    doc["params"] = {name: mapping.params[name] for name in PARAM_NAMES[mapping.family]}
    return _dump(doc) + "\n"


def parse_mapping(text: str) -> tuple[PrivacyMapping, tuple[str, ...] | None]:
    """Mapping and optional feature names from mapping-file text.

    Parameters are not validated beyond shape; call ``validate_mapping``
    to check injectivity.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"mapping file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ValidationError("mapping file must hold a JSON object")
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValidationError(
            f"unsupported mapping format version {doc.get('format_version')!r}, expected {FORMAT_VERSION}"
        )
    try:
        family = Family(doc["family"])
        classes = tuple(doc["classes"])
        params = {k: np.asarray(v, dtype=float) for k, v in doc["params"].items()}
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed mapping file: {exc}") from None
    features = tuple(doc["features"]) if "features" in doc else None
    return PrivacyMapping(family, classes, params), features


def save_mapping(path, mapping: PrivacyMapping, features=None) -> None:
    Path(path).write_text(serialize_mapping(mapping, features), encoding="utf-8")


def load_mapping(path) -> tuple[PrivacyMapping, tuple[str, ...] | None]:
    return parse_mapping(Path(path).read_text(encoding="utf-8"))


# -- configuration ---------------------------------------------------------


@dataclass
class ClassifierSettings:
    folds: int = 10
    centers: int = 100
    seed: int = 0


@dataclass
class RunConfig:
    """Settings shared by the ``learn``, ``synth``, ``split`` and ``eval`` commands.

    ``dimensions`` maps feature names to histogram bin counts, in order.
    """

    dimensions: dict[str, int] = field(default_factory=dict)
    classes: list[str] | None = None
    family: str = "affine"
    gauge_class: str | int = 0
    seed: int | None = None
    split_fraction: float | None = None
    ga: GAConfig = field(default_factory=GAConfig)
    classifier: ClassifierSettings = field(default_factory=ClassifierSettings)
    cohort: dict | None = None
    n: int | None = None

    @property
    def features(self) -> list[str] | None:
        return list(self.dimensions) or None

    def bins(self, dimension: int, default: int = 10) -> list[int]:
        return list(self.dimensions.values()) if self.dimensions else [default] * dimension

    def require_seed(self, command: str) -> int:
        if self.seed is None:
            raise ValidationError(f"{command}: a seed is required (config 'seed' or --seed)")
        return int(self.seed)

    def check_against(self, data: LabeledDataset) -> None:
        """Every configured class and dimension must exist in ``data``."""
        header = data.feature_names or ()
        missing = [d for d in self.dimensions if d not in header]
        if missing:
            raise ValidationError(f"config dimensions not in the dataset: {', '.join(missing)}")
        if self.classes:
            unknown = [c for c in self.classes if c not in data.classes]
            if unknown:
                raise ValidationError(f"config classes not in the dataset: {', '.join(unknown)}")
        if isinstance(self.gauge_class, str) and self.gauge_class not in data.classes:
            raise ValidationError(f"gauge class {self.gauge_class!r} not in the dataset")


def config_from_dict(doc: dict) -> RunConfig:
    known = {"format_version", "dimensions", "classes", "family", "gauge_class", "seed",
             "split_fraction", "ga", "classifier", "cohort", "n"}
    unknown = set(doc) - known
    if unknown:
        raise ValidationError(f"unknown config keys: {', '.join(sorted(unknown))}")
    version = doc.get("format_version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise ValidationError(f"unsupported config format version {version!r}")
    seed = doc.get("seed")
    ga_doc = dict(doc.get("ga", {}))
    ga_doc.setdefault("seed", seed if seed is not None else 0)
    try:
        ga = GAConfig(**ga_doc)
        clf_doc = dict(doc.get("classifier", {}))
        clf_doc.setdefault("seed", seed if seed is not None else 0)
        classifier = ClassifierSettings(**clf_doc)
    except TypeError as exc:
        raise ValidationError(f"bad config section: {exc}") from None
    dims = doc.get("dimensions", {})
    if isinstance(dims, list):
        dims = {d["name"]: int(d.get("bins", 10)) for d in dims}
    return RunConfig(
        dimensions={str(k): int(v) for k, v in dims.items()},
        classes=doc.get("classes"),
        family=doc.get("family", "affine"),
        gauge_class=doc.get("gauge_class", 0),
        seed=seed,
        split_fraction=doc.get("split_fraction"),
        ga=ga,
        classifier=classifier,
        cohort=doc.get("cohort"),
        n=doc.get("n"),
    )


def load_config(path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: config must be a JSON object")
    return config_from_dict(doc)


def config_to_dict(cfg: RunConfig) -> dict:
    doc = asdict(cfg)
    doc["format_version"] = FORMAT_VERSION
    return doc


def write_report(path, report: dict) -> None:
    Path(path).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
