"""Points, labeled datasets and per-class privacy mappings.

A privacy mapping assigns every private class ``c`` an injective encoder
``R(c)`` over the information space. A sender of class ``c`` transmits
``z = R(c)(x)``; a recipient who knows ``c`` recovers ``x`` with the left
inverse. Five encoder families are supported::

    normal       z = W_c (x - mu_c)
    exp          z = rate_c * x
    gamma        z = x / scale_c
    uniform      z = (x - low_c) / (high_c - low_c)
    affine       z = A_c (x - b_c)

Points are plain float arrays. ``encode``/``decode`` accept one point of
shape ``(n,)`` or a batch of shape ``(m, n)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

#: Singularity threshold for |det| normalized by (max row norm) ** n.
DET_EPS = 1e-8


class PrivmapError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(PrivmapError, ValueError):
    """Malformed input: wrong shapes, unknown classes, out-of-domain points."""


class NumericError(PrivmapError, ArithmeticError):
    """A numerical procedure failed (singular covariance, non-convergence)."""


class Family(str, enum.Enum):
    NORMAL = "normal"
    EXPONENTIAL = "exp"
    GAMMA = "gamma"
    UNIFORM = "uniform"
    AFFINE = "affine"


PARAM_NAMES: dict[Family, tuple[str, ...]] = {
    Family.NORMAL: ("mean", "whitening", "covariance"),
    Family.EXPONENTIAL: ("rate",),
    Family.GAMMA: ("shape", "scale"),
    Family.UNIFORM: ("low", "high"),
    Family.AFFINE: ("matrix", "offset"),
}


def _dim_param(family: Family) -> str:
    return "scale" if family == Family.GAMMA else PARAM_NAMES[family][0]


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Points with class labels and optional subject identifiers.

    ``classes`` fixes the class order; labels index into it. The order is
    meaningful for ordinal classifiers (first class = lowest category).
    """

    points: np.ndarray
    labels: np.ndarray
    classes: tuple[str, ...]
    feature_names: tuple[str, ...] | None = None
    subjects: tuple[str, ...] | None = None

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if points.ndim == 1 and points.size == 0:
            n = len(self.feature_names) if self.feature_names else 0
            points = points.reshape(0, n)
        if points.ndim != 2:
            raise ValidationError(f"points must be a 2-D array, got shape {points.shape}")
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if labels.shape[0] != points.shape[0]:
            raise ValidationError(
                f"{points.shape[0]} points but {labels.shape[0]} labels"
            )
        classes = tuple(str(c) for c in self.classes)
        if len(set(classes)) != len(classes):
            raise ValidationError(f"duplicate class names in {classes}")
        if labels.size and (labels.min() < 0 or labels.max() >= len(classes)):
            raise ValidationError("label index outside the declared class list")
        if not np.all(np.isfinite(points)):
            row = int(np.argwhere(~np.isfinite(points))[0][0])
            raise ValidationError(f"non-finite coordinate in point {row}")
        if self.feature_names is not None and len(self.feature_names) != points.shape[1]:
            raise ValidationError(
                f"{len(self.feature_names)} feature names for dimension {points.shape[1]}"
            )
        if self.subjects is not None:
            if len(self.subjects) != points.shape[0]:
                raise ValidationError("subject ids do not match the number of points")
            if any(s == "" for s in self.subjects):
                raise ValidationError("empty subject id")
        object.__setattr__(self, "points", _frozen(points))
        object.__setattr__(self, "labels", _frozen(labels, np.int64))
        object.__setattr__(self, "classes", classes)
        if self.feature_names is not None:
            object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if self.subjects is not None:
            object.__setattr__(self, "subjects", tuple(str(s) for s in self.subjects))

    @classmethod
    def from_blocks(cls, blocks: Mapping[str, np.ndarray], feature_names=None) -> "LabeledDataset":
        """Build a dataset from ``{class name: (m_c, n) array}`` in insertion order."""
        classes = tuple(blocks)
        arrays = [np.atleast_2d(np.asarray(b, dtype=float)) for b in blocks.values()]
        labels = np.concatenate([np.full(len(a), i) for i, a in enumerate(arrays)])
        return cls(np.vstack(arrays), labels, classes, feature_names)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def class_index(self, c: int | str) -> int:
        return _class_index(self.classes, c)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    def class_points(self, c: int | str) -> np.ndarray:
        return self.points[self.labels == self.class_index(c)]

    def subset(self, index) -> "LabeledDataset":
        index = np.asarray(index)
        subjects = None
        if self.subjects is not None:
            subjects = tuple(np.asarray(self.subjects, dtype=object)[index])
        return LabeledDataset(
            self.points[index], self.labels[index], self.classes, self.feature_names, subjects
        )

    def with_points(self, points: np.ndarray) -> "LabeledDataset":
        return LabeledDataset(points, self.labels, self.classes, self.feature_names, self.subjects)

    def require_nonempty_classes(self) -> None:
        counts = self.class_counts()
        empty = [self.classes[i] for i in np.flatnonzero(counts == 0)]
        if empty:
            raise ValidationError(f"classes without records: {', '.join(empty)}")


def _class_index(classes: Sequence[str], c: int | str) -> int:
    if isinstance(c, (int, np.integer)) and not isinstance(c, bool):
        if not 0 <= c < len(classes):
            raise ValidationError(f"class index {c} out of range for {len(classes)} classes")
        return int(c)
    try:
        return classes.index(str(c))
    except ValueError:
        raise ValidationError(f"unknown class {c!r}; known: {', '.join(classes)}") from None


@dataclass(frozen=True, eq=False)
class PrivacyMapping:
    """Per-class encoder parameters for one family.

    Per-class arrays carry the class on the leading axis, e.g. ``matrix``
    has shape ``(k, n, n)``. The gamma ``shape`` is shared by all classes
    and has shape ``(n,)``.
    """

    family: Family
    classes: tuple[str, ...]
    params: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        family = Family(self.family)
        expected = PARAM_NAMES[family]
        if set(self.params) != set(expected):
            raise ValidationError(
                f"{family.value} mapping needs parameters {expected}, got {tuple(self.params)}"
            )
        params = {name: _frozen(self.params[name]) for name in expected}
        k = len(self.classes)
        for name, arr in params.items():
            if name == "shape":
                continue
            if arr.ndim < 2 or arr.shape[0] != k:
                raise ValidationError(
                    f"parameter {name!r} must have a leading class axis of length {k}, "
                    f"got shape {arr.shape}"
                )
        n = params[_dim_param(family)].shape[-1]
        for name, arr in params.items():
            tail = arr.shape[1:] if name != "shape" else arr.shape
            want = (n, n) if name in ("whitening", "covariance", "matrix") else (n,)
            if tail != want:
                raise ValidationError(f"parameter {name!r} has shape {arr.shape}, dimension is {n}")
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "classes", tuple(str(c) for c in self.classes))
        object.__setattr__(self, "params", params)

    @property
    def dimension(self) -> int:
        return self.params[_dim_param(self.family)].shape[-1]

    def index(self, c: int | str) -> int:
        return _class_index(self.classes, c)

    @cached_property
    def violations(self) -> tuple[str, ...]:
        return tuple(validate_mapping(self))

    # constructors ------------------------------------------------------

    @classmethod
    def affine(cls, classes, matrices, offsets) -> "PrivacyMapping":
        return cls(Family.AFFINE, tuple(classes), {"matrix": matrices, "offset": offsets})

    @classmethod
    def identity(cls, classes, dimension: int) -> "PrivacyMapping":
        k = len(classes)
        return cls.affine(classes, np.tile(np.eye(dimension), (k, 1, 1)), np.zeros((k, dimension)))

    def to_affine(self) -> "PrivacyMapping":
        """Express a normal or affine mapping as ``A_c (x - b_c)``.

        The scale families are affine too (diagonal ``A_c``); they are
        converted as well, dropping their domain restrictions.
        """
        p = self.params
        k, n = len(self.classes), self.dimension
        if self.family == Family.AFFINE:
            return self
        if self.family == Family.NORMAL:
            return PrivacyMapping.affine(self.classes, p["whitening"], p["mean"])
        if self.family == Family.EXPONENTIAL:
            diag = p["rate"]
            offset = np.zeros((k, n))
        elif self.family == Family.GAMMA:
            diag = 1.0 / p["scale"]
            offset = np.zeros((k, n))
        else:
            diag = 1.0 / (p["high"] - p["low"])
            offset = p["low"]
        matrices = np.stack([np.diag(d) for d in diag])
        return PrivacyMapping.affine(self.classes, matrices, offset)


def _normalized_det(m: np.ndarray) -> float:
    """|det(m)| / (max row norm) ** n; 0 for the zero matrix, at most 1."""
    scale = np.max(np.linalg.norm(m, axis=1))
    if not np.isfinite(scale) or scale == 0.0:
        return 0.0
    return float(abs(np.linalg.det(m / scale)))


def validate_mapping(mapping: PrivacyMapping) -> list[str]:
    """List every violated injectivity or finiteness invariant.

    Returns an empty list for a usable mapping. Each entry names the class
    and the offending parameter; nothing is raised.
    """
    out: list[str] = []
    p = mapping.params
    for name, arr in p.items():
        if not np.all(np.isfinite(arr)):
            out.append(f"parameter {name}: non-finite values")
    if out:
        return out
    if mapping.family == Family.GAMMA and np.any(p["shape"] <= 0):
        out.append("shape: non-positive shared shape")
    for i, c in enumerate(mapping.classes):
        if mapping.family == Family.NORMAL:
            if _normalized_det(p["whitening"][i]) <= DET_EPS:
                out.append(f"class {c}: singular W")
        elif mapping.family == Family.AFFINE:
            if _normalized_det(p["matrix"][i]) <= DET_EPS:
                out.append(f"class {c}: singular A")
        elif mapping.family == Family.EXPONENTIAL:
            if np.any(p["rate"][i] <= 0):
                out.append(f"class {c}: non-positive rate")
        elif mapping.family == Family.GAMMA:
            if np.any(p["scale"][i] <= 0):
                out.append(f"class {c}: non-positive scale")
        elif mapping.family == Family.UNIFORM:
            bad = np.flatnonzero(p["high"][i] - p["low"][i] <= 0)
            if bad.size:
                out.append(f"class {c}: empty interval low >= high in dimension {int(bad[0])}")
    return out


def _as_points(mapping: PrivacyMapping, x, what: str) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.ndim != 2 or arr.shape[1] != mapping.dimension:
        raise ValidationError(
            f"{what} has dimension {arr.shape[-1]}, mapping expects {mapping.dimension}"
        )
    if not np.all(np.isfinite(arr)):
        row, col = np.argwhere(~np.isfinite(arr))[0]
        raise ValidationError(f"{what} {row}: coordinate {col} is not finite")
    return arr, single


def _check_usable(mapping: PrivacyMapping) -> None:
    if mapping.violations:
        raise ValidationError("invalid mapping parameters: " + "; ".join(mapping.violations))


def _domain_error(mapping, i, pts, mask, bounds):
    row, col = np.argwhere(mask)[0]
    raise ValidationError(
        f"point {row}: coordinate {col} = {pts[row, col]!r} outside the domain {bounds} "
        f"of class {mapping.classes[i]!r}"
    )


def encode(mapping: PrivacyMapping, c: int | str, x) -> np.ndarray:
    """Privatize ``x`` as sent by a member of class ``c``."""
    _check_usable(mapping)
    i = mapping.index(c)
    pts, single = _as_points(mapping, x, "point")
    p = mapping.params
    fam = mapping.family
    if fam == Family.NORMAL:
        z = (pts - p["mean"][i]) @ p["whitening"][i].T
    elif fam == Family.AFFINE:
        z = (pts - p["offset"][i]) @ p["matrix"][i].T
    elif fam in (Family.EXPONENTIAL, Family.GAMMA):
        neg = pts < 0
        if neg.any():
            _domain_error(mapping, i, pts, neg, "[0, inf)")
        z = pts * p["rate"][i] if fam == Family.EXPONENTIAL else pts / p["scale"][i]
    else:
        low, high = p["low"][i], p["high"][i]
        outside = (pts < low) | (pts > high)
        if outside.any():
            row, col = np.argwhere(outside)[0]
            _domain_error(mapping, i, pts, outside, f"[{low[col]!r}, {high[col]!r}]")
        z = (pts - low) / (high - low)
    return z[0] if single else z


def decode(mapping: PrivacyMapping, c: int | str, z) -> np.ndarray:
    """Recover the original point from ``z`` sent by a member of class ``c``."""
    _check_usable(mapping)
    i = mapping.index(c)
    pts, single = _as_points(mapping, z, "encoded point")
    p = mapping.params
    fam = mapping.family
    if fam == Family.NORMAL:
        x = np.linalg.solve(p["whitening"][i], pts.T).T + p["mean"][i]
    elif fam == Family.AFFINE:
        x = np.linalg.solve(p["matrix"][i], pts.T).T + p["offset"][i]
    elif fam == Family.EXPONENTIAL:
        x = pts / p["rate"][i]
    elif fam == Family.GAMMA:
        x = pts * p["scale"][i]
    else:
        x = p["low"][i] + pts * (p["high"][i] - p["low"][i])
    return x[0] if single else x


def encode_dataset(mapping: PrivacyMapping, data: LabeledDataset) -> LabeledDataset:
    """Encode every record with the encoder of its own class."""
    return data.with_points(_apply_by_class(encode, mapping, data))


def decode_dataset(mapping: PrivacyMapping, data: LabeledDataset) -> LabeledDataset:
    return data.with_points(_apply_by_class(decode, mapping, data))


def _apply_by_class(fn, mapping: PrivacyMapping, data: LabeledDataset) -> np.ndarray:
    if data.dimension != mapping.dimension:
        raise ValidationError(
            f"dataset dimension {data.dimension} does not match mapping dimension {mapping.dimension}"
        )
    out = np.empty_like(data.points)
    for i, name in enumerate(data.classes):
        rows = data.labels == i
        if rows.any():
            out[rows] = fn(mapping, name, data.points[rows])
    return out
