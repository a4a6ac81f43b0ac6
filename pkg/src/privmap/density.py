"""Histogram class models and the mutual-information objective.

All information quantities are in bits. Bins are half-open ``[e_i, e_i+1)``
except the last bin of each dimension, which is closed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import LabeledDataset, ValidationError

DEFAULT_BIN_CAP = 10**6
CLAMP = "clamp"
ERROR = "error"


@dataclass(frozen=True, eq=False)
class Grid:
    """Axis-aligned bin edges, one strictly increasing array per dimension."""

    edges: tuple[np.ndarray, ...]
    cap: int = DEFAULT_BIN_CAP

    def __post_init__(self):
        edges = []
        for d, e in enumerate(self.edges):
            e = np.array(e, dtype=float).reshape(-1)
            if e.size < 2:
                raise ValidationError(f"dimension {d}: need at least two bin edges")
            if not np.all(np.isfinite(e)) or np.any(np.diff(e) <= 0):
                raise ValidationError(f"dimension {d}: bin edges must be finite and strictly increasing")
            e.setflags(write=False)
            edges.append(e)
        if not edges:
            raise ValidationError("grid needs at least one dimension")
        object.__setattr__(self, "edges", tuple(edges))
        if self.n_bins > self.cap:
            raise ValidationError(f"grid has {self.n_bins} bins, above the cap of {self.cap}")

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(e.size - 1 for e in self.edges)

    @property
    def n_bins(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))

    @property
    def dimension(self) -> int:
        return len(self.edges)

    def bin_index(self, points, policy: str = CLAMP) -> tuple[np.ndarray, int]:
        """Flat bin index of every point and the number of clamped points."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.dimension:
            raise ValidationError(f"points have dimension {pts.shape[1]}, grid has {self.dimension}")
        idx = np.empty(pts.shape, dtype=np.int64)
        outside = np.zeros(len(pts), dtype=bool)
        for d, e in enumerate(self.edges):
            col = pts[:, d]
            i = np.searchsorted(e, col, side="right") - 1
            i[col == e[-1]] = e.size - 2
            out = (i < 0) | (i > e.size - 2)
            outside |= out
            idx[:, d] = np.clip(i, 0, e.size - 2)
        n_out = int(outside.sum())
        if n_out and policy == ERROR:
            row = int(np.flatnonzero(outside)[0])
            raise ValidationError(f"point {row} lies outside the grid")
        if len(pts) == 0:
            return np.zeros(0, dtype=np.int64), 0
        return np.ravel_multi_index(tuple(idx.T), self.shape), n_out


def equal_width_grid(points, bins: int | Sequence[int], cap: int = DEFAULT_BIN_CAP) -> Grid:
    """Equal-width bins between the per-dimension sample min and max.

    A dimension with zero spread gets a unit-wide range around its value.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = pts.shape[1]
    counts = [int(bins)] * n if np.isscalar(bins) else [int(b) for b in bins]
    if len(counts) != n:
        raise ValidationError(f"{len(counts)} bin counts for dimension {n}")
    if any(b < 1 for b in counts):
        raise ValidationError("bin counts must be positive")
    if len(pts) == 0:
        raise ValidationError("cannot derive a grid from no points")
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    edges = []
    for d in range(n):
        a, b = lo[d], hi[d]
        if not b > a:
            a, b = a - 0.5, b + 0.5
        edges.append(np.linspace(a, b, counts[d] + 1))
    return Grid(tuple(edges), cap)


@dataclass(frozen=True, eq=False)
class HistogramModel:
    """Binned class-conditional distributions with a class prior.

    ``counts`` has shape ``(k, n_bins)``. ``alpha`` is an optional Laplace
    pseudo-count added to every bin when normalizing.
    """

    counts: np.ndarray
    prior: np.ndarray
    grid: Grid | None = None
    alpha: float = 0.0
    policy: str = CLAMP
    n_clamped: int = 0
    classes: tuple[str, ...] | None = field(default=None)

    def __post_init__(self):
        counts = np.array(self.counts)
        if counts.ndim != 2:
            raise ValidationError(f"counts must be (classes, bins), got shape {counts.shape}")
        if np.any(counts < 0) or not np.all(np.isfinite(counts)):
            raise ValidationError("counts must be non-negative")
        prior = np.array(self.prior, dtype=float).reshape(-1)
        if prior.shape[0] != counts.shape[0]:
            raise ValidationError("prior length differs from the number of classes")
        if np.any(prior < 0) or abs(prior.sum() - 1.0) > 1e-12:
            raise ValidationError("prior must be a probability vector")
        if self.grid is not None and self.grid.n_bins != counts.shape[1]:
            raise ValidationError("grid size differs from the number of bins in counts")
        if self.alpha < 0:
            raise ValidationError("smoothing alpha must be non-negative")
        counts.setflags(write=False)
        prior.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "prior", prior)

    @classmethod
    def from_counts(cls, counts, prior=None, **kw) -> "HistogramModel":
        """Model from raw counts; the prior defaults to class shares ``n_c / N``."""
        counts = np.asarray(counts)
        if prior is None:
            totals = counts.sum(axis=1).astype(float)
            if totals.sum() <= 0:
                raise ValidationError("all counts are zero")
            prior = totals / totals.sum()
        return cls(counts, prior, **kw)

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def n_bins(self) -> int:
        return self.counts.shape[1]

    @property
    def conditionals(self) -> np.ndarray:
        """``p(z = bin | c)``, one normalized row per class."""
        c = self.counts.astype(float) + self.alpha
        totals = c.sum(axis=1, keepdims=True)
        empty = np.flatnonzero(totals[:, 0] <= 0)
        if empty.size:
            raise ValidationError(f"class {self._name(int(empty[0]))} has no counts")
        return c / totals

    @property
    def marginal(self) -> np.ndarray:
        """``p(z = bin)`` under the prior."""
        return self.prior @ self.conditionals

    def _name(self, i: int) -> str:
        return repr(self.classes[i]) if self.classes else str(i)


def build_histogram(
    data: LabeledDataset,
    grid: Grid,
    policy: str = CLAMP,
    alpha: float = 0.0,
) -> HistogramModel:
    """Count each class's points per bin; prior = class shares.

    Points outside the grid are clamped into the nearest edge bin (counted
    in ``n_clamped``) unless ``policy="error"``.
    """
    if policy not in (CLAMP, ERROR):
        raise ValidationError(f"unknown out-of-range policy {policy!r}")
    flat, n_out = grid.bin_index(data.points, policy)
    k, nb = data.n_classes, grid.n_bins
    counts = np.bincount(data.labels * nb + flat, minlength=k * nb).reshape(k, nb)
    return HistogramModel.from_counts(
        counts, grid=grid, alpha=alpha, policy=policy, n_clamped=n_out, classes=data.classes
    )


def _xlog2y(x: np.ndarray, ratio: np.ndarray) -> np.ndarray:
    # 0 * log(.) contributes 0
    out = np.zeros_like(x)
    nz = x > 0
    out[nz] = x[nz] * np.log2(ratio[nz])
    return out


def mutual_information(model: HistogramModel) -> float:
    """``I(Z; C)`` of the binned model, in bits."""
    cond = model.conditionals
    pz = model.marginal
    ratio = np.divide(cond, pz, out=np.ones_like(cond), where=pz > 0)
    per_class = _xlog2y(cond, ratio).sum(axis=1)
    return max(float(model.prior @ per_class), 0.0)


def entropy(p) -> float:
    p = np.asarray(p, dtype=float)
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum())


def posterior_table(model: HistogramModel) -> np.ndarray:
    """``p(c | bin)`` for every bin, shape ``(k, n_bins)``.

    Bins no class can produce fall back to the prior.
    """
    joint = model.prior[:, None] * model.conditionals
    pz = joint.sum(axis=0)
    table = np.empty_like(joint)
    seen = pz > 0
    table[:, seen] = joint[:, seen] / pz[seen]
    table[:, ~seen] = model.prior[:, None]
    return table


def posterior(model: HistogramModel, z) -> np.ndarray:
    """Posterior over classes for one observed message ``z``."""
    if model.grid is None:
        raise ValidationError("model has no grid to locate points")
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValidationError("observed point is not finite")
    (b,), _ = model.grid.bin_index(z.reshape(1, -1), CLAMP)
    return posterior_table(model)[:, b]


def kl_divergence(p, q) -> float:
    """``D(p || q)`` in bits. Requires ``q_i = 0 => p_i = 0``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValidationError(f"length mismatch: {p.shape} vs {q.shape}")
    if np.any(p < 0) or np.any(q < 0):
        raise ValidationError("probabilities must be non-negative")
    bad = (q == 0) & (p > 0)
    if bad.any():
        raise ValidationError(f"p is not absolutely continuous w.r.t. q at index {int(np.flatnonzero(bad)[0])}")
    ratio = np.divide(p, q, out=np.ones_like(p), where=q > 0)
    return max(float(_xlog2y(p, ratio).sum()), 0.0)


def expected_posterior_kl(model: HistogramModel) -> float:
    """Average over ``p(z)`` of ``D(p(c | z) || p(c))``, in bits.

    Equals :func:`mutual_information` on the same model; the two routes
    only differ in summation order.
    """
    pz = model.marginal
    post = posterior_table(model)
    prior = np.broadcast_to(model.prior[:, None], post.shape)
    ratio = np.divide(post, prior, out=np.ones_like(post), where=prior > 0)
    per_bin = _xlog2y(post, ratio).sum(axis=0)
    return max(float(pz @ per_bin), 0.0)
