"""Learn affine privacy mappings by minimizing histogram mutual information.

Each class ``c`` gets the encoder ``z = A_c (x - b_c)``. Applying one
common invertible affine map to every encoder leaves the objective
unchanged, so the gauge class is pinned to the identity and only the other
classes are searched. The objective is piecewise constant in the
parameters, which is why a genetic algorithm (and optionally a
derivative-free simplex polish) is used instead of gradients.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import (
    DET_EPS,
    LabeledDataset,
    PrivacyMapping,
    ValidationError,
    _class_index,
    _normalized_det,
    encode_dataset,
)
from .density import HistogramModel, equal_width_grid, mutual_information

log = logging.getLogger(__name__)

INVALID = float("inf")
FITNESS_OFFSET = 0.01
INIT_ATTEMPTS = 20


@dataclass(frozen=True)
class AffineSearchSpace:
    """Genome layout: ``(A_c, b_c)`` row-major for every non-gauge class."""

    classes: tuple[str, ...]
    dimension: int
    gauge_class: int | str = 0

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        if self.dimension < 1:
            raise ValidationError("dimension must be positive")
        object.__setattr__(self, "gauge_class", _class_index(self.classes, self.gauge_class))

    @classmethod
    def for_data(cls, data: LabeledDataset, gauge_class: int | str = 0) -> "AffineSearchSpace":
        return cls(data.classes, data.dimension, gauge_class)

    @property
    def free_classes(self) -> list[int]:
        return [i for i in range(len(self.classes)) if i != self.gauge_class]

    @property
    def genome_length(self) -> int:
        n = self.dimension
        return len(self.free_classes) * (n * n + n)

    def unpack(self, genome) -> tuple[np.ndarray, np.ndarray]:
        """Per-class matrices ``(k, n, n)`` and offsets ``(k, n)``."""
        genome = np.asarray(genome, dtype=float)
        if genome.shape != (self.genome_length,):
            raise ValidationError(f"genome length {genome.size}, expected {self.genome_length}")
        n, k = self.dimension, len(self.classes)
        mats = np.tile(np.eye(n), (k, 1, 1))
        offs = np.zeros((k, n))
        step = n * n + n
        for j, c in enumerate(self.free_classes):
            chunk = genome[j * step:(j + 1) * step]
            mats[c] = chunk[: n * n].reshape(n, n)
            offs[c] = chunk[n * n:]
        return mats, offs

    def to_mapping(self, genome) -> PrivacyMapping:
        mats, offs = self.unpack(genome)
        return PrivacyMapping.affine(self.classes, mats, offs)

    def genome_of(self, mapping: PrivacyMapping) -> np.ndarray:
        """Genome of an affine-expressible mapping (gauge class parameters dropped)."""
        aff = mapping.to_affine()
        mats, offs = aff.params["matrix"], aff.params["offset"]
        return np.concatenate(
            [np.concatenate([mats[c].reshape(-1), offs[c]]) for c in self.free_classes]
        ) if self.free_classes else np.zeros(0)


@dataclass(frozen=True)
class GAConfig:
    population: int = 60
    generations: int = 100
    crossover_rate: float = 0.7
    mutation_rate: float = 0.15
    #: Mutation std as a fraction of each gene's data scale.
    mutation_scale: float = 0.2
    elitism: int = 2
    seed: int = 0
    refine: bool = False
    refine_maxiter: int = 2000

    def __post_init__(self):
        if self.population < 2:
            raise ValidationError("population must be at least 2")
        if self.generations < 0:
            raise ValidationError("generations must be non-negative")
        for name in ("crossover_rate", "mutation_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1]")
        if not self.mutation_scale > 0:
            raise ValidationError("mutation_scale must be positive")
        if not 0 <= self.elitism <= self.population:
            raise ValidationError("elitism must lie in [0, population]")
        if self.seed is None or int(self.seed) < 0:
            raise ValidationError("seed must be a non-negative integer")


class _Objective:
    """Histogram MI of the encoded training data as a function of the genome."""

    def __init__(self, data: LabeledDataset, bins, space: AffineSearchSpace):
        if data.classes != space.classes or data.dimension != space.dimension:
            raise ValidationError("search space does not match the dataset")
        self.data = data
        self.bins = bins
        self.space = space
        self.rows = [np.flatnonzero(data.labels == i) for i in range(data.n_classes)]
        counts = data.class_counts()
        self.prior = counts / counts.sum()
        self.nonempty = np.flatnonzero(counts > 0)

    def encode(self, mats, offs) -> np.ndarray:
        z = np.empty_like(self.data.points)
        for c, rows in enumerate(self.rows):
            z[rows] = (self.data.points[rows] - offs[c]) @ mats[c].T
        return z

    def __call__(self, genome) -> float:
        mats, offs = self.space.unpack(genome)
        if not np.all(np.isfinite(genome)):
            return INVALID
        if any(_normalized_det(mats[c]) <= DET_EPS for c in self.space.free_classes):
            return INVALID
        z = self.encode(mats, offs)
        if not np.all(np.isfinite(z)):
            return INVALID
        return mapped_mi(self.data, z, self.bins, self.prior, self.nonempty)


def mapped_mi(data: LabeledDataset, z: np.ndarray, bins, prior=None, nonempty=None) -> float:
    """MI between class and encoded points on the min/max equal-width grid."""
    grid = equal_width_grid(z, bins)
    flat, _ = grid.bin_index(z)
    k, nb = data.n_classes, grid.n_bins
    counts = np.bincount(data.labels * nb + flat, minlength=k * nb).reshape(k, nb)
    if prior is None:
        totals = data.class_counts()
        prior = totals / totals.sum()
        nonempty = np.flatnonzero(totals > 0)
    # empty classes carry zero prior and no information
    model = HistogramModel(counts[nonempty], prior[nonempty] / prior[nonempty].sum(), grid)
    return mutual_information(model)


def mapping_mi(mapping: PrivacyMapping, data: LabeledDataset, bins) -> float:
    """MI of ``data`` after encoding every record with its class's encoder."""
    z = encode_dataset(mapping, data).points
    return mapped_mi(data, z, bins)


def fitness(genome, data: LabeledDataset, bins, space: AffineSearchSpace | None = None) -> float:
    """Objective value (bits) of a genome; ``inf`` for invalid genomes."""
    space = space or AffineSearchSpace.for_data(data)
    return _Objective(data, bins, space)(genome)


def selection_probabilities(scores: Sequence[float]) -> np.ndarray:
    """Fitness-proportional weights ``1 / (MI + 0.01)``; invalid genomes get 0."""
    scores = np.asarray(scores, dtype=float)
    weights = np.where(np.isfinite(scores), 1.0 / (scores + FITNESS_OFFSET), 0.0)
    total = weights.sum()
    if total <= 0:
        return np.full(len(scores), 1.0 / len(scores))
    return weights / total


def next_generation(
    population: np.ndarray,
    scores: np.ndarray,
    cfg: GAConfig,
    sigma: np.ndarray,
    stream: Sequence[int],
) -> np.ndarray:
    """Selection, uniform crossover and Gaussian mutation.

    The ``cfg.elitism`` best genomes survive unchanged. Parent selection
    draws from ``stream``; child ``i`` draws crossover and mutation noise
    from its own substream ``(*stream, i)`` so children are independent of
    evaluation order.
    """
    population = np.asarray(population, dtype=float)
    size, length = population.shape
    order = np.argsort(scores, kind="stable")
    elite = population[order[: cfg.elitism]]
    n_children = size - cfg.elitism
    if n_children == 0:
        return elite.copy()
    probs = selection_probabilities(scores)
    parents = np.random.default_rng(list(stream)).choice(size, size=(n_children, 2), p=probs)
    children = np.empty((n_children, length))
    for i, (a, b) in enumerate(parents):
        rng = np.random.default_rng([*stream, i])
        child = population[a].copy()
        if rng.random() < cfg.crossover_rate:
            take = rng.random(length) < 0.5
            child[take] = population[b][take]
        mutate = rng.random(length) < cfg.mutation_rate
        child[mutate] += rng.normal(0.0, sigma[mutate])
        children[i] = child
    return np.vstack([elite, children])


def _gene_scales(data: LabeledDataset, space: AffineSearchSpace) -> np.ndarray:
    n = space.dimension
    spread = data.points.std(axis=0) if len(data) > 1 else np.ones(n)
    spread = np.where(spread > 0, spread, 1.0)
    block = np.concatenate([np.ones(n * n), spread])
    return np.tile(block, len(space.free_classes))


def _initial_population(data, space, cfg, objective) -> tuple[np.ndarray, np.ndarray]:
    n = space.dimension
    g = space.gauge_class
    means = np.array(
        [data.points[rows].mean(axis=0) if rows.size else np.zeros(n) for rows in objective.rows]
    )
    scales = _gene_scales(data, space)[n * n: n * n + n] if space.free_classes else np.ones(n)
    centre = np.concatenate(
        [np.concatenate([np.eye(n).reshape(-1), means[c] - means[g]]) for c in space.free_classes]
    )
    # the identity keeps the learned objective at or below the raw data's
    identity = np.tile(np.concatenate([np.eye(n).reshape(-1), np.zeros(n)]), len(space.free_classes))
    rng = np.random.default_rng([cfg.seed, 2**31])
    pop = np.empty((cfg.population, space.genome_length))
    scores = np.empty(cfg.population)
    step = n * n + n
    for p in range(cfg.population):
        for _ in range(INIT_ATTEMPTS):
            genome = centre.copy()
            if p == 1:
                genome = identity
            elif p > 1:
                for j in range(len(space.free_classes)):
                    genome[j * step: j * step + n * n] += rng.normal(0.0, 0.1, n * n)
                    genome[j * step + n * n: (j + 1) * step] += rng.normal(0.0, 0.1 * scales)
            score = objective(genome)
            if np.isfinite(score):
                break
        pop[p], scores[p] = genome, score
    if not np.any(np.isfinite(scores)):
        raise ValidationError(
            f"no valid candidate after {INIT_ATTEMPTS} initialization attempts; check the data and bins"
        )
    return pop, scores


def learn(
    data: LabeledDataset,
    space: AffineSearchSpace | None = None,
    cfg: GAConfig = GAConfig(),
    bins=10,
    on_generation: Callable[[int, float], None] | None = None,
) -> tuple[PrivacyMapping, list[float]]:
    """Search affine mappings for minimal class/message mutual information.

    Returns the best mapping found (gauge class = identity) and the
    best-so-far objective after initialization and after every generation.
    The run is a deterministic function of the inputs and ``cfg.seed``.
    """
    space = space or AffineSearchSpace.for_data(data)
    if len(data) == 0:
        raise ValidationError("cannot learn from an empty dataset")
    objective = _Objective(data, bins, space)
    if not space.free_classes:
        genome = np.zeros(0)
        best = objective(genome)
        if on_generation:
            on_generation(0, best)
        return space.to_mapping(genome), [best]

    pop, scores = _initial_population(data, space, cfg, objective)
    best_i = int(np.argmin(scores))
    best_genome, best = pop[best_i].copy(), float(scores[best_i])
    trace = [best]
    if on_generation:
        on_generation(0, best)
    sigma = cfg.mutation_scale * _gene_scales(data, space)

    for gen in range(1, cfg.generations + 1):
        if best == 0.0:
            break
        pop = next_generation(pop, scores, cfg, sigma, (int(cfg.seed), gen))
        scores = np.array([objective(g) for g in pop])
        i = int(np.argmin(scores))
        if scores[i] < best:
            best_genome, best = pop[i].copy(), float(scores[i])
        trace.append(best)
        if on_generation:
            on_generation(gen, best)
        log.debug("generation %d: best MI %.6f bits", gen, best)

    if cfg.refine and best > 0.0:
        best_genome, best = _refine(objective, best_genome, best, cfg.refine_maxiter)
        trace.append(best)
        if on_generation:
            on_generation(len(trace) - 1, best)

    return space.to_mapping(best_genome), trace


def _refine(objective, genome, value, maxiter):
    from scipy.optimize import minimize

    res = minimize(
        objective, genome, method="Nelder-Mead",
        options={"maxiter": maxiter, "xatol": 1e-6, "fatol": 1e-9},
    )
    if np.isfinite(res.fun) and res.fun < value:
        return np.asarray(res.x, dtype=float), float(objective(res.x))
    return genome, value
