"""Per-sample strategy scores, normalization, combination and selective recomputation.

Column order everywhere is uncertainty, diversity, class balance, boundary.
The cached path keeps three kinds of state apart: model-dependent columns
(uncertainty, boundary) that only go stale after retraining, the nearest-coreset
distance that only shrinks as batches are added, and running class counts.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .probe import ProbeModel, predict_proba


class Strategy(enum.IntEnum):
    UNCERTAINTY = 0
    DIVERSITY = 1
    CLASS_BALANCE = 2
    BOUNDARY = 3


STRATEGIES = tuple(Strategy)
SHORT_NAMES = ("u", "d", "c", "b")
NEUTRAL = 0.5
_DIST_CHUNK = 256


class StaleCacheError(RuntimeError):
    """A cached value was read against the wrong coreset or model version."""


@dataclass
class ScoreTable:
    raw: np.ndarray
    normalized: np.ndarray
    min_dist: np.ndarray
    class_counts: np.ndarray
    model_version: int = -1
    coreset_version: int = 0
    model_valid: np.ndarray = None
    cache_hits: int = 0
    cache_misses: int = 0
    distance_evals: int = 0

    @classmethod
    def empty(cls, n: int, class_count: int) -> "ScoreTable":
        return cls(
            raw=np.full((n, 4), np.nan),
            normalized=np.full((n, 4), np.nan),
            min_dist=np.full(n, np.inf),
            class_counts=np.zeros(class_count),
            model_valid=np.zeros(n, dtype=bool),
        )


# single-sample scores ------------------------------------------------------

def _check_distribution(probs, tol=1e-6):
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or np.any(p < -tol) or abs(p.sum() - 1.0) > tol:
        raise ValueError(f"not a probability vector: {p}")
    return np.clip(p, 0.0, 1.0)


def score_uncertainty(probs) -> float:
    """Natural-log entropy; zero-probability terms contribute nothing."""
    p = _check_distribution(probs)
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))


def score_boundary(probs) -> float:
    """1 - (top probability - runner-up probability)."""
    p = _check_distribution(probs)
    if p.size < 2:
        raise ValueError("boundary score needs at least two classes")
    top2 = np.partition(p, -2)[-2:]
    return float(1.0 - (top2[1] - top2[0]))


def score_class_balance(label: int, coreset_counts, smoothing: float = 1.0) -> float:
    return float(1.0 / (coreset_counts[label] + smoothing))


def score_diversity(table: ScoreTable, i: int, coreset_version: int | None = None) -> float:
    """Cached distance from sample i to its nearest coreset member (inf if the coreset is empty)."""
    if coreset_version is not None and coreset_version != table.coreset_version:
        raise StaleCacheError(
            f"diversity cache at coreset version {table.coreset_version}, caller expected {coreset_version}")
    return float(table.min_dist[i])


# vectorized forms ------------------------------------------------------------

def entropy_rows(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return -terms.sum(axis=1)


def margin_rows(p: np.ndarray) -> np.ndarray:
    top2 = np.partition(p, -2, axis=1)[:, -2:]
    return 1.0 - (top2[:, 1] - top2[:, 0])


def class_balance_rows(labels: np.ndarray, counts: np.ndarray, smoothing: float = 1.0) -> np.ndarray:
    return 1.0 / (counts[labels] + smoothing)


def pairwise_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Euclidean distances by explicit differences.

    Each entry depends only on its own pair of rows, so results do not change
    with how rows are grouped into calls; the cached and naive paths rely on it.
    """
    out = np.empty((a.shape[0], b.shape[0]))
    for s in range(0, a.shape[0], _DIST_CHUNK):
        diff = a[s:s + _DIST_CHUNK, None, :] - b[None, :, :]
        out[s:s + _DIST_CHUNK] = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return out


def nearest_distance(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    if centers.shape[0] == 0:
        return np.full(points.shape[0], np.inf)
    return pairwise_distances(points, centers).min(axis=1)


def normalize_column(raw) -> np.ndarray:
    """Min-max scale to [0, 1]; a constant column maps to 0.5, an all-inf column to 1.0."""
    v = np.asarray(raw, dtype=np.float64)
    if v.size == 0:
        raise ValueError("cannot normalize an empty column")
    if np.all(np.isposinf(v)):
        return np.ones_like(v)
    lo, hi = v.min(), v.max()
    if not np.isfinite(hi - lo):
        raise ValueError("column mixes finite and infinite scores")
    if hi == lo:
        return np.full_like(v, NEUTRAL)
    return (v - lo) / (hi - lo)


def combined_score(normalized, weights) -> np.ndarray | float:
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (4,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError(f"weights must lie on the 4-simplex, got {w}")
    out = np.asarray(normalized, dtype=np.float64) @ w
    return float(out) if np.ndim(out) == 0 else out


# cache maintenance -------------------------------------------------------------

def refresh_model_scores(table: ScoreTable, model: ProbeModel, features: np.ndarray, pool) -> ScoreTable:
    """Recompute uncertainty and boundary for `pool` if the model changed since the last refresh."""
    pool = np.asarray(pool, dtype=np.int64)
    if table.model_version != model.version:
        table.model_valid[:] = False
        table.model_version = model.version
    todo = pool[~table.model_valid[pool]]
    if todo.size == 0:
        table.cache_hits += 1
        return table
    table.cache_misses += 1
    p = predict_proba(model, features[todo])
    table.raw[todo, Strategy.UNCERTAINTY] = entropy_rows(p)
    table.raw[todo, Strategy.BOUNDARY] = margin_rows(p)
    table.model_valid[todo] = True
    return table


def update_diversity_cache(table: ScoreTable, new_batch_embeds: np.ndarray, pool_embeds: np.ndarray,
                           pool) -> ScoreTable:
    """Fold a newly committed batch into the nearest-coreset distances of `pool` rows only."""
    pool = np.asarray(pool, dtype=np.int64)
    new_batch_embeds = np.asarray(new_batch_embeds, dtype=np.float64)
    if new_batch_embeds.shape[0] == 0:
        return table
    table.coreset_version += 1
    if pool.size:
        d = pairwise_distances(pool_embeds, new_batch_embeds).min(axis=1)
        table.min_dist[pool] = np.minimum(table.min_dist[pool], d)
        table.distance_evals += pool.size * new_batch_embeds.shape[0]
    return table


def update_class_counts(table: ScoreTable, new_batch_labels, class_count: int | None = None) -> ScoreTable:
    labels = np.asarray(new_batch_labels, dtype=np.int64)
    if labels.size:
        table.class_counts = table.class_counts + np.bincount(
            labels, minlength=class_count or len(table.class_counts))
    return table


def fill_class_balance(table: ScoreTable, labels: np.ndarray, pool, smoothing: float = 1.0) -> ScoreTable:
    pool = np.asarray(pool, dtype=np.int64)
    table.raw[pool, Strategy.CLASS_BALANCE] = class_balance_rows(labels[pool], table.class_counts, smoothing)
    return table


def fill_diversity(table: ScoreTable, pool) -> ScoreTable:
    pool = np.asarray(pool, dtype=np.int64)
    table.raw[pool, Strategy.DIVERSITY] = table.min_dist[pool]
    return table


def normalize_table(table: ScoreTable, pool) -> np.ndarray:
    """Normalize every column over the current pool; returns the |pool| x 4 block."""
    pool = np.asarray(pool, dtype=np.int64)
    block = np.column_stack([normalize_column(table.raw[pool, j]) for j in range(4)])
    table.normalized[pool] = block
    return block


def naive_raw_scores(model: ProbeModel, features: np.ndarray, embeds: np.ndarray, labels: np.ndarray,
                     coreset, pool, class_count: int, smoothing: float = 1.0):
    """All four raw columns for `pool` from scratch; returns (|pool| x 4 array, distance evaluations)."""
    coreset = np.asarray(coreset, dtype=np.int64)
    pool = np.asarray(pool, dtype=np.int64)
    p = predict_proba(model, features[pool])
    counts = np.bincount(labels[coreset], minlength=class_count).astype(np.float64)
    raw = np.column_stack([
        entropy_rows(p),
        nearest_distance(embeds[pool], embeds[coreset]),
        class_balance_rows(labels[pool], counts, smoothing),
        margin_rows(p),
    ])
    return raw, pool.size * coreset.size


@dataclass
class AgreementThresholds:
    deltas: np.ndarray
    flagged: np.ndarray = field(default=None)  # |pool| x 4 boolean


def agreement_thresholds(normalized_block: np.ndarray) -> AgreementThresholds:
    """Per-strategy 75th percentile of the normalized pool scores; a sample is flagged iff strictly above."""
    block = np.asarray(normalized_block, dtype=np.float64)
    if block.shape[0] < 4:
        raise ValueError(f"pool of {block.shape[0]} is too small for percentile thresholds")
    deltas = np.percentile(block, 75, axis=0)
    return AgreementThresholds(deltas, block > deltas)
