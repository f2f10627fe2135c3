"""Oracles for the theory side: submodularity checks, greedy vs. exhaustive optima."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

TOL = 1e-9
BRUTE_FORCE_LIMIT = 10**6


@dataclass(frozen=True)
class SetFunction:
    ground_size: int
    evaluate: Callable[[Sequence[int]], float]
    name: str = "f"

    def __call__(self, subset) -> float:
        return float(self.evaluate(tuple(subset)))


@dataclass(frozen=True)
class FacilityLocation:
    sim: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.sim, dtype=np.float64)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise ValueError("similarity matrix must be square")
        if not np.allclose(s, s.T, atol=1e-12, rtol=0):
            raise ValueError("similarity matrix must be symmetric")
        if s.min() < 0 or s.max() > 1:
            raise ValueError("similarities must lie in [0, 1]")
        object.__setattr__(self, "sim", s)

    @property
    def n(self) -> int:
        return self.sim.shape[0]

    def as_set_function(self, name: str = "facility_location") -> SetFunction:
        return SetFunction(self.n, lambda s: fl_value(self, s), name)


def fl_value(f: FacilityLocation, subset) -> float:
    """Sum over all n points of their best similarity to `subset`; 0 for the empty set."""
    idx = np.asarray(list(subset), dtype=np.int64)
    if idx.size == 0:
        return 0.0
    return float(f.sim[:, idx].max(axis=1).sum())


def rbf_similarity(points: np.ndarray, sigma: float | None = None) -> np.ndarray:
    """exp(-|x-y|^2 / (2 sigma^2)); sigma defaults to the median pairwise distance."""
    x = np.asarray(points, dtype=np.float64)
    diff = x[:, None, :] - x[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    if sigma is None:
        off = np.sqrt(d2[np.triu_indices(len(x), 1)])
        sigma = float(np.median(off)) if off.size else 1.0
        sigma = sigma or 1.0
    s = np.exp(-d2 / (2.0 * sigma**2))
    s = 0.5 * (s + s.T)
    np.fill_diagonal(s, 1.0)
    return s


def random_facility_location(n: int, rng: np.random.Generator, dim: int = 2) -> FacilityLocation:
    return FacilityLocation(rbf_similarity(rng.normal(size=(n, dim))))


def weighted_sum(fs: Sequence[SetFunction], w) -> SetFunction:
    w = np.asarray(w, dtype=np.float64)
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    n = fs[0].ground_size
    return SetFunction(n, lambda s: float(sum(wi * f(s) for wi, f in zip(w, fs) if wi != 0)), "weighted_sum")


def cardinality() -> Callable:
    return lambda s: float(len(s))


def squared_cardinality() -> Callable:
    return lambda s: float(len(s)) ** 2


@dataclass
class SubmodularityReport:
    name: str
    trials: int
    violations: int
    max_gap: float

    @property
    def ok(self) -> bool:
        return self.violations == 0


def check_diminishing_returns(f: SetFunction, trials: int, seed: int = 0, tol: float = TOL) -> SubmodularityReport:
    """Random chains A ⊆ B, v ∉ B; a violation is f(B+v)-f(B) exceeding f(A+v)-f(A) by more than tol."""
    n = f.ground_size
    rng = np.random.default_rng(seed)
    violations, max_gap = 0, 0.0
    for _ in range(trials):
        v = int(rng.integers(n))
        rest = np.delete(np.arange(n), v)
        big = rest[rng.random(rest.size) < rng.random()]
        small = big[rng.random(big.size) < rng.random()]
        gain_small = f(tuple(small) + (v,)) - f(small)
        gain_big = f(tuple(big) + (v,)) - f(big)
        gap = gain_big - gain_small
        max_gap = max(max_gap, gap)
        if gap > tol:
            violations += 1
    return SubmodularityReport(f.name, trials, violations, max_gap)


def check_weighted_combination(fs: Sequence[SetFunction], w, trials: int, seed: int = 0) -> SubmodularityReport:
    return check_diminishing_returns(weighted_sum(fs, w), trials, seed)


def greedy_maximize(f: SetFunction, budget: int):
    """Budget rounds of largest marginal gain, ties to the lowest id. Returns (subset, value, gains)."""
    n = f.ground_size
    if budget > n:
        raise ValueError(f"budget {budget} exceeds ground set of {n}")
    chosen: list[int] = []
    current = f(chosen)
    gains = []
    for _ in range(budget):
        best, best_gain = -1, -math.inf
        for v in range(n):
            if v in chosen:
                continue
            g = f(chosen + [v]) - current
            if g > best_gain:
                best, best_gain = v, g
        chosen.append(best)
        current += best_gain
        gains.append(best_gain)
    return tuple(chosen), f(chosen), gains


def brute_force_optimum(f: SetFunction, budget: int):
    n = f.ground_size
    if budget > n:
        raise ValueError(f"budget {budget} exceeds ground set of {n}")
    if math.comb(n, budget) > BRUTE_FORCE_LIMIT:
        raise ValueError(f"C({n},{budget}) exceeds the brute-force limit of {BRUTE_FORCE_LIMIT}")
    best, best_val = (), -math.inf
    for s in itertools.combinations(range(n), budget):
        val = f(s)
        if val > best_val:
            best, best_val = s, val
    return best, best_val


def approximation_curve(budgets: Sequence[int], seeds: Sequence[int], n: int = 12, dim: int = 2):
    """Mean and minimum greedy/optimum ratio per budget over random facility-location instances."""
    rows = []
    for b in budgets:
        ratios = []
        for s in seeds:
            f = random_facility_location(n, np.random.default_rng([s, b]), dim).as_set_function()
            _, g, _ = greedy_maximize(f, b)
            _, opt = brute_force_optimum(f, b)
            ratios.append(g / opt if opt > 0 else 1.0)
        rows.append({"budget": b, "mean_ratio": float(np.mean(ratios)), "min_ratio": float(np.min(ratios)),
                     "instances": len(ratios)})
    return rows
