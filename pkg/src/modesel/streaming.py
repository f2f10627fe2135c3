"""Single-pass selection with geometrically spaced value guesses (sieve streaming).

The stream objective for a dataset is a weighted sum of a facility-location
coverage term (diversity) and modular per-sample terms (uncertainty, class
balance, boundary), all with fixed weights for the whole pass.
"""

from __future__ import annotations

import math
import time
from dataclasses import replace

import numpy as np

from . import scoring
from .controller import ControllerState
from .dataset import Dataset, SplitSpec
from .seeding import derive_seed
from .selection import RunConfig, SelectionRun, _Session, round_schedule
from .verify import SetFunction


class SetFunctionObjective:
    """Adapter that evaluates an arbitrary set function from scratch on every query."""

    def __init__(self, f: SetFunction):
        self.f = f

    def empty(self):
        return {"members": [], "value": self.f(())}

    def gain(self, state, e) -> float:
        return self.f(state["members"] + [e]) - state["value"]

    def add(self, state, e) -> None:
        state["members"].append(e)
        state["value"] = self.f(state["members"])

    def value(self, state) -> float:
        return state["value"]


class WeightedCoverage:
    """w_cov * scale * sum_r max_{s in S} sim(r, s) + sum_{s in S} modular(s), evaluated incrementally."""

    def __init__(self, sim_to_reference: np.ndarray, modular: np.ndarray, coverage_weight: float,
                 scale: float = 1.0):
        self.sim = sim_to_reference  # n_candidates x n_reference
        self.modular = modular
        self.coef = coverage_weight * scale

    def empty(self):
        return {"members": [], "cover": np.zeros(self.sim.shape[1]), "value": 0.0}

    def gain(self, state, e) -> float:
        cov = np.maximum(self.sim[e] - state["cover"], 0.0).sum() if self.coef else 0.0
        return float(self.coef * cov + self.modular[e])

    def add(self, state, e) -> None:
        state["value"] += self.gain(state, e)
        state["cover"] = np.maximum(state["cover"], self.sim[e])
        state["members"].append(e)

    def value(self, state) -> float:
        return state["value"]


def sieve_stream(objective, order, budget: int, eps: float = 0.05):
    """One pass over `order`; returns (members in admission order, value, number of live levels).

    Guesses v = (1+eps)^i cover [m, 2*budget*m] where m is the best singleton
    seen so far. A level admits e while it has room and the gain reaches
    (v/2 - value) / (budget - size). Monotone objectives get at least (1/2 - eps) of optimum.
    """
    order = list(order)
    if budget >= len(order):
        st = objective.empty()
        for e in order:
            objective.add(st, e)
        return list(order), objective.value(st), 0
    if budget <= 0:
        return [], objective.value(objective.empty()), 0
    empty = objective.empty()
    base = objective.value(empty)
    log_step = math.log1p(eps)
    m = 0.0
    levels: dict[int, dict] = {}
    for e in order:
        m = max(m, objective.gain(empty, e))
        if m <= 0:
            continue
        lo = math.ceil(math.log(m) / log_step - 1e-9)
        hi = math.floor(math.log(2 * budget * m) / log_step + 1e-9)
        for i in [i for i in levels if i < lo]:
            del levels[i]
        for i in range(lo, hi + 1):
            st = levels.get(i)
            if st is None:
                st = levels[i] = objective.empty()
            size = len(st["members"])
            if size >= budget:
                continue
            v = (1 + eps) ** i
            if objective.gain(st, e) >= (v / 2 - (objective.value(st) - base)) / (budget - size):
                objective.add(st, e)
    if not levels:
        return [], base, 0
    best = max(sorted(levels), key=lambda i: objective.value(levels[i]))
    return list(levels[best]["members"]), objective.value(levels[best]), len(levels)


def run_streaming(cfg: RunConfig, fixed_weights, data: Dataset, split: SplitSpec) -> SelectionRun:
    """Stratified start, then one pass over the rest of the pool with weights held fixed."""
    w = np.asarray(fixed_weights, dtype=np.float64)
    if w.shape != (4,) or np.any(w < 0) or abs(w.sum() - 1) > 1e-9:
        raise ValueError(f"fixed weights must lie on the simplex, got {w}")
    t0 = time.perf_counter()
    # the iterative selectors retrain once per round; give the final probe the same epoch total
    pool_size = len(split.pool_indices)
    _, sizes = round_schedule(cfg.budget_size(pool_size), cfg.init_fraction, cfg.round_fraction)
    final_epochs = cfg.epochs * max(1, len(sizes))
    cfg = _single_round(cfg)
    s = _Session("mode-streaming", cfg, data, split)
    s.total_epochs = cfg.epochs + final_epochs
    state = s.observe(ControllerState(weights=w, temperature=cfg.controller.tau0))
    s.log(0, s.init_size, state, t0=t0)
    remaining = s.budget - len(s.selected)
    if remaining == 0:
        return s.finish(stream_levels=0, stream_value=0.0)

    t0 = time.perf_counter()
    unl = s.unlabeled()
    coreset = np.asarray(s.selected, dtype=np.int64)
    raw, _ = scoring.naive_raw_scores(s.model, data.features, s.embeds, data.labels, coreset, unl,
                                      data.class_count, cfg.smoothing)
    norm = np.column_stack([scoring.normalize_column(raw[:, j]) for j in range(4)])
    modular = norm @ np.array([w[0], 0.0, w[2], w[3]])

    rng = np.random.default_rng(derive_seed(cfg.seed, "stream"))
    ref = np.sort(rng.choice(unl.size, size=min(cfg.stream_reference, unl.size), replace=False))
    sim = _similarity_to_reference(s.embeds[unl], s.embeds[unl][ref])
    objective = WeightedCoverage(sim, modular, w[1], scale=remaining / ref.size)
    order = rng.permutation(unl.size)
    picked, value, n_levels = sieve_stream(objective, order, remaining, cfg.stream_eps)
    if len(picked) < remaining:
        # a level may fill short of the budget; pad with the best leftover modular scores
        taken = np.zeros(unl.size, dtype=bool)
        taken[picked] = True
        rest = np.flatnonzero(~taken)
        extra = rest[np.lexsort((rest, -modular[rest]))][:remaining - len(picked)]
        picked = list(picked) + extra.tolist()
    s.commit(unl[np.asarray(picked, dtype=np.int64)])
    s.retrain(1, final_epochs)
    s.log(1, len(picked), s.observe(state), t0=t0)
    return s.finish(stream_levels=n_levels, stream_value=value)


def _single_round(cfg: RunConfig) -> RunConfig:
    return replace(cfg, round_fraction=1.0)


def _similarity_to_reference(x: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """RBF similarity with bandwidth set by the median reference distance."""
    d = scoring.pairwise_distances(x, ref)
    med = float(np.median(scoring.pairwise_distances(ref, ref)[np.triu_indices(ref.shape[0], 1)])) \
        if ref.shape[0] > 1 else 1.0
    sigma = med or 1.0
    return np.exp(-(d ** 2) / (2 * sigma ** 2))
