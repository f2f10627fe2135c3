"""Budgeted coreset selection: the adaptive multi-strategy loop and its baselines."""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import scoring
from .controller import ControllerConfig, ControllerState, WeightNet, round_update, UNIFORM
from .dataset import Dataset, SplitSpec, stratified_sample
from .probe import (ProbeModel, Projection, accuracy, fit_projection, identity_projection, init_model,
                    per_class_recall, predict_proba, project, train)
from .scoring import Strategy
from .seeding import derive_seed

METHODS = ("mode", "mode-streaming", "random", "uncertainty", "kcenter")


class BudgetError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    budget: float = 0.3  # int: sample count; float in (0, 1]: fraction of the pool
    init_fraction: float = 0.10
    round_fraction: float = 0.10
    epochs: int = 20
    lr: float = 0.01
    batch: int = 32
    temperature_scale: float = 1.0
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    strategy_eval_k: int = 25
    strategy_eval_epochs: int = 3
    smoothing: float = 1.0
    projection_dim: int = 32
    warm_start: bool = True
    seed: int = 0
    caching: bool = True
    keep_scores: bool = False
    stream_eps: float = 0.05
    stream_reference: int = 256

    def __post_init__(self):
        for name in ("init_fraction", "round_fraction"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {v}")
        if self.budget <= 0:
            raise ValueError("budget must be positive")
        if self.epochs < 0 or self.batch < 1 or self.lr < 0:
            raise ValueError("invalid probe training settings")

    def budget_size(self, pool_size: int) -> int:
        if isinstance(self.budget, float) and self.budget <= 1.0:
            b = int(math.floor(self.budget * pool_size + 0.5))
        else:
            b = int(self.budget)
        if b < 1:
            raise BudgetError("budget rounds to zero samples")
        if b > pool_size:
            raise BudgetError(f"budget {b} exceeds pool of {pool_size}")
        return b

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RoundLog:
    round: int
    coreset_size: int
    n_selected: int
    weights: np.ndarray
    temperature: float
    rewards: np.ndarray
    gains: np.ndarray
    alpha: np.ndarray
    val_accuracy: float
    train_loss: float
    grad_norm: float
    cache_hits: int = 0
    cache_misses: int = 0
    distance_evals: int = 0
    flagged: np.ndarray = field(default_factory=lambda: np.zeros(4, dtype=np.int64))
    wall_time: float = 0.0


@dataclass
class SelectionRun:
    method: str
    selected: list
    rounds: list
    final_val_accuracy: float
    final_test_accuracy: float | None
    val_recall: np.ndarray
    model: ProbeModel
    batches: list = field(default_factory=list)
    scores: list = field(default_factory=list)  # (round, pool ids, raw block, normalized block, combined)
    metadata: dict = field(default_factory=dict)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def round_schedule(budget: int, init_fraction: float = 0.1, round_fraction: float = 0.1):
    """Initial coreset size and the per-round batch sizes that fill the budget exactly."""
    init = min(budget, max(1, _round_half_up(init_fraction * budget)))
    sizes, remaining = [], budget - init
    while remaining > 0:
        k = min(remaining, max(1, _round_half_up(round_fraction * remaining)))
        sizes.append(k)
        remaining -= k
    return init, sizes


def select_topk(scores, k: int) -> np.ndarray:
    """Positions of the k largest scores, ties to the lower position."""
    s = np.asarray(scores, dtype=np.float64)
    if k > s.size:
        raise ValueError(f"k={k} exceeds {s.size} candidates")
    return np.lexsort((np.arange(s.size), -s))[:k]


def kcenter_greedy(embeds: np.ndarray, candidates, initial, k: int) -> np.ndarray:
    """Farthest-point picks from `candidates` given an existing set `initial`; ties to the lower id."""
    candidates = np.asarray(candidates, dtype=np.int64)
    initial = np.asarray(initial, dtype=np.int64)
    if k > candidates.size:
        raise ValueError(f"k={k} exceeds {candidates.size} candidates")
    dist = scoring.nearest_distance(embeds[candidates], embeds[initial])
    picks = []
    alive = np.ones(candidates.size, dtype=bool)
    for _ in range(k):
        masked = np.where(alive, dist, -np.inf)
        j = int(np.argmax(masked))
        picks.append(candidates[j])
        alive[j] = False
        dist = np.minimum(dist, scoring.pairwise_distances(embeds[candidates], embeds[candidates[j]][None])[:, 0])
    return np.asarray(picks, dtype=np.int64)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("MODESEL_THREADS", "1")))
    except ValueError:
        return 1


def evaluate_strategy_gain(strategy: int, cfg: RunConfig, coreset, pool, normalized_block: np.ndarray,
                           model: ProbeModel, data: Dataset, val_idx, p_base: float, seed: int) -> float:
    """Validation accuracy gain of a throwaway fine-tune on coreset + this strategy's top picks."""
    pool = np.asarray(pool, dtype=np.int64)
    if pool.size == 0:
        raise ValueError("empty pool")
    if cfg.strategy_eval_epochs == 0:
        return 0.0
    k = min(cfg.strategy_eval_k, pool.size)
    temp = pool[select_topk(normalized_block[:, strategy], k)]
    probe = model.clone()
    train(probe, data, np.concatenate([coreset, temp]), (), epochs=cfg.strategy_eval_epochs,
          lr=cfg.lr, batch=cfg.batch, seed=seed)
    return accuracy(probe, data, val_idx) - p_base


class _Session:
    """Shared per-run plumbing: init coreset, probe, embeddings, retraining, logging."""

    def __init__(self, method: str, cfg: RunConfig, data: Dataset, split: SplitSpec):
        self.method, self.cfg, self.data, self.split = method, cfg, data, split
        self.pool = np.sort(np.asarray(split.pool_indices, dtype=np.int64))
        self.val = np.asarray(split.val_indices, dtype=np.int64)
        self.budget = cfg.budget_size(self.pool.size)
        self.init_size, self.sizes = round_schedule(self.budget, cfg.init_fraction, cfg.round_fraction)
        self.total_epochs = max(1, cfg.epochs * (1 + len(self.sizes)))
        self.epochs_done = 0
        if data.d > cfg.projection_dim:
            self.projection: Projection = fit_projection(data, self.pool, cfg.projection_dim)
        else:
            self.projection = identity_projection(data.d)
        self.embeds = project(self.projection, data.features)
        init = stratified_sample(data, self.pool, self.init_size, derive_seed(cfg.seed, "init"))
        self.selected = list(init)
        self.in_coreset = np.zeros(data.n, dtype=bool)
        self.in_coreset[init] = True
        self.batches = [init]
        self.model = init_model(data.d, data.class_count, derive_seed(cfg.seed, "probe", 0), cfg.temperature_scale)
        self.rounds: list[RoundLog] = []
        self.report = self.retrain(0)

    def unlabeled(self) -> np.ndarray:
        return self.pool[~self.in_coreset[self.pool]]

    def commit(self, batch) -> None:
        batch = np.asarray(batch, dtype=np.int64)
        if np.any(self.in_coreset[batch]) or len(set(batch.tolist())) != batch.size:
            raise RuntimeError("duplicate selection")
        self.selected.extend(batch.tolist())
        self.in_coreset[batch] = True
        self.batches.append(batch)
        if len(self.selected) > self.budget:
            raise RuntimeError("budget exceeded")

    def retrain(self, round_no: int, epochs: int | None = None):
        cfg = self.cfg
        epochs = cfg.epochs if epochs is None else epochs
        if not cfg.warm_start and round_no > 0:
            version = self.model.version
            self.model = init_model(self.data.d, self.data.class_count, derive_seed(cfg.seed, "probe", 0),
                                    cfg.temperature_scale)
            self.model.version = version
        try:
            rep = train(self.model, self.data, np.asarray(self.selected), self.val, epochs=epochs,
                        lr=cfg.lr, batch=cfg.batch, seed=derive_seed(cfg.seed, "probe", round_no + 1))
        except FloatingPointError as exc:
            raise FloatingPointError(f"round {round_no}: {exc}") from exc
        self.epochs_done += epochs
        self.report = rep
        return rep

    def log(self, round_no, n_selected, state: ControllerState | None, gains=None, table=None,
            flagged=None, t0=0.0, dist_evals=0):
        rep = self.report
        self.rounds.append(RoundLog(
            round=round_no,
            coreset_size=len(self.selected),
            n_selected=n_selected,
            weights=np.array(state.weights if state is not None else UNIFORM),
            temperature=float(state.temperature if state is not None else self.cfg.controller.tau0),
            rewards=np.array(state.rewards if state is not None else np.zeros(4)),
            gains=np.zeros(4) if gains is None else np.asarray(gains, dtype=np.float64),
            alpha=np.array(state.alpha if state is not None else np.ones(4)),
            val_accuracy=rep.final_val_accuracy,
            train_loss=rep.epoch_losses[-1] if rep.epoch_losses else float("nan"),
            grad_norm=rep.grad_norm_last,
            cache_hits=table.cache_hits if table is not None else 0,
            cache_misses=table.cache_misses if table is not None else 0,
            distance_evals=dist_evals,
            flagged=np.zeros(4, dtype=np.int64) if flagged is None else flagged,
            wall_time=time.perf_counter() - t0,
        ))

    def observe(self, state: ControllerState) -> ControllerState:
        return state.observe(epoch_progress=self.epochs_done / self.total_epochs,
                             val_accuracy=self.report.final_val_accuracy,
                             raw_grad_norm=self.report.grad_norm_last,
                             budget_remaining=(self.budget - len(self.selected)) / self.budget)

    def finish(self, **metadata) -> SelectionRun:
        test = np.asarray(self.split.test_indices, dtype=np.int64)
        meta = {"budget": self.budget, "init_size": self.init_size, "round_sizes": list(map(int, self.sizes)),
                "projection_dim": self.projection.k, "raw_dim": self.data.d, "total_epochs": self.total_epochs,
                "standardized": self.data.standardized}
        meta.update(metadata)
        return SelectionRun(
            method=self.method,
            selected=[int(i) for i in self.selected],
            rounds=self.rounds,
            final_val_accuracy=accuracy(self.model, self.data, self.val),
            final_test_accuracy=accuracy(self.model, self.data, test) if test.size else None,
            val_recall=per_class_recall(self.model, self.data, self.val),
            model=self.model,
            batches=[np.asarray(b).tolist() for b in self.batches],
            metadata=meta,
        )


def _model_scores(session: _Session, cfg: RunConfig, table, unl):
    """Raw |U| x 4 score block, via the caches or from scratch. Returns (raw, distance evaluations)."""
    data = session.data
    if not cfg.caching:
        coreset = np.asarray(session.selected, dtype=np.int64)
        return scoring.naive_raw_scores(session.model, data.features, session.embeds, data.labels, coreset, unl,
                                        data.class_count, cfg.smoothing)
    before = table.distance_evals
    scoring.refresh_model_scores(table, session.model, data.features, unl)
    scoring.fill_diversity(table, unl)
    scoring.fill_class_balance(table, data.labels, unl, cfg.smoothing)
    return table.raw[unl].copy(), table.distance_evals - before


def run_mode(cfg: RunConfig, data: Dataset, split: SplitSpec) -> SelectionRun:
    """Adaptive multi-strategy selection until the coreset reaches the budget."""
    t0 = time.perf_counter()
    s = _Session("mode", cfg, data, split)
    ccfg = cfg.controller
    net = WeightNet.random(derive_seed(cfg.seed, "controller")) if ccfg.use_net else None
    state = s.observe(ControllerState(temperature=ccfg.tau0))
    table = scoring.ScoreTable.empty(data.n, data.class_count)
    pending_dist = 0
    if cfg.caching:
        init = np.asarray(s.selected, dtype=np.int64)
        unl = s.unlabeled()
        scoring.update_diversity_cache(table, s.embeds[init], s.embeds[unl], unl)
        scoring.update_class_counts(table, data.labels[init], data.class_count)
        pending_dist = table.distance_evals
    # the initial cache build is charged to round 1, where its distances are first used
    s.log(0, s.init_size, state, table=table, t0=t0)
    scores = []
    for rnd, k in enumerate(s.sizes, start=1):
        t0 = time.perf_counter()
        unl = s.unlabeled()
        raw, dist_evals = _model_scores(s, cfg, table, unl)
        dist_evals += pending_dist
        norm = np.column_stack([scoring.normalize_column(raw[:, j]) for j in range(4)])
        flagged = (scoring.agreement_thresholds(norm).flagged.sum(axis=0) if unl.size >= 4
                   else np.zeros(4, dtype=np.int64))

        coreset = np.asarray(s.selected, dtype=np.int64)
        p_base = accuracy(s.model, data, s.val)
        eval_seed = derive_seed(cfg.seed, "eval", rnd)
        jobs = [(j, cfg, coreset, unl, norm, s.model, data, s.val, p_base, eval_seed) for j in Strategy]
        if _threads() > 1:
            with ThreadPoolExecutor(_threads()) as ex:
                gains = list(ex.map(lambda a: evaluate_strategy_gain(*a), jobs))
        else:
            gains = [evaluate_strategy_gain(*a) for a in jobs]

        state = round_update(state, ccfg, gains, net)
        combined = norm @ state.weights
        batch = unl[select_topk(combined, k)]
        if cfg.keep_scores:
            scores.append((rnd, unl, raw, norm, combined))
        s.commit(batch)

        pending_dist = 0
        if cfg.caching:
            rest = s.unlabeled()
            before = table.distance_evals
            scoring.update_diversity_cache(table, s.embeds[batch], s.embeds[rest], rest)
            scoring.update_class_counts(table, data.labels[batch], data.class_count)
            pending_dist = table.distance_evals - before
        s.retrain(rnd)
        state = s.observe(state)
        s.log(rnd, k, state, gains=gains, table=table if cfg.caching else None, flagged=flagged, t0=t0,
              dist_evals=dist_evals)
    run = s.finish(caching=cfg.caching, use_net=ccfg.use_net)
    run.scores = scores
    return run


def _run_baseline(method: str, chooser, cfg: RunConfig, data: Dataset, split: SplitSpec) -> SelectionRun:
    t0 = time.perf_counter()
    s = _Session(method, cfg, data, split)
    s.log(0, s.init_size, None, t0=t0)
    for rnd, k in enumerate(s.sizes, start=1):
        t0 = time.perf_counter()
        unl = s.unlabeled()
        s.commit(chooser(s, unl, k, rnd))
        s.retrain(rnd)
        s.log(rnd, k, None, t0=t0)
    return s.finish()


def baseline_random(cfg: RunConfig, data: Dataset, split: SplitSpec) -> SelectionRun:
    def choose(s, unl, k, rnd):
        rng = np.random.default_rng(derive_seed(cfg.seed, "baseline", rnd))
        return np.sort(rng.choice(unl, size=k, replace=False))
    return _run_baseline("random", choose, cfg, data, split)


def baseline_uncertainty(cfg: RunConfig, data: Dataset, split: SplitSpec) -> SelectionRun:
    def choose(s, unl, k, rnd):
        ent = scoring.entropy_rows(predict_proba(s.model, data.features[unl]))
        return unl[select_topk(ent, k)]
    return _run_baseline("uncertainty", choose, cfg, data, split)


def baseline_kcenter(cfg: RunConfig, data: Dataset, split: SplitSpec) -> SelectionRun:
    def choose(s, unl, k, rnd):
        return kcenter_greedy(s.embeds, unl, np.asarray(s.selected, dtype=np.int64), k)
    return _run_baseline("kcenter", choose, cfg, data, split)


def run_method(method: str, cfg: RunConfig, data: Dataset, split: SplitSpec, fixed_weights=None) -> SelectionRun:
    if method == "mode":
        return run_mode(cfg, data, split)
    if method == "mode-streaming":
        from .streaming import run_streaming
        return run_streaming(cfg, UNIFORM if fixed_weights is None else fixed_weights, data, split)
    if method == "random":
        return baseline_random(cfg, data, split)
    if method == "uncertainty":
        return baseline_uncertainty(cfg, data, split)
    if method == "kcenter":
        return baseline_kcenter(cfg, data, split)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
