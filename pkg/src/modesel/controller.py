"""Strategy-weight controller.

Weights live on the 4-simplex. Each round the controller anneals a
temperature from budget use and training progress, turns per-strategy
validation gains into rewards, pushes the rewards through a temperature
softmax and blends the result into the previous weights. A multiplicative
effectiveness accumulator (alpha) runs alongside for diagnostics.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

UNIFORM = np.full(4, 0.25)
SIMPLEX_TOL = 1e-9


@dataclass(frozen=True)
class ControllerConfig:
    tau0: float = 1.0
    alpha_decay: float = 1.0
    beta_decay: float = 1.0
    tau_min: float = 0.05
    meta_lr: float = 0.001
    reward_gain: float = 1.0
    blend: float = 0.2
    history_window: int = 3
    use_net: bool = False
    net_seed: int = 0

    def __post_init__(self):
        for name in ("tau0", "tau_min", "meta_lr", "reward_gain", "history_window"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.alpha_decay < 0 or self.beta_decay < 0:
            raise ValueError("decay rates must be non-negative")
        if not 0.0 <= self.blend <= 1.0:
            raise ValueError("blend must lie in [0, 1]")


@dataclass(frozen=True)
class ControllerState:
    epoch_progress: float = 0.0
    val_accuracy: float = 0.0
    grad_norm: float = 0.0
    budget_remaining: float = 1.0
    strategy_perf: np.ndarray = field(default_factory=lambda: np.zeros(4))
    alpha: np.ndarray = field(default_factory=lambda: np.ones(4))
    weights: np.ndarray = field(default_factory=lambda: UNIFORM.copy())
    temperature: float = 1.0
    round: int = 0
    gain_history: tuple = ()
    grad_norm_max: float = 0.0
    rewards: np.ndarray = field(default_factory=lambda: np.zeros(4))

    def features(self) -> np.ndarray:
        """The 8 network inputs: e, a, g, b and the four strategy-performance averages."""
        return np.concatenate([[self.epoch_progress, self.val_accuracy, self.grad_norm,
                                self.budget_remaining], self.strategy_perf])

    def observe(self, *, epoch_progress: float, val_accuracy: float, raw_grad_norm: float,
                budget_remaining: float) -> "ControllerState":
        """New state after a retrain; the gradient norm is scaled by its running maximum."""
        gmax = max(self.grad_norm_max, raw_grad_norm)
        g = raw_grad_norm / gmax if gmax > 0 else 0.0
        return replace(self, epoch_progress=min(max(epoch_progress, 0.0), 1.0), val_accuracy=val_accuracy,
                       grad_norm=min(g, 1.0), budget_remaining=min(max(budget_remaining, 0.0), 1.0),
                       grad_norm_max=gmax)


def temperature(cfg: ControllerConfig, budget_remaining: float, epoch_progress: float) -> float:
    raw = cfg.tau0 * math.exp(-cfg.alpha_decay * (1.0 - budget_remaining)) * math.exp(-cfg.beta_decay * epoch_progress)
    return max(cfg.tau_min, raw)


def reward(delta_val: float, w_j: float) -> float:
    """Credit for one strategy: its weight times the gain, only when the gain is strictly positive."""
    return delta_val * w_j if delta_val > 0 else 0.0


def update_alpha(alpha_j: float, meta_lr: float, r_j: float) -> float:
    return alpha_j * (1.0 + meta_lr * r_j)


def softmax_weights(values, tau: float) -> np.ndarray:
    if tau <= 0:
        raise ValueError("temperature must be positive")
    z = np.asarray(values, dtype=np.float64) / tau
    e = np.exp(z - z.max())
    return e / e.sum()


def _check_simplex(w, name):
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (4,) or np.any(w < -SIMPLEX_TOL) or abs(w.sum() - 1.0) > SIMPLEX_TOL:
        raise ValueError(f"{name} is not on the simplex: {w}")
    return w


def blend_weights(w_old, target, blend: float) -> np.ndarray:
    w_old = _check_simplex(w_old, "w_old")
    target = _check_simplex(target, "target")
    w = (1.0 - blend) * w_old + blend * target
    return w / w.sum()


@dataclass
class WeightNet:
    w1: np.ndarray  # 64 x 8
    b1: np.ndarray
    w2: np.ndarray  # 4 x 64
    b2: np.ndarray

    @classmethod
    def zeros(cls, hidden: int = 64) -> "WeightNet":
        return cls(np.zeros((hidden, 8)), np.zeros(hidden), np.zeros((4, hidden)), np.zeros(4))

    @classmethod
    def random(cls, seed: int, hidden: int = 64) -> "WeightNet":
        rng = np.random.default_rng(seed)
        return cls(rng.normal(0, math.sqrt(2 / 8), (hidden, 8)), np.zeros(hidden),
                   rng.normal(0, math.sqrt(2 / hidden), (4, hidden)), np.zeros(4))

    def logits(self, s: np.ndarray) -> np.ndarray:
        h = np.maximum(self.w1 @ s + self.b1, 0.0)
        return self.w2 @ h + self.b2


def net_forward(net: WeightNet, state: ControllerState, tau: float) -> np.ndarray:
    return softmax_weights(net.logits(state.features()), tau)


def round_update(state: ControllerState, cfg: ControllerConfig, per_strategy_gains,
                 net: WeightNet | None = None) -> ControllerState:
    """One weight update from the round's per-strategy validation gains."""
    gains = np.asarray(per_strategy_gains, dtype=np.float64)
    tau = temperature(cfg, state.budget_remaining, state.epoch_progress)
    r = np.array([reward(g, w) for g, w in zip(gains, state.weights)])
    values = 1.0 + cfg.reward_gain * r
    if net is not None:
        values = net.logits(state.features()) + cfg.reward_gain * r
    target = softmax_weights(values, tau)
    w = blend_weights(state.weights, target, cfg.blend)
    alpha = np.array([update_alpha(a, cfg.meta_lr, rj) for a, rj in zip(state.alpha, r)])
    history = (state.gain_history + (tuple(gains),))[-cfg.history_window:]
    return replace(state, weights=w, alpha=alpha, temperature=tau, round=state.round + 1,
                   strategy_perf=np.mean(np.array(history), axis=0), gain_history=history, rewards=r)


def convergence_stats(weight_history):
    """Per-step L2 changes of a weight trajectory and their total."""
    h = np.asarray(weight_history, dtype=np.float64)
    if h.shape[0] < 2:
        raise ValueError("need at least two weight vectors")
    steps = np.linalg.norm(np.diff(h, axis=0), axis=1)
    return steps, float(steps.sum())


def geometric_rate(steps, floor: float = 1e-12) -> float:
    """Largest ratio of consecutive step sizes above `floor` (smaller steps are rounding noise)."""
    s = np.asarray(steps, dtype=np.float64)
    s = s[s > floor]
    if s.size < 2:
        return 0.0
    return float(np.max(s[1:] / s[:-1]))
