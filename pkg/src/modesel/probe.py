"""Multinomial logistic-regression probe.

Supplies everything the selector needs from a model: class probabilities,
validation accuracy, cross-entropy loss and gradient magnitude, plus a PCA
projection used as the embedding for distance-based scores.
"""

from __future__ import annotations

import base64
import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Dataset


class ProbeDivergence(FloatingPointError):
    """Training produced a non-finite loss; lower the learning rate."""


@dataclass
class ProbeModel:
    weights: np.ndarray  # C x d
    bias: np.ndarray  # C
    temperature_scale: float = 1.0
    version: int = 0

    @property
    def class_count(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def clone(self) -> "ProbeModel":
        return copy.deepcopy(self)

    def logits(self, x: np.ndarray) -> np.ndarray:
        return (x @ self.weights.T + self.bias) / self.temperature_scale


@dataclass
class TrainReport:
    epoch_losses: list = field(default_factory=list)
    final_val_accuracy: float = 0.0
    grad_norm_last: float = 0.0
    epochs_run: int = 0


def init_model(d: int, C: int, seed: int, temperature_scale: float = 1.0) -> ProbeModel:
    if d < 1 or C < 2:
        raise ValueError(f"need d >= 1 and C >= 2, got d={d}, C={C}")
    rng = np.random.default_rng(seed)
    return ProbeModel(rng.uniform(-0.01, 0.01, size=(C, d)), np.zeros(C), temperature_scale)


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def predict_proba(model: ProbeModel, x) -> np.ndarray:
    """softmax((Wx + b) / T) for one vector (returns C) or a matrix of rows (returns n x C)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.dim:
        raise ValueError(f"input dimension {x.shape[-1]} does not match model dimension {model.dim}")
    return _softmax_rows(model.logits(x))


def cross_entropy(model: ProbeModel, x: np.ndarray, y: np.ndarray) -> float:
    z = model.logits(x)
    z = z - z.max(axis=1, keepdims=True)
    logz = np.log(np.exp(z).sum(axis=1))
    return float(np.mean(logz - z[np.arange(len(y)), y]))


def loss_and_grad(model: ProbeModel, x: np.ndarray, y: np.ndarray):
    """Mean cross-entropy and its gradient with respect to (weights, bias)."""
    p = predict_proba(model, x)
    n = len(y)
    loss = float(-np.mean(np.log(np.maximum(p[np.arange(n), y], 1e-300))))
    err = p
    err[np.arange(n), y] -= 1.0
    err /= n * model.temperature_scale
    return loss, err.T @ x, err.sum(axis=0)


def accuracy(model: ProbeModel, dataset: Dataset, idx) -> float:
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size == 0:
        return 0.0
    pred = np.argmax(model.logits(dataset.features[idx]), axis=1)
    return float(np.mean(pred == dataset.labels[idx]))


def per_class_recall(model: ProbeModel, dataset: Dataset, idx) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.int64)
    pred = np.argmax(model.logits(dataset.features[idx]), axis=1)
    y = dataset.labels[idx]
    out = np.full(dataset.class_count, np.nan)
    for c in range(dataset.class_count):
        mask = y == c
        if mask.any():
            out[c] = np.mean(pred[mask] == c)
    return out


def grad_magnitude(model: ProbeModel, dataset: Dataset, idx) -> float:
    """L2 norm of the mean cross-entropy gradient over `idx` (weights and bias together)."""
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("grad_magnitude needs a nonempty index set")
    _, gw, gb = loss_and_grad(model, dataset.features[idx], dataset.labels[idx])
    return float(np.sqrt(np.sum(gw * gw) + np.sum(gb * gb)))


def train(model: ProbeModel, dataset: Dataset, train_idx, val_idx=(), epochs: int = 20,
          lr: float = 0.01, batch: int = 32, seed: int = 0) -> TrainReport:
    """Mini-batch SGD on mean cross-entropy, in place.

    `epoch_losses` holds the full training-set loss after each epoch. When
    `val_idx` is empty the reported accuracy is measured on the training set.
    """
    train_idx = np.asarray(train_idx, dtype=np.int64)
    val_idx = np.asarray(val_idx, dtype=np.int64)
    if train_idx.size == 0:
        raise ValueError("empty training set")
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    rng = np.random.default_rng(seed)
    x_all, y_all = dataset.features[train_idx], dataset.labels[train_idx]
    report = TrainReport()
    for epoch in range(epochs):
        order = rng.permutation(len(train_idx))
        with np.errstate(over="ignore", invalid="ignore"):
            for start in range(0, len(order), batch):
                b = order[start:start + batch]
                _, gw, gb = loss_and_grad(model, x_all[b], y_all[b])
                model.weights -= lr * gw
                model.bias -= lr * gb
            loss = cross_entropy(model, x_all, y_all)
        if not np.isfinite(loss) or not np.all(np.isfinite(model.weights)):
            raise ProbeDivergence(f"non-finite loss at epoch {epoch + 1} (lr={lr})")
        report.epoch_losses.append(loss)
    report.epochs_run = epochs
    if epochs:
        model.version += 1
    report.final_val_accuracy = accuracy(model, dataset, val_idx if val_idx.size else train_idx)
    report.grad_norm_last = grad_magnitude(model, dataset, train_idx)
    return report


@dataclass(frozen=True)
class Projection:
    mean: np.ndarray
    basis: np.ndarray  # k x d, orthonormal rows

    @property
    def k(self) -> int:
        return self.basis.shape[0]


def fit_projection(dataset: Dataset, idx, k: int) -> Projection:
    """Top-k principal directions of the centered rows `idx`."""
    idx = np.asarray(idx, dtype=np.int64)
    if not 1 <= k <= min(dataset.d, idx.size):
        raise ValueError(f"k={k} out of range [1, {min(dataset.d, idx.size)}]")
    x = dataset.features[idx]
    mean = x.mean(axis=0)
    cov = np.cov(x - mean, rowvar=False, bias=False).reshape(dataset.d, dataset.d)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:k]
    basis = evecs[:, order].T
    # fix sign so the basis is deterministic across platforms
    signs = np.sign(basis[np.arange(k), np.argmax(np.abs(basis), axis=1)])
    basis = basis * signs[:, None]
    return Projection(mean, basis)


def project(p: Projection, x) -> np.ndarray:
    return (np.asarray(x, dtype=np.float64) - p.mean) @ p.basis.T


def identity_projection(d: int) -> Projection:
    return Projection(np.zeros(d), np.eye(d))


def save_checkpoint(model: ProbeModel, path) -> None:
    """JSON with shape metadata and a base64 little-endian f32 parameter blob (weights then bias)."""
    blob = np.concatenate([model.weights.ravel(), model.bias]).astype("<f4").tobytes()
    doc = {
        "format": "modesel-probe-1",
        "classes": model.class_count,
        "dim": model.dim,
        "temperature_scale": model.temperature_scale,
        "version": model.version,
        "params": base64.b64encode(blob).decode("ascii"),
    }
    Path(path).write_text(json.dumps(doc, indent=2))


def load_checkpoint(path) -> ProbeModel:
    doc = json.loads(Path(path).read_text())
    C, d = int(doc["classes"]), int(doc["dim"])
    flat = np.frombuffer(base64.b64decode(doc["params"]), dtype="<f4").astype(np.float64)
    if flat.size != C * d + C:
        raise ValueError(f"checkpoint blob has {flat.size} values, expected {C * d + C}")
    return ProbeModel(flat[:C * d].reshape(C, d).copy(), flat[C * d:].copy(),
                      float(doc["temperature_scale"]), int(doc.get("version", 0)))
