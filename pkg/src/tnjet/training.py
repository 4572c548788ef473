"""Mini-batch training with Adam, evaluation metrics and cross-validation.

Loss pathways are fixed per architecture by default (cross-entropy on MPS
class scores, mean squared error on TTN squared-overlap probabilities) but
either loss can be applied to either architecture; the probability vector of
an MPS is its softmax, of a TTN its normalized squared overlaps.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .data import JetBatch
from .embedding import Layout, embed_batch
from .mps import MpsModel, canonicalize, forward_mps_batch, grad_mps_batch
from .ttn import (
    TtnModel,
    forward_ttn_batch,
    grad_ttn_batch,
    overlap_grad_from_probability_grad,
    probabilities_batch,
)

__all__ = [
    "Loss",
    "TrainConfig",
    "Metrics",
    "AdamState",
    "TrainingDivergedError",
    "DegenerateSplitError",
    "loss_and_upstream",
    "softmax_ce",
    "mse_loss",
    "adam_step",
    "auc_ovr",
    "predict_probabilities",
    "evaluate",
    "train_model",
    "kfold_indices",
    "cross_validate",
]


class Loss(Enum):
    CROSS_ENTROPY = "ce"
    MSE = "mse"


class TrainingDivergedError(RuntimeError):
    pass


class DegenerateSplitError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 512
    learning_rate: float = 1e-3
    epochs: int = 50
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    loss: Loss | None = None  # None: pick by architecture (MPS ce, TTN mse)
    folds: int = 3

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError(f"batch_size {self.batch_size} < 1")
        if not (0.0 < self.adam_beta1 < 1.0 and 0.0 < self.adam_beta2 < 1.0):
            raise ValueError("Adam betas must lie strictly between 0 and 1")


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    auc: np.ndarray  # one-vs-rest, per class
    loss_curve: tuple[float, ...] = ()

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "auc": [float(a) for a in self.auc],
            "loss_curve": [float(v) for v in self.loss_curve],
        }


def softmax_ce(scores: np.ndarray, label: int) -> tuple[float, np.ndarray]:
    """Cross-entropy of softmax(scores) against `label`, with its gradient."""
    loss, grads = _softmax_ce_batch(
        np.asarray(scores, dtype=np.float64)[None], np.array([label])
    )
    return float(loss[0]), grads[0]


def _softmax_ce_batch(scores: np.ndarray, labels: np.ndarray):
    shifted = scores - scores.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    rows = np.arange(scores.shape[0])
    losses = -logp[rows, labels]
    grads = np.exp(logp)
    grads[rows, labels] -= 1.0
    return losses, grads


def mse_loss(probs: np.ndarray, label: int) -> tuple[float, np.ndarray]:
    """Mean squared error of a probability vector against the one-hot label."""
    p = np.asarray(probs, dtype=np.float64)
    y = np.zeros_like(p)
    y[label] = 1.0
    diff = p - y
    return float(np.mean(diff * diff)), 2.0 * diff / p.shape[0]


def _mse_batch(probs: np.ndarray, labels: np.ndarray):
    y = np.zeros_like(probs)
    y[np.arange(probs.shape[0]), labels] = 1.0
    diff = probs - y
    return np.mean(diff * diff, axis=1), 2.0 * diff / probs.shape[1]


def _softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class AdamState:
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def zeros_like(cls, params: list[np.ndarray]) -> "AdamState":
        return cls(
            step=0,
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
        )


def adam_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    state: AdamState,
    config: TrainConfig,
) -> tuple[list[np.ndarray], AdamState]:
    """One standard Adam update with bias correction; purely functional."""
    if not state.m:
        state = AdamState.zeros_like(params)
    t = state.step + 1
    b1, b2 = config.adam_beta1, config.adam_beta2
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        new_params.append(p - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps))
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(step=t, m=new_m, v=new_v)


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the mean rank of their group."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.shape[0], dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < len(sorted_vals):
        j = i
        while j + 1 < len(sorted_vals) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auc_ovr(scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """One-vs-rest ROC AUC per class (rank statistic; ties rank-averaged)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_classes = scores.shape[1]
    out = np.empty(n_classes)
    for c in range(n_classes):
        pos = labels == c
        n_pos = int(pos.sum())
        n_neg = len(labels) - n_pos
        if n_pos == 0 or n_neg == 0:
            raise DegenerateSplitError(
                f"class {c} has no {'positive' if n_pos == 0 else 'negative'} samples"
            )
        ranks = _average_ranks(scores[:, c])
        out[c] = (ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
    return out


def _default_loss(model) -> Loss:
    return Loss.CROSS_ENTROPY if isinstance(model, MpsModel) else Loss.MSE


def loss_and_upstream(model, raw: np.ndarray, labels: np.ndarray, loss: Loss):
    """Per-sample losses and gradients w.r.t. the raw model output (class
    scores for an MPS, overlaps for a TTN)."""
    if loss is Loss.CROSS_ENTROPY:
        return _softmax_ce_batch(raw, labels)
    if isinstance(model, TtnModel):
        probs = probabilities_batch(raw)
        losses, gp = _mse_batch(probs, labels)
        return losses, overlap_grad_from_probability_grad(raw, gp)
    probs = _softmax(raw)
    losses, gp = _mse_batch(probs, labels)
    inner = (gp * probs).sum(axis=1, keepdims=True)
    return losses, probs * (gp - inner)


def _forward(model, sites: np.ndarray) -> np.ndarray:
    if isinstance(model, MpsModel):
        return forward_mps_batch(model, sites)
    return forward_ttn_batch(model, sites)


def _grad(model, sites: np.ndarray, upstream: np.ndarray) -> list[np.ndarray]:
    if isinstance(model, MpsModel):
        return grad_mps_batch(model, sites, upstream)
    return grad_ttn_batch(model, sites, upstream)


def predict_probabilities(model, sites: np.ndarray) -> np.ndarray:
    """Class probabilities for embedded sites (softmax or squared overlaps)."""
    raw = _forward(model, sites)
    if isinstance(model, TtnModel):
        return probabilities_batch(raw)
    return _softmax(raw)


def _embed_for(model, batch: JetBatch, layout: Layout) -> np.ndarray:
    sites = embed_batch(batch.features, layout)
    n_sites = sites.shape[1]
    expected = model.n_sites if isinstance(model, MpsModel) else model.n_leaves
    if n_sites != expected:
        raise ValueError(
            f"{layout.value} embedding yields {n_sites} sites but the model "
            f"has {expected}"
        )
    return sites


def evaluate(model, batch: JetBatch, layout: Layout = Layout.PER_PARTICLE) -> Metrics:
    """Accuracy and per-class AUC on a labeled batch."""
    sites = _embed_for(model, batch, layout)
    probs = predict_probabilities(model, sites)
    accuracy = float(np.mean(np.argmax(probs, axis=1) == batch.labels))
    return Metrics(accuracy=accuracy, auc=auc_ovr(probs, batch.labels))


def train_model(
    model,
    train: JetBatch,
    test: JetBatch,
    config: TrainConfig,
    layout: Layout = Layout.PER_PARTICLE,
) -> tuple[object, Metrics]:
    """Train with shuffled mini-batches and Adam; metrics on held-out data.

    The shuffle permutation of each epoch depends only on (seed, epoch).  An
    MPS is re-canonicalized after every epoch; the recorded loss per epoch is
    the sample-mean training loss.  Non-finite loss aborts.
    """
    if len(train) == 0:
        raise ValueError("empty training batch")
    loss = config.loss or _default_loss(model)
    sites = _embed_for(model, train, layout)
    labels = train.labels
    state = AdamState()
    curve: list[float] = []
    for epoch in range(config.epochs):
        perm = np.random.default_rng([config.seed, epoch]).permutation(len(train))
        total = 0.0
        for start in range(0, len(train), config.batch_size):
            idx = perm[start : start + config.batch_size]
            raw = _forward(model, sites[idx])
            losses, upstream = loss_and_upstream(model, raw, labels[idx], loss)
            batch_loss = float(losses.sum())
            if not np.isfinite(batch_loss):
                raise TrainingDivergedError(
                    f"non-finite loss in epoch {epoch}, batch at offset {start}"
                )
            total += batch_loss
            grads = _grad(model, sites[idx], upstream / len(idx))
            params, state = adam_step(model.arrays(), grads, state, config)
            model = model.with_arrays(params)
        if isinstance(model, MpsModel):
            model = canonicalize(model)
        curve.append(total / len(train))
    metrics = evaluate(model, test, layout)
    return model, replace(metrics, loss_curve=tuple(curve))


def kfold_indices(n: int, folds: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Contiguous-shard folds of a single seeded shuffle."""
    if folds < 2:
        raise ValueError(f"folds {folds} < 2")
    perm = np.random.default_rng([seed, 0xF01D]).permutation(n)
    shards = np.array_split(perm, folds)
    out = []
    for i in range(folds):
        rest = np.concatenate([s for j, s in enumerate(shards) if j != i])
        out.append((rest, shards[i]))
    return out


def cross_validate(
    build_model,
    batch: JetBatch,
    config: TrainConfig,
    layout: Layout = Layout.PER_PARTICLE,
) -> list[Metrics]:
    """k-fold cross-validation; `build_model(fold)` makes a fresh model."""
    results = []
    for fold, (tr, te) in enumerate(
        kfold_indices(len(batch), config.folds, config.seed)
    ):
        sub_train = JetBatch(batch.features[tr], batch.labels[tr])
        sub_test = JetBatch(batch.features[te], batch.labels[te])
        _, metrics = train_model(build_model(fold), sub_train, sub_test, config, layout)
        results.append(metrics)
    return results
