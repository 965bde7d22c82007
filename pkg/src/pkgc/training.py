"""Model optimization: cross-entropy over all tails, regularizers, Adagrad.

The objective for a fact (h, r, t) is the negative log-softmax of the true
tail against every entity, plus a weighted regularizer. Training always runs
on the reciprocal view: each fact contributes (h, r, t) and (t, r+|R|, h), so
tail-side prediction covers both directions. Incremental updates add a drift
penalty anchoring entity rows to their pre-update snapshot; relation rows
carry no such term.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, DivergenceError
from .kg import FactSet, unpack_array
from .models import EmbeddingModel

REG_KINDS = ("f2", "dura")
REG_WEIGHT_GRID = (0.0, 0.001, 0.003, 0.005, 0.01)
_TINY = 1e-30


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 1000
    max_epochs: int = 100
    incremental_epochs: int = 20
    reg_kind: str = "f2"
    reg_weight: float = 0.0
    mu: float = 0.001
    dim: int = 500
    optimizer: str = "adagrad"
    seed: int = 0

    def __post_init__(self):
        if self.reg_kind not in REG_KINDS:
            raise ConfigError(f"reg_kind must be one of {REG_KINDS}, got {self.reg_kind!r}")
        if self.optimizer != "adagrad":
            raise ConfigError(f"only the adagrad optimizer is supported, got {self.optimizer!r}")
        if self.learning_rate <= 0 or self.batch_size < 1:
            raise ConfigError("learning_rate must be positive and batch_size >= 1")


@dataclass
class Gradients:
    ent: np.ndarray
    rel: np.ndarray
    gamma: float = 0.0


def reciprocal_view(facts: FactSet, n_relations: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Augmented (h, r, t) arrays: every fact plus its reciprocal twin."""
    arr = facts.sorted_array()
    h, r, t = unpack_array(arr)
    aug_h = np.concatenate([h, t])
    aug_r = np.concatenate([r, r + n_relations])
    aug_t = np.concatenate([t, h])
    return aug_h, aug_r, aug_t


def _reg_batch(model: EmbeddingModel, h, r, t, kind: str, grads: Optional[Gradients], scale: float) -> float:
    """Mean regularizer over the batch; accumulates scaled gradients when asked."""
    fam = model.fam
    B = len(h)
    H, R = model.ent[h], model.rel[r]
    if kind == "f2":
        Hh = fam.head_rep(H)
        Tt = fam.tail_rep(model.ent[t])
        value = float((Hh * Hh).sum() + (R * R).sum() + (Tt * Tt).sum()) / B
        if grads is not None:
            np.add.at(grads.ent, h, fam.head_rep_backward(2.0 * scale * Hh))
            np.add.at(grads.rel, r, 2.0 * scale * R)
            np.add.at(grads.ent, t, fam.tail_rep_backward(2.0 * scale * Tt))
        return value
    # DURA: composed objects in both directions plus the entity sides they face
    r_rec = np.where(r < model.n_relations, r + model.n_relations, r - model.n_relations)
    T_head, R_rec = model.ent[t], model.rel[r_rec]
    M1 = fam.compose(H, R)
    M2 = fam.compose(T_head, R_rec)
    Tt = fam.tail_rep(model.ent[t])
    Ht = fam.tail_rep(H)
    value = float((M1 * M1).sum() + (Tt * Tt).sum() + (M2 * M2).sum() + (Ht * Ht).sum()) / B
    if grads is not None:
        dH1, dR1 = fam.compose_backward(H, R, 2.0 * scale * M1)
        dH2, dR2 = fam.compose_backward(T_head, R_rec, 2.0 * scale * M2)
        np.add.at(grads.ent, h, dH1)
        np.add.at(grads.rel, r, dR1)
        np.add.at(grads.ent, t, dH2)
        np.add.at(grads.rel, r_rec, dR2)
        np.add.at(grads.ent, t, fam.tail_rep_backward(2.0 * scale * Tt))
        np.add.at(grads.ent, h, fam.tail_rep_backward(2.0 * scale * Ht))
    return value


def _drift_batch(model: EmbeddingModel, h, t, snapshot: np.ndarray,
                 grads: Optional[Gradients], scale: float) -> float:
    """Mean ||e_new - e_old|| drift of the batch's head and tail entities."""
    B = len(h)
    value = 0.0
    for ids in (h, t):
        diff = model.ent[ids] - snapshot[ids]
        norms = np.linalg.norm(diff, axis=1)
        value += float(norms.sum()) / B
        if grads is not None:
            safe = np.maximum(norms, _TINY)
            np.add.at(grads.ent, ids, scale * diff / safe[:, None])
    return value


def loss(model: EmbeddingModel, batch: tuple[np.ndarray, np.ndarray, np.ndarray],
         cfg: TrainConfig, snapshot: Optional[np.ndarray] = None,
         want_grads: bool = True) -> tuple[float, float, Optional[Gradients]]:
    """Mean negative log-softmax of true tails plus weighted regularizers.

    Returns (total, reg_part, gradients); ``reg_part`` is the already-weighted
    regularizer contribution. ``snapshot`` enables the mu-weighted drift term
    used by incremental updates.
    """
    h, r, t = (np.asarray(a, dtype=np.int64) for a in batch)
    fam = model.fam
    B = len(h)
    H, R = model.ent[h], model.rel[r]
    M = fam.compose(H, R)
    Tall = fam.tail_rep(model.ent)

    if fam.is_distance:
        d2 = (M * M).sum(1)[:, None] + (Tall * Tall).sum(1)[None, :] - 2.0 * (M @ Tall.T)
        D = np.sqrt(np.maximum(d2, 0.0))
        S = -D
    else:
        S = M @ Tall.T
        raw = S
        if fam.trainable_gamma:
            S = model.gamma * S

    rows = np.arange(B)
    with np.errstate(invalid="ignore", over="ignore"):  # non-finite loss is caught by callers
        mx = S.max(axis=1)
        lse = mx + np.log(np.exp(S - mx[:, None]).sum(axis=1))
    ce = float((lse - S[rows, t]).sum()) / B

    grads: Optional[Gradients] = None
    if want_grads:
        W = np.exp(S - lse[:, None])
        W[rows, t] -= 1.0
        W /= B
        grads = Gradients(np.zeros_like(model.ent), np.zeros_like(model.rel))
        if fam.is_distance:
            safe = np.where(D > 1e-12, D, np.inf)
            A = W / safe
            dM = A @ Tall - A.sum(1)[:, None] * M
            dTall = A.T @ M - A.sum(0)[:, None] * Tall
        else:
            g = model.gamma if fam.trainable_gamma else 1.0
            dM = g * (W @ Tall)
            dTall = g * (W.T @ M)
            if fam.trainable_gamma:
                grads.gamma = float((W * raw).sum())
        grads.ent += fam.tail_rep_backward(dTall)
        dH, dR = fam.compose_backward(H, R, dM)
        np.add.at(grads.ent, h, dH)
        np.add.at(grads.rel, r, dR)

    reg_part = 0.0
    if cfg.reg_weight > 0.0:
        reg_part += cfg.reg_weight * _reg_batch(model, h, r, t, cfg.reg_kind, grads, cfg.reg_weight / B)
    if snapshot is not None and cfg.mu > 0.0:
        reg_part += cfg.mu * _drift_batch(model, h, t, snapshot, grads, cfg.mu / B)

    total = ce + reg_part
    return total, reg_part, grads


def regularizer(model: EmbeddingModel, fact: tuple[int, int, int], kind: str) -> float:
    """Per-fact regularizer value (F2 or DURA); relation id may be reciprocal."""
    if kind not in REG_KINDS:
        raise ConfigError(f"unknown regularizer kind {kind!r}")
    h, r, t = fact
    arrs = (np.array([h]), np.array([r]), np.array([t]))
    return _reg_batch(model, *arrs, kind, None, 0.0)


class Adagrad:
    """Per-parameter accumulator update; rows with zero gradient stay put."""

    def __init__(self, model: EmbeddingModel, lr: float, eps: float = 1e-10):
        self.lr = lr
        self.eps = eps
        self.acc_ent = np.zeros_like(model.ent)
        self.acc_rel = np.zeros_like(model.rel)
        self.acc_gamma = 0.0

    def step(self, model: EmbeddingModel, grads: Gradients) -> None:
        self.acc_ent += grads.ent * grads.ent
        model.ent -= self.lr * grads.ent / (np.sqrt(self.acc_ent) + self.eps)
        self.acc_rel += grads.rel * grads.rel
        model.rel -= self.lr * grads.rel / (np.sqrt(self.acc_rel) + self.eps)
        if model.fam.trainable_gamma:
            self.acc_gamma += grads.gamma * grads.gamma
            model.gamma -= self.lr * grads.gamma / (self.acc_gamma ** 0.5 + self.eps)


def _run_epochs(model: EmbeddingModel, arrays, cfg: TrainConfig, epochs: int,
                rng: np.random.Generator, snapshot: Optional[np.ndarray] = None,
                opt: Optional[Adagrad] = None) -> list[dict]:
    aug_h, aug_r, aug_t = arrays
    n = len(aug_h)
    opt = opt or Adagrad(model, cfg.learning_rate)
    log: list[dict] = []
    last_good = model.copy()
    for epoch in range(1, epochs + 1):
        started = time.perf_counter()
        perm = rng.permutation(n)
        loss_sum = reg_sum = 0.0
        batches = 0
        for lo in range(0, n, cfg.batch_size):
            sel = perm[lo:lo + cfg.batch_size]
            value, reg_part, grads = loss(model, (aug_h[sel], aug_r[sel], aug_t[sel]), cfg, snapshot)
            if not np.isfinite(value):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}; suspect learning rate or regularizer weight",
                    last_good=last_good, epoch=epoch)
            opt.step(model, grads)
            model.project_constraints()
            loss_sum += value
            reg_sum += reg_part
            batches += 1
        log.append({
            "epoch": epoch,
            "mean_loss": loss_sum / batches,
            "reg_loss": reg_sum / batches,
            "wall_ms": (time.perf_counter() - started) * 1e3,
        })
        last_good = model.copy()
    return log


def pretrain(model: EmbeddingModel, known: FactSet, cfg: TrainConfig,
             epochs: Optional[int] = None) -> list[dict]:
    """Mini-batch Adagrad over the reciprocal view of ``known``; returns the log.

    The model is updated in place; constraints are re-projected every step.
    """
    epochs = cfg.max_epochs if epochs is None else epochs
    if epochs == 0 or len(known) == 0:
        return []
    arrays = reciprocal_view(known, model.n_relations)
    rng = np.random.default_rng(cfg.seed)
    return _run_epochs(model, arrays, cfg, epochs, rng)


def incremental_update(model: EmbeddingModel, known: FactSet, new: FactSet,
                       mode: str, cfg: TrainConfig) -> tuple[list[dict], bool]:
    """Refresh the model after verification: retrain on all of ``known`` or
    fine-tune on ``new`` only, both anchored to the pre-update entity rows.

    Returns (log, updated); fine-tuning with an empty ``new`` is a counted
    no-op.
    """
    if mode not in ("retrain", "finetune"):
        raise ConfigError(f"update mode must be retrain or finetune, got {mode!r}")
    facts = known if mode == "retrain" else new
    if len(facts) == 0:
        return [], False
    snapshot = model.ent.copy()
    arrays = reciprocal_view(facts, model.n_relations)
    rng = np.random.default_rng(cfg.seed + 1)
    log = _run_epochs(model, arrays, cfg, cfg.incremental_epochs, rng, snapshot=snapshot)
    return log, True


def train_validation_split(known: FactSet, fraction: float = 0.95, seed: int = 0) -> tuple[FactSet, FactSet]:
    """Hyperparameter-search helper: split known facts into train/validation."""
    arr = known.sorted_array()
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(arr))
    cut = int(len(arr) * fraction)
    return FactSet(arr[perm[:cut]].tolist()), FactSet(arr[perm[cut:]].tolist())


def write_training_log(path: str, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,mean_loss,reg_loss,wall_ms\n")
        for row in rows:
            fh.write(f"{row['epoch']},{row['mean_loss']!r},{row['reg_loss']!r},{row['wall_ms']:.3f}\n")
