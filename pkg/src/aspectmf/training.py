"""Joint minimization of rating loss and reconstruction loss.

The objective is ``total = l_pred + interp_weight * l_int`` where
``l_pred`` is the batch RMSE of the rating predictions and ``l_int`` the
batch mean of ``||vhat - u||`` (reconstruction distance of each item
vector from its attention image in aspect space). Gradients are
hand-derived and applied by one of the interchangeable kernels; with
shielding on (the default), the interpretation term never propagates
into the item embeddings, so the base recommender trains exactly as if
``interp_weight`` were zero.

Note the batch-mean normalization: gradients scale like 1/(batch *
rmse), so useful learning rates sit near 1.0 rather than the 1e-3
regime of per-example updates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import interactions_to_arrays
from .kernels import NonFiniteGradient, get_backend
from .model import AspectMF

__all__ = [
    "TrainConfig",
    "LossBreakdown",
    "EpochStats",
    "NonFiniteGradient",
    "compute_loss",
    "sgd_step",
    "train",
    "history_to_csv",
]


@dataclass
class TrainConfig:
    lr: float = 1.0
    l2: float = 0.02
    interp_weight: float = 0.05
    batch_size: int = 256
    max_epochs: int = 100
    patience: int = 5
    seed: int = 0
    shield: bool = True
    learn_scorer: bool = True
    kernel: str = "auto"

    def validate(self) -> None:
        if not self.lr > 0:
            raise ValueError(f"train.lr must be positive, got {self.lr}")
        if self.l2 < 0:
            raise ValueError(f"train.l2 must be nonnegative, got {self.l2}")
        if self.interp_weight < 0:
            raise ValueError(f"train.lambda must be nonnegative, got {self.interp_weight}")
        if self.batch_size < 1:
            raise ValueError(f"train.batch_size must be positive, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ValueError(f"train.max_epochs must be positive, got {self.max_epochs}")
        if self.patience < 1:
            raise ValueError(f"train.patience must be positive, got {self.patience}")

    def to_dict(self) -> dict:
        return {
            "lr": self.lr,
            "l2": self.l2,
            "lambda": self.interp_weight,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "seed": self.seed,
            "shield": self.shield,
            "learn_scorer": self.learn_scorer,
            "kernel": self.kernel,
        }


@dataclass
class LossBreakdown:
    l_pred: float
    l_int: float
    total: float


@dataclass
class EpochStats:
    epoch: int
    loss: LossBreakdown
    val_rmse: Optional[float]


def _batch_arrays(batch):
    if isinstance(batch, tuple) and len(batch) == 3:
        users = np.ascontiguousarray(batch[0], dtype=np.int64)
        items = np.ascontiguousarray(batch[1], dtype=np.int64)
        ratings = np.ascontiguousarray(batch[2], dtype=np.float64)
        return users, items, ratings
    return interactions_to_arrays(batch)


def _batch_attention(model: AspectMF, items: np.ndarray):
    """Attention weights and reconstructions for a batch of item indices."""
    psi = model.unit_aspects()
    iu = model.item_emb[items]
    if model.attn_mode == "softmax":
        sc = (iu @ (model.attn_bilinear @ psi.T)) / math.sqrt(model.dim)
        if model.mask_mode == "masked":
            mask = model.catalog.item_aspects[items].astype(bool)
            empty = ~mask.any(axis=1)
            mask[empty] = True
        else:
            mask = np.ones_like(sc, dtype=bool)
        sc = np.where(mask, sc, -np.inf)
        sc -= sc.max(axis=1, keepdims=True)
        ex = np.exp(sc)
        weights = ex / ex.sum(axis=1, keepdims=True)
    else:
        weights = np.stack([model.attend(int(j)).weights for j in items])
    return weights, weights @ psi


def compute_loss(model: AspectMF, batch, interp_weight=None) -> LossBreakdown:
    """Forward pass only: batch RMSE plus mean reconstruction distance."""
    users, items, ratings = _batch_arrays(batch)
    if users.shape[0] == 0:
        raise ValueError("batch is empty")
    lam = model.interp_weight if interp_weight is None else float(interp_weight)
    pred = model.predict_many(users, items, clamp=False)
    resid = pred - ratings
    l_pred = math.sqrt(float(resid @ resid) / users.shape[0])
    _, recon = _batch_attention(model, items)
    dist = np.linalg.norm(recon - model.item_emb[items], axis=1)
    l_int = float(dist.mean())
    return LossBreakdown(l_pred=l_pred, l_int=l_int, total=l_pred + lam * l_int)


def sgd_step(model: AspectMF, batch, config: TrainConfig) -> LossBreakdown:
    """One mini-batch gradient step, in place; returns the pre-step losses.

    Raises NonFiniteGradient (naming the parameter group) before applying
    a corrupt update.
    """
    users, items, ratings = _batch_arrays(batch)
    if users.shape[0] == 0:
        raise ValueError("batch is empty")
    if config.interp_weight > 0 and model.attn_mode != "softmax":
        raise ValueError(
            "training the interpretation loss requires attn_mode='softmax'; "
            "linear attention is an inference-time mode"
        )
    _, kern = get_backend(config.kernel)
    sum_sq, sum_int = kern.sgd_batch(
        model.user_emb, model.item_emb,
        model.user_bias, model.item_bias, model.global_mean,
        model.aspect_emb, model.attn_bilinear,
        model.catalog.item_aspects,
        users, items, ratings,
        config.lr, config.l2, config.interp_weight,
        config.shield, config.learn_scorer,
        model.mask_mode == "masked",
    )
    b = users.shape[0]
    l_pred = math.sqrt(sum_sq / b)
    l_int = sum_int / b
    return LossBreakdown(l_pred=l_pred, l_int=l_int, total=l_pred + config.interp_weight * l_int)


def _val_rmse(model: AspectMF, val_arrays) -> Optional[float]:
    if val_arrays is None:
        return None
    users, items, ratings = val_arrays
    pred = model.predict_many(users, items, clamp=True)
    return math.sqrt(float(np.mean((pred - ratings) ** 2)))


def _params_finite(model: AspectMF) -> bool:
    return (
        np.isfinite(model.user_emb).all()
        and np.isfinite(model.item_emb).all()
        and np.isfinite(model.user_bias).all()
        and np.isfinite(model.item_bias).all()
        and np.isfinite(model.aspect_emb).all()
        and np.isfinite(model.attn_bilinear).all()
    )


def train(dataset, catalog, config: TrainConfig, *, dim=32, mask_mode="masked",
          attn_mode="softmax", max_rating=5.0, model=None):
    """Train on the split, early-stopping on validation RMSE.

    Returns ``(model, history)`` with the model restored to its
    best-validation snapshot. Per-epoch shuffling uses a stream split
    off the config seed, so trajectories are reproducible and identical
    across interp_weight settings (batch composition never depends on
    the loss being optimized). Without a validation slice, the stopping
    metric falls back to the epoch's training RMSE.
    """
    config.validate()
    if not dataset.train:
        raise ValueError("training split is empty")

    users, items, ratings = interactions_to_arrays(dataset.train)
    n = users.shape[0]
    seq = np.random.SeedSequence(config.seed)
    init_seq, shuffle_seq = seq.spawn(2)

    if model is None:
        model = AspectMF(
            catalog, dim,
            interp_weight=config.interp_weight,
            mask_mode=mask_mode, attn_mode=attn_mode,
            max_rating=max_rating,
            seed=int(init_seq.generate_state(1)[0]),
        )
    if config.interp_weight > 0 and model.attn_mode != "softmax":
        raise ValueError("training the interpretation loss requires attn_mode='softmax'")

    model.global_mean = float(ratings.mean())
    model.user_seen[np.unique(users)] = True
    model.item_seen[np.unique(items)] = True
    _rejitter_collapsed_aspects(model, np.random.default_rng(init_seq.spawn(1)[0]))

    val_arrays = None
    if dataset.validation:
        val_arrays = interactions_to_arrays(dataset.validation)

    shuffle_rng = np.random.default_rng(shuffle_seq)
    _, kern = get_backend(config.kernel)
    masked = model.mask_mode == "masked"

    history = []
    best_snap = model.snapshot()
    best_metric = math.inf
    stale = 0
    for epoch in range(1, config.max_epochs + 1):
        perm = shuffle_rng.permutation(n)
        sum_sq = 0.0
        sum_int = 0.0
        for lo in range(0, n, config.batch_size):
            sel = perm[lo:lo + config.batch_size]
            ssq, sint = kern.sgd_batch(
                model.user_emb, model.item_emb,
                model.user_bias, model.item_bias, model.global_mean,
                model.aspect_emb, model.attn_bilinear,
                model.catalog.item_aspects,
                np.ascontiguousarray(users[sel]),
                np.ascontiguousarray(items[sel]),
                np.ascontiguousarray(ratings[sel]),
                config.lr, config.l2, config.interp_weight,
                config.shield, config.learn_scorer, masked,
            )
            sum_sq += ssq
            sum_int += sint
        if not _params_finite(model):
            raise NonFiniteGradient("parameters")
        if config.interp_weight > 0:
            _rejitter_collapsed_aspects(model, np.random.default_rng(init_seq.spawn(1)[0]))

        l_pred = math.sqrt(sum_sq / n)
        l_int = sum_int / n
        loss = LossBreakdown(
            l_pred=l_pred, l_int=l_int, total=l_pred + config.interp_weight * l_int
        )
        val_rmse = _val_rmse(model, val_arrays)
        history.append(EpochStats(epoch=epoch, loss=loss, val_rmse=val_rmse))

        metric = val_rmse if val_rmse is not None else l_pred
        if metric < best_metric:
            best_metric = metric
            best_snap = model.snapshot()
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break

    model.restore(best_snap)
    return model, history


def _rejitter_collapsed_aspects(model: AspectMF, rng) -> None:
    """Nudge any aspect row whose norm collapsed below tolerance."""
    norms = np.linalg.norm(model.aspect_emb, axis=1)
    bad = norms < 1e-9
    if bad.any():
        model.counters["aspect_rejitter"] += int(bad.sum())
        model.aspect_emb[bad] += rng.normal(0.0, 0.1, size=(int(bad.sum()), model.dim))


def history_to_csv(history) -> str:
    """Render training history as `epoch,l_pred,l_int,total,val_rmse` rows."""
    lines = ["epoch,l_pred,l_int,total,val_rmse"]
    for st in history:
        val = "" if st.val_rmse is None else repr(st.val_rmse)
        lines.append(
            f"{st.epoch},{st.loss.l_pred!r},{st.loss.l_int!r},{st.loss.total!r},{val}"
        )
    return "\n".join(lines) + "\n"
