"""Biased matrix factorization with an aspect-space attention head.

The rating path is the usual ``mu + b_user + b_item + q . u``. On top of
it, an attention head re-expresses each item vector as a weighted sum of
unit-normalized aspect directions; the weights double as the item's
composition in aspect terms and drive the preference explanations.

Two attention modes exist:

* ``softmax``: learned bilinear scores ``u' W psi_k / sqrt(n)`` pushed
  through a softmax (the trainable mode; weights are a convex
  combination over the item's aspects).
* ``linear``: exact least-squares coefficients of the item vector on
  the aspect directions (unconstrained; reproduces the orthogonal
  projection when unmasked).

Masking restricts attention to the aspects an item actually declares;
items with no declared aspects fall back to unmasked attention.
"""

from __future__ import annotations

import io
import json
import zipfile
from collections import Counter
from dataclasses import dataclass

import numpy as np
from numpy.lib import format as npformat

from .linalg import SingularSystem, least_squares

__all__ = ["AspectMF", "AttentionResult", "PreferenceVector", "ATTN_MODES", "MASK_MODES"]

ATTN_MODES = ("softmax", "linear")
MASK_MODES = ("masked", "unmasked")

# Attention rows fall back to ridge least squares below this conditioning.
_LINEAR_FALLBACK_RIDGE = 1e-8


@dataclass
class AttentionResult:
    """Attention weights over aspects plus the reconstructed item vector."""

    weights: np.ndarray        # (m,), exactly zero at masked positions
    reconstruction: np.ndarray  # (n,), weights @ unit aspect rows


@dataclass
class PreferenceVector:
    """Per-aspect preference weights; ``cold`` marks an unseen entity."""

    values: np.ndarray
    cold: bool = False


class AspectMF:
    """All learnable state of the recommender.

    Parameters live in plain float64 arrays so the training kernels can
    update them in place. A trained instance is immutable in practice
    and safe to share across threads for prediction and explanation.
    """

    def __init__(self, catalog, dim, *, n_users=None, interp_weight=0.05,
                 mask_mode="masked", attn_mode="softmax", max_rating=5.0, seed=0):
        if attn_mode not in ATTN_MODES:
            raise ValueError(f"attn_mode must be one of {ATTN_MODES}, got {attn_mode!r}")
        if mask_mode not in MASK_MODES:
            raise ValueError(f"mask_mode must be one of {MASK_MODES}, got {mask_mode!r}")
        if dim < 1:
            raise ValueError("dim must be positive")

        self.catalog = catalog
        self.dim = int(dim)
        self.n_users = int(n_users) if n_users is not None else catalog.n_users
        self.n_items = catalog.n_items
        self.n_aspects = catalog.n_aspects
        if self.n_aspects > self.dim:
            raise ValueError(
                f"dim={self.dim} must be >= number of aspects ({self.n_aspects}) "
                "for the aspect rows to stay independent"
            )
        self.interp_weight = float(interp_weight)
        self.mask_mode = mask_mode
        self.attn_mode = attn_mode
        self.max_rating = float(max_rating)
        self.seed = int(seed)

        rng = np.random.default_rng(np.random.SeedSequence(seed))
        self.user_emb = rng.normal(0.0, 0.1, size=(self.n_users, self.dim))
        self.item_emb = rng.normal(0.0, 0.1, size=(self.n_items, self.dim))
        self.aspect_emb = rng.normal(0.0, 0.1, size=(self.n_aspects, self.dim))
        self.user_bias = np.zeros(self.n_users)
        self.item_bias = np.zeros(self.n_items)
        self.global_mean = 0.0
        self.attn_bilinear = np.eye(self.dim)
        self.user_seen = np.zeros(self.n_users, dtype=bool)
        self.item_seen = np.zeros(self.n_items, dtype=bool)
        self.counters = Counter()
        self.loaded_meta = None

    # ------------------------------------------------------------------
    # rating path

    def predict_rating(self, user, item, clamp=False) -> float:
        """Predicted rating; cold entities contribute 0 for their terms."""
        r = self.global_mean
        warm_u = 0 <= user < self.n_users and self.user_seen[user]
        warm_i = 0 <= item < self.n_items and self.item_seen[item]
        if warm_u:
            r += self.user_bias[user]
        else:
            self.counters["cold_user"] += 1
        if warm_i:
            r += self.item_bias[item]
        else:
            self.counters["cold_item"] += 1
        if warm_u and warm_i:
            r += float(np.dot(self.user_emb[user], self.item_emb[item]))
        if clamp:
            r = min(max(r, 1.0), self.max_rating)
        return float(r)

    def predict_many(self, users, items, clamp=False) -> np.ndarray:
        """Vectorized predictions for index arrays of equal length."""
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        warm_u = self.user_seen[users]
        warm_i = self.item_seen[items]
        pred = np.full(users.shape[0], self.global_mean)
        pred += np.where(warm_u, self.user_bias[users], 0.0)
        pred += np.where(warm_i, self.item_bias[items], 0.0)
        both = warm_u & warm_i
        if both.any():
            dots = np.einsum(
                "ij,ij->i", self.user_emb[users[both]], self.item_emb[items[both]]
            )
            pred[both] += dots
        n_cold = int((~warm_u).sum() + (~warm_i).sum())
        if n_cold:
            self.counters["cold_user"] += int((~warm_u).sum())
            self.counters["cold_item"] += int((~warm_i).sum())
        if clamp:
            np.clip(pred, 1.0, self.max_rating, out=pred)
        return pred

    # ------------------------------------------------------------------
    # attention head

    def unit_aspects(self) -> np.ndarray:
        """Aspect rows normalized to unit l2 norm (the working basis)."""
        norms = np.linalg.norm(self.aspect_emb, axis=1)
        if (norms < 1e-12).any():
            raise ValueError("an aspect row has collapsed to zero norm")
        return self.aspect_emb / norms[:, None]

    def allowed_mask(self, item) -> np.ndarray:
        """Aspects the attention may use for this item (bool, length m)."""
        if self.mask_mode == "unmasked":
            return np.ones(self.n_aspects, dtype=bool)
        row = self.catalog.item_aspects[item].astype(bool)
        if not row.any():
            self.counters["unmasked_fallback"] += 1
            return np.ones(self.n_aspects, dtype=bool)
        return row

    def attend(self, item) -> AttentionResult:
        """Re-express the item vector in the aspect basis.

        Softmax mode scores each allowed aspect with the bilinear form
        and normalizes; linear mode solves the least-squares system over
        the allowed unit aspect rows (ridge fallback on a degenerate
        system, counted).
        """
        psi = self.unit_aspects()
        u = self.item_emb[item]
        mask = self.allowed_mask(item)
        weights = np.zeros(self.n_aspects)
        if self.attn_mode == "softmax":
            scores = (psi @ (self.attn_bilinear.T @ u)) / np.sqrt(self.dim)
            scores = np.where(mask, scores, -np.inf)
            scores -= scores.max()
            ex = np.exp(scores)
            weights = ex / ex.sum()
        else:
            cols = [psi[k] for k in np.flatnonzero(mask)]
            try:
                w = least_squares(cols, u, ridge=0.0)
            except SingularSystem:
                self.counters["degenerate_attention"] += 1
                w = least_squares(cols, u, ridge=_LINEAR_FALLBACK_RIDGE)
            weights[mask] = w
        return AttentionResult(weights=weights, reconstruction=weights @ psi)

    def attention_matrix(self) -> np.ndarray:
        """Attention weights for every item, shape (n_items, m)."""
        if self.attn_mode != "softmax":
            return np.stack([self.attend(j).weights for j in range(self.n_items)])
        psi = self.unit_aspects()
        scores = (self.item_emb @ (self.attn_bilinear @ psi.T)) / np.sqrt(self.dim)
        mask = self.catalog.item_aspects.astype(bool)
        if self.mask_mode == "masked":
            # Items without declared aspects attend over everything.
            empty = ~mask.any(axis=1)
            mask[empty] = True
        else:
            mask[:] = True
        scores = np.where(mask, scores, -np.inf)
        scores -= scores.max(axis=1, keepdims=True)
        ex = np.exp(scores)
        return ex / ex.sum(axis=1, keepdims=True)

    # ------------------------------------------------------------------
    # preferences

    def general_preference(self, user) -> PreferenceVector:
        """Per-aspect affinity: the debiased rating of a pure-aspect item."""
        if not (0 <= user < self.n_users) or not self.user_seen[user]:
            self.counters["cold_user"] += 1
            return PreferenceVector(np.zeros(self.n_aspects), cold=True)
        vals = self.unit_aspects() @ self.user_emb[user]
        return PreferenceVector(vals, cold=False)

    def specific_preference(self, user, item) -> PreferenceVector:
        """Affinity restricted to one item: attention weight times the
        general preference, aspect by aspect."""
        cold = (
            not (0 <= user < self.n_users)
            or not self.user_seen[user]
            or not (0 <= item < self.n_items)
            or not self.item_seen[item]
        )
        if cold:
            self.counters["cold_pair"] += 1
            return PreferenceVector(np.zeros(self.n_aspects), cold=True)
        general = self.general_preference(user)
        weights = self.attend(item).weights
        return PreferenceVector(weights * general.values, cold=False)

    def general_matrix(self) -> np.ndarray:
        """Raw general preferences for all users, shape (n_users, m)."""
        return self.user_emb @ self.unit_aspects().T

    def specific_matrix(self, users, items) -> np.ndarray:
        """Raw specific preferences for (user, item) index arrays, (N, m).

        Rows for cold users/items are zero, matching the per-pair path.
        """
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        att = self.attention_matrix()
        out = att[items] * self.general_matrix()[users]
        cold = ~(self.user_seen[users] & self.item_seen[items])
        out[cold] = 0.0
        return out

    # ------------------------------------------------------------------
    # persistence and snapshots

    _ARRAY_FIELDS = (
        "user_emb",
        "item_emb",
        "user_bias",
        "item_bias",
        "aspect_emb",
        "attn_bilinear",
    )

    def snapshot(self) -> dict:
        snap = {name: getattr(self, name).copy() for name in self._ARRAY_FIELDS}
        snap["user_seen"] = self.user_seen.copy()
        snap["item_seen"] = self.item_seen.copy()
        snap["global_mean"] = self.global_mean
        return snap

    def restore(self, snap: dict) -> None:
        for name in self._ARRAY_FIELDS:
            getattr(self, name)[...] = snap[name]
        self.user_seen[...] = snap["user_seen"]
        self.item_seen[...] = snap["item_seen"]
        self.global_mean = snap["global_mean"]

    def hyper(self) -> dict:
        return {
            "dim": self.dim,
            "n_aspects": self.n_aspects,
            "interp_weight": self.interp_weight,
            "mask_mode": self.mask_mode,
            "attn_mode": self.attn_mode,
            "max_rating": self.max_rating,
            "seed": self.seed,
        }

    def save(self, path, extra_meta=None) -> None:
        """Write a self-describing checkpoint; the round trip is bit-exact."""
        meta = {
            "format": "aspectmf-checkpoint-v1",
            "hyper": self.hyper(),
            "n_users": self.n_users,
            "n_items": self.n_items,
            "global_mean": self.global_mean,
            "aspect_names": list(self.catalog.aspect_names),
            "extra": extra_meta or {},
        }
        arrays = {name: getattr(self, name) for name in self._ARRAY_FIELDS}
        arrays["user_seen"] = self.user_seen
        arrays["item_seen"] = self.item_seen
        arrays["item_aspects"] = self.catalog.item_aspects
        arrays["user_ids"] = self.catalog.user_ids
        arrays["item_ids"] = self.catalog.item_ids
        _write_archive(path, meta, arrays)

    @classmethod
    def load(cls, path) -> "AspectMF":
        from .data import AspectCatalog

        meta, arrays = _read_archive(path)
        if meta.get("format") != "aspectmf-checkpoint-v1":
            raise ValueError(f"{path}: not an aspectmf checkpoint")
        catalog = AspectCatalog(
            aspect_names=tuple(meta["aspect_names"]),
            item_aspects=arrays["item_aspects"],
            user_ids=arrays["user_ids"],
            item_ids=arrays["item_ids"],
        )
        hyper = meta["hyper"]
        model = cls(
            catalog,
            dim=hyper["dim"],
            n_users=meta["n_users"],
            interp_weight=hyper["interp_weight"],
            mask_mode=hyper["mask_mode"],
            attn_mode=hyper["attn_mode"],
            max_rating=hyper["max_rating"],
            seed=hyper["seed"],
        )
        for name in cls._ARRAY_FIELDS:
            getattr(model, name)[...] = arrays[name]
        model.user_seen[...] = arrays["user_seen"]
        model.item_seen[...] = arrays["item_seen"]
        model.global_mean = float(meta["global_mean"])
        model.loaded_meta = meta
        return model


# ----------------------------------------------------------------------
# deterministic zip container (np.savez stamps entries with the current
# clock, which would break byte-identical reruns)

_EPOCH = (1980, 1, 1, 0, 0, 0)


def _write_archive(path, meta: dict, arrays: dict) -> None:
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        info = zipfile.ZipInfo("meta.json", date_time=_EPOCH)
        zf.writestr(info, json.dumps(meta, sort_keys=True))
        for name in sorted(arrays):
            buf = io.BytesIO()
            npformat.write_array(buf, np.ascontiguousarray(arrays[name]), allow_pickle=False)
            info = zipfile.ZipInfo(name + ".npy", date_time=_EPOCH)
            zf.writestr(info, buf.getvalue())


def _read_archive(path):
    arrays = {}
    with zipfile.ZipFile(path, "r") as zf:
        with zf.open("meta.json") as fh:
            meta = json.load(fh)
        for name in zf.namelist():
            if name.endswith(".npy"):
                with zf.open(name) as fh:
                    arrays[name[:-4]] = npformat.read_array(fh, allow_pickle=False)
    return meta, arrays
