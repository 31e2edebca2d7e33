"""Surrogate preference truth and the full metric suite.

The truth side rebuilds each user's per-aspect preference from their
*training* ratings alone: every rating is debiased by the user mean
offset, the item mean offset and the global mean, scaled by the maximum
rating, and scattered onto the item's declared aspects; the resulting
vector is l1-normalized. Test ratings never leak into the truth.

Prediction quality is then measured three ways: top/bottom-M recall at
K of the general preference ranking, mean cosine similarity of the
specific (per-item) preference vectors over test pairs, and plain RMSE
of the clamped rating predictions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import interactions_to_arrays

__all__ = [
    "InvalidArgs",
    "SurrogateTruth",
    "EvalReport",
    "surrogate_truth",
    "top_bottom_recall",
    "average_recall",
    "specific_score",
    "rmse",
    "random_recall",
    "simulate_random_recall",
    "evaluate_model",
    "random_report",
]

_ZERO_NORM_TOL = 1e-12


class InvalidArgs(ValueError):
    """Malformed (M, K) arguments for the recall metrics."""


@dataclass
class SurrogateTruth:
    """Per-user l1-normalized signed aspect preferences plus exclusion flags."""

    prefs: np.ndarray          # (n_users, m), rows l1-normalized unless degenerate
    degenerate: np.ndarray     # (n_users,) bool, all-zero preference mass
    nonzero_counts: np.ndarray  # (n_users,) number of nonzero aspect entries

    @property
    def n_users(self) -> int:
        return self.prefs.shape[0]

    @property
    def n_aspects(self) -> int:
        return self.prefs.shape[1]


def surrogate_truth(train, catalog, max_rating=5.0, n_users=None) -> SurrogateTruth:
    """Build the stand-in preference truth from training ratings only.

    Per rating, ``w = (r - user_offset - item_offset - mean) / max_rating``
    where the offsets are the plain mean deviations computed on the same
    training ratings; the user's aspect-t preference is the sum of w over
    their rated items that declare aspect t, l1-normalized at the end.
    Users with zero preference mass are flagged degenerate.
    """
    if not len(train):
        raise ValueError("training split is empty")
    users, items, ratings = interactions_to_arrays(train)
    n_users = int(n_users) if n_users is not None else catalog.n_users
    n_items = catalog.n_items
    m = catalog.n_aspects

    r_bar = float(ratings.mean())
    cnt_u = np.bincount(users, minlength=n_users)
    sum_u = np.bincount(users, weights=ratings, minlength=n_users)
    off_u = np.where(cnt_u > 0, sum_u / np.maximum(cnt_u, 1) - r_bar, 0.0)
    cnt_i = np.bincount(items, minlength=n_items)
    sum_i = np.bincount(items, weights=ratings, minlength=n_items)
    off_i = np.where(cnt_i > 0, sum_i / np.maximum(cnt_i, 1) - r_bar, 0.0)

    w = (ratings - off_u[users] - off_i[items] - r_bar) / float(max_rating)

    table = catalog.item_aspects
    prefs = np.empty((n_users, m))
    for t in range(m):
        prefs[:, t] = np.bincount(
            users, weights=w * table[items, t], minlength=n_users
        )

    l1 = np.abs(prefs).sum(axis=1)
    degenerate = l1 == 0.0
    safe = np.where(degenerate, 1.0, l1)
    prefs = prefs / safe[:, None]
    prefs[degenerate] = 0.0
    nonzero = (prefs != 0.0).sum(axis=1)
    return SurrogateTruth(prefs=prefs, degenerate=degenerate, nonzero_counts=nonzero)


def _ranked_indices(values: np.ndarray, count: int, largest: bool) -> np.ndarray:
    """Indices of the count largest (or smallest) values, ties broken by
    ascending aspect index."""
    m = values.shape[0]
    key = -values if largest else values
    order = np.lexsort((np.arange(m), key))
    return order[:count]


def top_bottom_recall(truth, pred, m_top: int, k: int, mode: str = "top") -> float:
    """Fraction of the truth's M extreme aspects found in the prediction's
    K extreme aspects. ``mode`` picks the liked ("top") or disliked
    ("bottom") end; ties resolve by ascending aspect index on both sides.
    """
    truth = np.asarray(truth, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    m = truth.shape[0]
    if pred.shape[0] != m:
        raise InvalidArgs("truth and prediction must have the same length")
    if not 1 <= m_top <= k:
        raise InvalidArgs(f"need 1 <= M <= K, got M={m_top}, K={k}")
    if k > m:
        raise InvalidArgs(f"K={k} exceeds the number of aspects ({m})")
    if mode not in ("top", "bottom"):
        raise InvalidArgs(f"mode must be 'top' or 'bottom', got {mode!r}")
    largest = mode == "top"
    t_set = set(_ranked_indices(truth, m_top, largest).tolist())
    p_set = set(_ranked_indices(pred, k, largest).tolist())
    return len(t_set & p_set) / m_top


def average_recall(truth: SurrogateTruth, pred_matrix, m_top: int, k: int, mode: str):
    """Mean recall over users, excluding degenerate users and users with
    fewer than M nonzero truth aspects; returns (mean, included, excluded).
    """
    pred_matrix = np.asarray(pred_matrix, dtype=np.float64)
    eligible = (~truth.degenerate) & (truth.nonzero_counts >= m_top)
    idx = np.flatnonzero(eligible)
    if idx.size == 0:
        return math.nan, 0, int(truth.n_users)
    vals = [
        top_bottom_recall(truth.prefs[u], pred_matrix[u], m_top, k, mode)
        for u in idx
    ]
    return float(np.mean(vals)), int(idx.size), int(truth.n_users - idx.size)


def specific_score(truth: SurrogateTruth, model_like, test, catalog):
    """Mean cosine between surrogate and predicted specific preferences
    over test pairs; pairs whose truth vector is all-zero are skipped.
    Returns (score, used, skipped).
    """
    users, items, _ = interactions_to_arrays(test)
    if users.shape[0] == 0:
        raise ValueError("test split is empty")
    t_vec = truth.prefs[users] * catalog.item_aspects[items]
    p_vec = model_like.specific_matrix(users, items)

    t_norm = np.linalg.norm(t_vec, axis=1)
    p_norm = np.linalg.norm(p_vec, axis=1)
    use = (t_vec != 0.0).any(axis=1)

    denom_ok = (t_norm >= _ZERO_NORM_TOL) & (p_norm >= _ZERO_NORM_TOL)
    cos = np.zeros(users.shape[0])
    sel = use & denom_ok
    cos[sel] = np.einsum("ij,ij->i", t_vec[sel], p_vec[sel]) / (t_norm[sel] * p_norm[sel])
    np.clip(cos, -1.0, 1.0, out=cos)

    used = int(use.sum())
    if used == 0:
        return math.nan, 0, int(users.shape[0])
    return float(cos[use].mean()), used, int(users.shape[0] - used)


def rmse(model_like, test) -> float:
    """Root-mean-square rating error with predictions clamped to the
    rating range."""
    users, items, ratings = interactions_to_arrays(test)
    if users.shape[0] == 0:
        raise ValueError("test split is empty")
    pred = model_like.predict_many(users, items, clamp=True)
    return math.sqrt(float(np.mean((pred - ratings) ** 2)))


def random_recall(m: int, k: int) -> float:
    """Expected recall of a uniformly random ranking: K/m."""
    return k / m


def simulate_random_recall(m: int, m_top: int, k: int, trials: int = 100_000,
                           seed: int = 0, mode: str = "top") -> float:
    """Monte Carlo estimate of the random-ranking recall baseline."""
    rng = np.random.default_rng(seed)
    vals = rng.random((trials, m))
    key = -vals if mode == "top" else vals
    picked = np.argpartition(key, k - 1, axis=1)[:, :k]
    # WLOG the truth's extreme set is {0..M-1}: a random ranking hits any
    # fixed aspect subset with the same probability.
    hits = (picked < m_top).sum(axis=1)
    return float(hits.mean()) / m_top


@dataclass
class EvalReport:
    """One model's metrics plus the configuration they were computed under."""

    model: str
    rmse: Optional[float]
    recalls: dict
    score_s: Optional[float]
    excluded: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "rmse": self.rmse,
            "recalls": dict(self.recalls),
            "score_s": self.score_s,
            "excluded": dict(self.excluded),
            "config": dict(self.config),
        }

    def csv_header(self) -> list:
        cols = ["model", "rmse"]
        cols.extend(self.recalls.keys())
        cols.append("score_s")
        cols.extend(f"excl_{k}" for k in self.excluded.keys())
        return cols

    def csv_row(self) -> list:
        def fmt(x):
            return "" if x is None else repr(x)

        row = [self.model, fmt(self.rmse)]
        row.extend(fmt(v) for v in self.recalls.values())
        row.append(fmt(self.score_s))
        row.extend(str(v) for v in self.excluded.values())
        return row


def evaluate_model(model_like, name, truth: SurrogateTruth, test, catalog,
                   pairs=((1, 3), (3, 5)), config=None) -> EvalReport:
    """Score one model on every metric; `pairs` lists the (M, K) recalls."""
    pred_general = model_like.general_matrix()
    recalls = {}
    excluded = {}
    for m_top, k in pairs:
        for mode, tag in (("top", "T"), ("bottom", "B")):
            key = f"{tag}{m_top}@{k}"
            val, _, exc = average_recall(truth, pred_general, m_top, k, mode)
            recalls[key] = val
            excluded[key] = exc
    score, _, skipped = specific_score(truth, model_like, test, catalog)
    excluded["score_pairs"] = skipped
    return EvalReport(
        model=name,
        rmse=rmse(model_like, test),
        recalls=recalls,
        score_s=score,
        excluded=excluded,
        config=dict(config or {}),
    )


def random_report(m: int, pairs=((1, 3), (3, 5)), config=None) -> EvalReport:
    """The analytic random baseline: K/m recall everywhere, zero cosine."""
    recalls = {}
    for m_top, k in pairs:
        for tag in ("T", "B"):
            recalls[f"{tag}{m_top}@{k}"] = random_recall(m, k)
    return EvalReport(
        model="random",
        rmse=None,
        recalls=recalls,
        score_s=0.0,
        excluded={},
        config=dict(config or {}),
    )
