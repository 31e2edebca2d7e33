"""Per-user ridge regression on genre vectors: the interpretable yardstick.

Each user gets their own weight vector over aspects plus an intercept,
fit by ridge least squares on their training ratings. The weights are
directly the user's general preference; restricting them to an item's
declared aspects gives the specific preference.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .model import PreferenceVector

__all__ = ["LrBaseline", "fit_lr_baseline"]


@dataclass
class LrBaseline:
    weights: np.ndarray        # (n_users, m)
    intercepts: np.ndarray     # (n_users,)
    ridge: float
    global_mean: float
    item_aspects: np.ndarray   # (n_items, m), 0/1
    user_seen: np.ndarray      # (n_users,), has training ratings
    max_rating: float = 5.0
    counters: Counter = field(default_factory=Counter)

    def predict_many(self, users, items, clamp=False) -> np.ndarray:
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        s = self.item_aspects[items].astype(np.float64)
        pred = self.intercepts[users] + np.einsum("ij,ij->i", self.weights[users], s)
        if clamp:
            np.clip(pred, 1.0, self.max_rating, out=pred)
        return pred

    def predict_rating(self, user, item, clamp=False) -> float:
        return float(self.predict_many([user], [item], clamp=clamp)[0])

    def general_preference(self, user) -> PreferenceVector:
        if not self.user_seen[user]:
            self.counters["cold_user"] += 1
            return PreferenceVector(np.zeros(self.weights.shape[1]), cold=True)
        return PreferenceVector(self.weights[user].copy(), cold=False)

    def specific_preference(self, user, item) -> PreferenceVector:
        g = self.general_preference(user)
        s = self.item_aspects[item].astype(np.float64)
        return PreferenceVector(g.values * s, cold=g.cold)

    def general_matrix(self) -> np.ndarray:
        return self.weights

    def specific_matrix(self, users, items) -> np.ndarray:
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        return self.weights[users] * self.item_aspects[items]


def fit_lr_baseline(train, catalog, ridge=1.0, max_rating=5.0) -> LrBaseline:
    """Fit one (weights, intercept) pair per user by ridge least squares.

    The intercept is not penalized, so ridge -> inf drives the weights to
    zero and the intercept to the user's mean rating. Users without
    training ratings get zero weights and the global mean as intercept.
    """
    if not train:
        raise ValueError("training split is empty")
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")

    from .data import interactions_to_arrays

    users, items, ratings = interactions_to_arrays(train)
    n_users = catalog.n_users
    m = catalog.n_aspects
    s_table = catalog.item_aspects.astype(np.float64)
    global_mean = float(ratings.mean())

    weights = np.zeros((n_users, m))
    intercepts = np.full(n_users, global_mean)
    seen = np.zeros(n_users, dtype=bool)

    order = np.argsort(users, kind="stable")
    users_s = users[order]
    items_s = items[order]
    ratings_s = ratings[order]
    bounds = np.searchsorted(users_s, np.arange(n_users + 1))

    eye_w = np.eye(m + 1)
    eye_w[0, 0] = 0.0  # leave the intercept unpenalized
    for u in range(n_users):
        lo, hi = bounds[u], bounds[u + 1]
        if lo == hi:
            continue
        seen[u] = True
        s = s_table[items_s[lo:hi]]
        r = ratings_s[lo:hi]
        x = np.hstack([np.ones((hi - lo, 1)), s])
        gram = x.T @ x + ridge * eye_w
        rhs = x.T @ r
        try:
            sol = np.linalg.solve(gram, rhs)
        except np.linalg.LinAlgError:
            sol, *_ = np.linalg.lstsq(gram, rhs, rcond=None)
        intercepts[u] = sol[0]
        weights[u] = sol[1:]

    return LrBaseline(
        weights=weights,
        intercepts=intercepts,
        ridge=float(ridge),
        global_mean=global_mean,
        item_aspects=catalog.item_aspects,
        user_seen=seen,
        max_rating=float(max_rating),
    )
