"""NumPy fallback kernel: one mini-batch gradient step, in place.

Semantics shared with the compiled kernel:

* the prediction loss is the batch RMSE, so every prediction-side
  gradient carries a 1/(batch * rmse) factor (zero when the batch is
  predicted perfectly, the subgradient choice at the kink);
* the interpretation loss is the batch mean of ||vhat - u||, with a zero
  subgradient where the norm vanishes;
* l2 decay applies to user/item embeddings and biases only, folded into
  the per-example gradients with 1/batch weighting;
* with shielding on, the item-embedding gradient contains only the
  prediction term, so the base-model trajectory is bit-identical to an
  interp_weight=0 run.

All gradients are evaluated at the pre-step parameters and applied
afterwards, so duplicate users/items inside a batch accumulate.
"""

from __future__ import annotations

import math

import numpy as np

from . import NonFiniteGradient


def _check_finite(arr, name):
    if not np.isfinite(arr).all():
        raise NonFiniteGradient(name)


def sgd_batch(user_emb, item_emb, user_bias, item_bias, global_mean,
              aspect_emb, attn_bilinear, item_aspects,
              users, items, ratings,
              lr, l2, interp_weight, shield, learn_scorer, masked):
    """Apply one batch step; returns (sum of squared residuals, sum of
    reconstruction distances) evaluated before the update."""
    b = users.shape[0]
    n = user_emb.shape[1]

    qu = user_emb[users]                  # copies: pre-step values
    iu = item_emb[items]
    pred = global_mean + user_bias[users] + item_bias[items] + np.einsum("ij,ij->i", qu, iu)
    s = pred - ratings
    sum_sq = float(np.dot(s, s))
    rmse = math.sqrt(sum_sq / b)

    if rmse > 0.0:
        gp = s / (b * rmse)
    else:
        gp = np.zeros(b)

    gq = gp[:, None] * iu
    gu = gp[:, None] * qu
    gbu = gp.copy()
    gbi = gp.copy()
    if l2 > 0.0:
        scale = l2 / b
        gq += scale * qu
        gu += scale * iu
        gbu += scale * user_bias[users]
        gbi += scale * item_bias[items]

    sum_int = 0.0
    g_aspect = None
    g_attn = None
    if interp_weight > 0.0:
        scal = 1.0 / math.sqrt(n)
        norms = np.linalg.norm(aspect_emb, axis=1)
        psi = aspect_emb / norms[:, None]

        if masked:
            mask = item_aspects[items].astype(bool)
            empty = ~mask.any(axis=1)
            mask[empty] = True
        else:
            mask = np.ones((b, psi.shape[0]), dtype=bool)

        sc = (iu @ (attn_bilinear @ psi.T)) * scal
        sc = np.where(mask, sc, -np.inf)
        sc -= sc.max(axis=1, keepdims=True)
        ex = np.exp(sc)
        a = ex / ex.sum(axis=1, keepdims=True)

        vhat = a @ psi
        diff = vhat - iu
        d = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        sum_int = float(d.sum())

        inv = np.zeros(b)
        nz = d > 0.0
        inv[nz] = 1.0 / d[nz]
        gv = (interp_weight / b) * diff * inv[:, None]

        h = gv @ psi.T
        abar = np.einsum("ij,ij->i", a, h)
        t = a * (h - abar[:, None])       # masked entries have a = 0, so t = 0
        c = t @ psi

        g_psi_hat = scal * (t.T @ (iu @ attn_bilinear)) + a.T @ gv
        g_aspect = (
            g_psi_hat - np.einsum("ij,ij->i", g_psi_hat, psi)[:, None] * psi
        ) / norms[:, None]
        if learn_scorer:
            g_attn = scal * (iu.T @ c)
        if not shield:
            gu += -gv + scal * (t @ (psi @ attn_bilinear.T))

    _check_finite(gq, "user_emb")
    _check_finite(gu, "item_emb")
    _check_finite(gbu, "user_bias")
    _check_finite(gbi, "item_bias")
    if g_aspect is not None:
        _check_finite(g_aspect, "aspect_emb")
    if g_attn is not None:
        _check_finite(g_attn, "attn_bilinear")

    np.add.at(user_emb, users, -lr * gq)
    np.add.at(item_emb, items, -lr * gu)
    np.add.at(user_bias, users, -lr * gbu)
    np.add.at(item_bias, items, -lr * gbi)
    if g_aspect is not None:
        aspect_emb -= lr * g_aspect
    if g_attn is not None:
        attn_bilinear -= lr * g_attn

    return sum_sq, sum_int
