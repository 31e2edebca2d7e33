# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled SGD kernel. Semantics are shared with the NumPy fallback
(`aspectmf.kernels._py`), which also documents them; keep the two in
lockstep when changing the math.

Per-example work (scores, softmax, reconstruction, scatter updates) runs
in fused C loops; the two O(n^2) contractions per batch (scorer applied
to the aspect rows, scorer gradient) go through one BLAS matmul each,
which beats scalar loops once the factor dimension is large."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt

from . import NonFiniteGradient

cnp.import_array()

# Sentinel score for masked-out aspects; real scores are far above it.
DEF MASKED_SCORE = -1e301


cdef inline double _dot(const double* a, const double* b, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i
    cdef double acc = 0.0
    for i in range(n):
        acc += a[i] * b[i]
    return acc


def sgd_batch(double[:, ::1] user_emb, double[:, ::1] item_emb,
              double[::1] user_bias, double[::1] item_bias, double global_mean,
              double[:, ::1] aspect_emb, double[:, ::1] attn_bilinear,
              const unsigned char[:, ::1] item_aspects,
              const cnp.int64_t[::1] users, const cnp.int64_t[::1] items,
              const double[::1] ratings,
              double lr, double l2, double interp_weight,
              bint shield, bint learn_scorer, bint masked):
    """Apply one batch step; returns (sum of squared residuals, sum of
    reconstruction distances) evaluated before the update."""
    cdef Py_ssize_t b = users.shape[0]
    cdef Py_ssize_t n = user_emb.shape[1]
    cdef Py_ssize_t m = aspect_emb.shape[0]
    cdef Py_ssize_t e, i, k, n_active
    cdef cnp.int64_t usr, itm
    cdef double acc, rmse, gpe, scale, scal, mx, denom, dd, coef, abar, tk
    cdef bint has_interp = interp_weight > 0.0

    s_np = np.empty(b)
    gq_np = np.empty((b, n))
    gu_np = np.empty((b, n))
    gbu_np = np.empty(b)
    gbi_np = np.empty(b)
    cdef double[::1] s = s_np
    cdef double[:, ::1] gq = gq_np
    cdef double[:, ::1] gu = gu_np
    cdef double[::1] gbu = gbu_np
    cdef double[::1] gbi = gbi_np

    cdef double sum_sq = 0.0
    cdef double sum_int = 0.0

    with nogil:
        for e in range(b):
            usr = users[e]
            itm = items[e]
            acc = global_mean + user_bias[usr] + item_bias[itm]
            acc += _dot(&user_emb[usr, 0], &item_emb[itm, 0], n)
            s[e] = acc - ratings[e]
            sum_sq += s[e] * s[e]
    rmse = sqrt(sum_sq / b)

    # Attention scratch; only touched when the interpretation loss is on.
    cdef double[:, ::1] psi = None
    cdef double[::1] norms = None
    cdef double[:, ::1] wpsi = None
    cdef double[:, ::1] ga = None      # reconstruction-path aspect gradient
    cdef double[:, ::1] macc = None    # score-path accumulator, finished after the loop
    cdef double[:, ::1] ccb = None     # per-example scorer-gradient vectors
    cdef double[::1] escore = None
    cdef double[::1] aw = None
    cdef double[::1] vh = None
    cdef double[::1] gvv = None
    cdef double[::1] hh = None
    psi_np = norms_np = ga_np = macc_np = ccb_np = None

    if has_interp:
        norms_np = np.linalg.norm(np.asarray(aspect_emb), axis=1)
        psi_np = np.asarray(aspect_emb) / norms_np[:, None]
        ga_np = np.zeros((m, n))
        macc_np = np.zeros((m, n))
        psi = psi_np
        norms = norms_np
        # rows hold the scorer applied to each unit aspect row
        wpsi = np.ascontiguousarray(psi_np @ np.asarray(attn_bilinear).T)
        ga = ga_np
        macc = macc_np
        if learn_scorer:
            ccb_np = np.zeros((b, n))
            ccb = ccb_np
        escore = np.empty(m)
        aw = np.empty(m)
        vh = np.empty(n)
        gvv = np.empty(n)
        hh = np.empty(m)

    scal = 1.0 / sqrt(<double> n)
    scale = l2 / b

    with nogil:
        for e in range(b):
            usr = users[e]
            itm = items[e]
            gpe = s[e] / (b * rmse) if rmse > 0.0 else 0.0

            for i in range(n):
                gq[e, i] = gpe * item_emb[itm, i]
                gu[e, i] = gpe * user_emb[usr, i]
            gbu[e] = gpe
            gbi[e] = gpe
            if l2 > 0.0:
                for i in range(n):
                    gq[e, i] += scale * user_emb[usr, i]
                    gu[e, i] += scale * item_emb[itm, i]
                gbu[e] += scale * user_bias[usr]
                gbi[e] += scale * item_bias[itm]

            if not has_interp:
                continue

            # ---- attention forward over the allowed aspect set
            n_active = 0
            if masked:
                for k in range(m):
                    if item_aspects[itm, k] != 0:
                        n_active += 1
            mx = -1e300
            for k in range(m):
                if masked and n_active > 0 and item_aspects[itm, k] == 0:
                    escore[k] = MASKED_SCORE
                    continue
                escore[k] = scal * _dot(&item_emb[itm, 0], &wpsi[k, 0], n)
                if escore[k] > mx:
                    mx = escore[k]
            denom = 0.0
            for k in range(m):
                if escore[k] == MASKED_SCORE:
                    aw[k] = 0.0
                else:
                    aw[k] = exp(escore[k] - mx)
                    denom += aw[k]
            for k in range(m):
                aw[k] /= denom

            for i in range(n):
                vh[i] = 0.0
            for k in range(m):
                if aw[k] != 0.0:
                    for i in range(n):
                        vh[i] += aw[k] * psi[k, i]
            dd = 0.0
            for i in range(n):
                vh[i] -= item_emb[itm, i]          # vh now holds vhat - u
                dd += vh[i] * vh[i]
            dd = sqrt(dd)
            sum_int += dd

            # ---- backward
            if dd > 0.0:
                coef = interp_weight / (b * dd)
                for i in range(n):
                    gvv[i] = coef * vh[i]
            else:
                for i in range(n):
                    gvv[i] = 0.0

            abar = 0.0
            for k in range(m):
                if aw[k] != 0.0:
                    hh[k] = _dot(&gvv[0], &psi[k, 0], n)
                    abar += aw[k] * hh[k]
                else:
                    hh[k] = 0.0
            for k in range(m):
                if aw[k] == 0.0:
                    continue
                tk = aw[k] * (hh[k] - abar)
                for i in range(n):
                    ga[k, i] += aw[k] * gvv[i]
                    macc[k, i] += tk * item_emb[itm, i]
                if learn_scorer:
                    for i in range(n):
                        ccb[e, i] += tk * psi[k, i]
            if not shield:
                for i in range(n):
                    gu[e, i] -= gvv[i]
                for k in range(m):
                    if aw[k] == 0.0:
                        continue
                    tk = aw[k] * (hh[k] - abar)
                    for i in range(n):
                        gu[e, i] += scal * tk * wpsi[k, i]

    # ---- finish the aspect and scorer gradients, check, apply
    g_aspect_np = None
    g_attn_np = None
    if has_interp:
        g_psi_hat = ga_np + scal * (macc_np @ np.asarray(attn_bilinear))
        g_aspect_np = (
            g_psi_hat - np.einsum("ij,ij->i", g_psi_hat, psi_np)[:, None] * psi_np
        ) / norms_np[:, None]
        if learn_scorer:
            batch_items = np.asarray(item_emb)[np.asarray(items)]
            g_attn_np = scal * (batch_items.T @ ccb_np)

    for arr, pname in ((gq_np, "user_emb"), (gu_np, "item_emb"),
                       (gbu_np, "user_bias"), (gbi_np, "item_bias"),
                       (g_aspect_np, "aspect_emb"), (g_attn_np, "attn_bilinear")):
        if arr is not None and not np.isfinite(arr).all():
            raise NonFiniteGradient(pname)

    cdef double[:, ::1] g_aspect = None
    cdef double[:, ::1] g_attn = None
    cdef Py_ssize_t j
    if g_aspect_np is not None:
        g_aspect = g_aspect_np
    if g_attn_np is not None:
        g_attn = g_attn_np

    with nogil:
        for e in range(b):
            usr = users[e]
            itm = items[e]
            for i in range(n):
                user_emb[usr, i] -= lr * gq[e, i]
                item_emb[itm, i] -= lr * gu[e, i]
            user_bias[usr] -= lr * gbu[e]
            item_bias[itm] -= lr * gbi[e]
        if g_aspect is not None:
            for k in range(m):
                for i in range(n):
                    aspect_emb[k, i] -= lr * g_aspect[k, i]
        if g_attn is not None:
            for i in range(n):
                for j in range(n):
                    attn_bilinear[i, j] -= lr * g_attn[i, j]

    return sum_sq, sum_int
