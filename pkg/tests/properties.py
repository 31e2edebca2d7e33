"""Reusable randomized property checks.

Shared between the per-module tests and the acceptance gate so the gate
can re-run each suite at its stated tolerance without duplicating the
logic.
"""

import numpy as np

from aspectmf.data import AspectCatalog
from aspectmf.linalg import Basis, gram_schmidt, least_squares, project_onto_span
from aspectmf.model import AspectMF
from aspectmf.training import TrainConfig, compute_loss, sgd_step


def random_basis(rng, n_max=32):
    """A random well-conditioned basis (resampled if nearly dependent)."""
    while True:
        n = int(rng.integers(2, n_max + 1))
        m = int(rng.integers(1, n + 1))
        mat = rng.normal(size=(m, n))
        sv = np.linalg.svd(mat, compute_uv=False)
        if sv[-1] > 1e-6:
            return Basis(mat)


def gram_schmidt_orthonormality(trials=1000, seed=123, tol=1e-10):
    """Max |<G_i, G_j> - delta_ij| over random independent bases."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        basis = random_basis(rng)
        q = gram_schmidt(basis).vectors
        gram = q @ q.T
        worst = max(worst, float(np.abs(gram - np.eye(q.shape[0])).max()))
    assert worst < tol, f"orthonormality defect {worst:.3e} >= {tol:.0e}"
    return worst


def pythagoras_decomposition(trials=300, seed=77, tol=1e-8):
    """Relative defect of ||u||^2 = ||v||^2 + ||residual||^2."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        basis = random_basis(rng, n_max=24)
        u = rng.normal(size=basis.n)
        _, v, res = project_onto_span(u, basis)
        lhs = float(u @ u)
        rhs = float(v @ v) + float(res @ res)
        worst = max(worst, abs(lhs - rhs) / max(lhs, 1e-30))
    assert worst < tol, f"Pythagoras defect {worst:.3e} >= {tol:.0e}"
    return worst


def projection_route_agreement(trials=300, seed=99, tol=1e-8):
    """Orthonormalization route vs normal-equations route coefficients."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        basis = random_basis(rng, n_max=24)
        u = rng.normal(size=basis.n)
        coeffs, _, _ = project_onto_span(u, basis)
        direct = least_squares(list(basis.vectors), u, ridge=0.0)
        worst = max(worst, float(np.abs(coeffs - direct).max()))
    assert worst < tol, f"route disagreement {worst:.3e} >= {tol:.0e}"
    return worst


def _random_model(rng, n_max=16):
    n = int(rng.integers(2, n_max + 1))
    m = int(rng.integers(1, n + 1))
    n_items = int(rng.integers(1, 6))
    table = (rng.random((n_items, m)) < 0.5).astype(np.uint8)
    catalog = AspectCatalog(
        aspect_names=tuple(f"a{k}" for k in range(m)),
        item_aspects=table,
        user_ids=np.arange(4, dtype=np.int64),
        item_ids=np.arange(n_items, dtype=np.int64),
    )
    model = AspectMF(
        catalog, dim=n, attn_mode="linear", mask_mode="unmasked",
        seed=int(rng.integers(0, 2**31)),
    )
    model.item_emb[...] = rng.normal(size=model.item_emb.shape)
    model.aspect_emb[...] = rng.normal(size=model.aspect_emb.shape)
    return model


def lemma1_argmin_equivalence(trials=500, seed=2024, tol=1e-6):
    """Unmasked linear attention equals the orthogonal-projection
    coefficients of the item vector on the unit aspect rows."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    done = 0
    while done < trials:
        model = _random_model(rng)
        psi = model.unit_aspects()
        sv = np.linalg.svd(psi, compute_uv=False)
        if sv[-1] < 1e-6:
            continue
        item = int(rng.integers(0, model.n_items))
        weights = model.attend(item).weights
        coeffs, _, _ = project_onto_span(model.item_emb[item], Basis(psi))
        worst = max(worst, float(np.abs(weights - coeffs).max()))
        done += 1
    assert worst < tol, f"argmin equivalence defect {worst:.3e} >= {tol:.0e}"
    return worst


def specific_equals_weighted_general(trials=200, seed=31):
    """specific preference == attention weights * general preference, exactly."""
    rng = np.random.default_rng(seed)
    for _ in range(trials):
        model = _random_model(rng)
        model.attn_mode = "softmax"
        model.user_seen[:] = True
        model.item_seen[:] = True
        user = int(rng.integers(0, model.n_users))
        item = int(rng.integers(0, model.n_items))
        spec = model.specific_preference(user, item).values
        expected = model.attend(item).weights * model.general_preference(user).values
        assert np.array_equal(spec, expected)


def gradient_matches_finite_differences(kernel="auto", tol=1e-4, eps=1e-5, seed=7):
    """Analytic batch gradients vs central differences on the toy model
    (5 users, 5 items, 3 aspects), in both shield modes.

    Shielded item embeddings are compared against the finite difference
    of the prediction loss alone; everything else against the total.
    """
    rng = np.random.default_rng(seed)
    m, n_items, n_users, n = 3, 5, 5, 4
    table = (rng.random((n_items, m)) < 0.5).astype(np.uint8)
    table[0] = 0  # exercise the no-declared-aspect fallback
    catalog = AspectCatalog(
        aspect_names=("x", "y", "z"),
        item_aspects=table,
        user_ids=np.arange(n_users, dtype=np.int64),
        item_ids=np.arange(n_items, dtype=np.int64),
    )
    lam = 0.05
    batch = (
        rng.integers(0, n_users, 8),
        rng.integers(0, n_items, 8),
        rng.integers(1, 6, 8).astype(float),
    )

    def fresh():
        model = AspectMF(catalog, dim=n, interp_weight=lam, seed=11)
        model.global_mean = 3.0
        model.user_seen[:] = True
        model.item_seen[:] = True
        return model

    groups = ("user_emb", "item_emb", "user_bias", "item_bias",
              "aspect_emb", "attn_bilinear")
    worst = 0.0
    for shield in (False, True):
        model = fresh()
        before = model.snapshot()
        cfg = TrainConfig(lr=1.0, l2=0.0, interp_weight=lam, shield=shield, kernel=kernel)
        sgd_step(model, batch, cfg)
        analytic = {g: before[g] - getattr(model, g) for g in groups}

        for name in groups:
            probe = fresh()
            arr = getattr(probe, name)
            fd = np.zeros_like(arr)
            pred_only = shield and name == "item_emb"
            it = np.nditer(arr, flags=["multi_index"])
            while not it.finished:
                ix = it.multi_index
                orig = arr[ix]
                arr[ix] = orig + eps
                up = compute_loss(probe, batch, interp_weight=0.0 if pred_only else lam)
                arr[ix] = orig - eps
                dn = compute_loss(probe, batch, interp_weight=0.0 if pred_only else lam)
                arr[ix] = orig
                hi = up.l_pred if pred_only else up.total
                lo = dn.l_pred if pred_only else dn.total
                fd[ix] = (hi - lo) / (2 * eps)
                it.iternext()
            denom = max(float(np.abs(fd).max()), 1e-8)
            rel = float(np.abs(analytic[name] - fd).max()) / denom
            worst = max(worst, rel)
            assert rel < tol, f"{name} (shield={shield}): rel error {rel:.3e} >= {tol:.0e}"
    return worst
