"""Minimal dense linear algebra for aspect-space geometry.

Everything the attention head and the baselines need: Gram-Schmidt
orthonormalization, orthogonal projection onto the span of a basis,
ridge/ordinary least squares, and cosine similarity. All functions are
pure and operate on float64 numpy arrays.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "DegenerateBasis",
    "SingularSystem",
    "Basis",
    "as_vector",
    "gram_schmidt",
    "project_onto_span",
    "least_squares",
    "cosine",
]

# Residual norms below this are treated as linear dependence.
INDEPENDENCE_TOL = 1e-9

# Norms below this count as the zero vector for cosine purposes.
ZERO_NORM_TOL = 1e-12


class DegenerateBasis(ValueError):
    """Raised when supposedly independent vectors are (numerically) dependent."""


class SingularSystem(ValueError):
    """Raised by least_squares when ridge=0 and the normal matrix is rank-deficient."""


def as_vector(values) -> np.ndarray:
    """Coerce to a 1-d float64 array, rejecting NaN/Inf entries."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-d vector, got shape {v.shape}")
    if not np.isfinite(v).all():
        raise ValueError("vector entries must be finite")
    return v


class Basis:
    """An ordered list of m linearly independent vectors in R^n, m <= n.

    Independence is checked at construction by running a Gram-Schmidt
    sweep and requiring every residual norm to exceed ``tol``.
    """

    def __init__(self, vectors, tol: float = INDEPENDENCE_TOL):
        mat = np.asarray(vectors, dtype=np.float64)
        if mat.ndim != 2 or mat.shape[0] == 0:
            raise ValueError("basis needs at least one vector (m x n array)")
        if not np.isfinite(mat).all():
            raise ValueError("basis entries must be finite")
        m, n = mat.shape
        if m > n:
            raise ValueError(f"cannot have {m} independent vectors in R^{n}")
        self.vectors = mat.copy()
        self.vectors.setflags(write=False)
        self.tol = float(tol)
        # Raises DegenerateBasis on dependence; result cached for reuse.
        self._ortho = _orthonormalize(self.vectors, self.tol)

    @property
    def m(self) -> int:
        return self.vectors.shape[0]

    @property
    def n(self) -> int:
        return self.vectors.shape[1]

    def __repr__(self):
        return f"Basis(m={self.m}, n={self.n})"


def _orthonormalize(mat: np.ndarray, tol: float) -> np.ndarray:
    """Classical Gram-Schmidt with per-step normalization.

    Row i of the output depends only on rows 0..i of the input, so the
    leading-subspace property holds exactly.
    """
    m, n = mat.shape
    q = np.empty((m, n), dtype=np.float64)
    for i in range(m):
        v = mat[i].astype(np.float64, copy=True)
        for j in range(i):
            v -= np.dot(mat[i], q[j]) * q[j]
        norm = np.linalg.norm(v)
        if norm < tol:
            raise DegenerateBasis(
                f"vector {i} is linearly dependent on its predecessors "
                f"(residual norm {norm:.3e} < {tol:.0e})"
            )
        q[i] = v / norm
    return q


def gram_schmidt(basis: Basis) -> Basis:
    """Return an orthonormal basis spanning the same subspace.

    Uses classical Gram-Schmidt with normalization after each residual
    subtraction, so every output vector has unit l2 norm and vector i
    lies in the span of input vectors 0..i.

    Raises
    ------
    DegenerateBasis
        If any residual norm falls below the independence tolerance.
    """
    return Basis(_orthonormalize(basis.vectors, basis.tol), tol=basis.tol)


def project_onto_span(u, basis: Basis):
    """Orthogonally project ``u`` onto the span of ``basis``.

    Returns ``(coeffs, v, residual)`` where ``v = coeffs @ basis.vectors``
    is the closest point of the span to ``u`` and ``residual = u - v`` is
    orthogonal to every basis vector.

    Coefficients are recovered through the Gram-Schmidt factorization:
    with B^T = Q^T R (rows of Q orthonormal), solving the triangular
    system R c = Q u gives the expansion in the original, generally
    non-orthogonal basis.
    """
    u = as_vector(u)
    if u.shape[0] != basis.n:
        raise ValueError(f"dim(u)={u.shape[0]} does not match basis n={basis.n}")
    q = basis._ortho                      # (m, n), orthonormal rows
    qu = q @ u                            # components along the orthonormal frame
    v = qu @ q
    residual = u - v
    # R = Q B^T is upper triangular because row i of Q spans rows 0..i of B.
    r = q @ basis.vectors.T
    coeffs = _solve_upper_triangular(r, qu)
    return coeffs, v, residual


def _solve_upper_triangular(r: np.ndarray, b: np.ndarray) -> np.ndarray:
    m = r.shape[0]
    x = np.zeros(m, dtype=np.float64)
    for i in range(m - 1, -1, -1):
        x[i] = (b[i] - np.dot(r[i, i + 1:], x[i + 1:])) / r[i, i]
    return x


def least_squares(design, target, ridge: float = 0.0) -> np.ndarray:
    """Solve argmin_w ||X w - target||^2 + ridge * ||w||^2.

    ``design`` is a sequence of column vectors (each the same length as
    ``target``). With ridge > 0 the normal equations are always
    well-posed; with ridge = 0 a rank-deficient system raises
    SingularSystem.
    """
    cols = [as_vector(c) for c in design]
    t = as_vector(target)
    if any(c.shape[0] != t.shape[0] for c in cols):
        raise ValueError("design columns must match the target length")
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    x = np.column_stack(cols)
    if ridge == 0.0:
        w, _, rank, _ = np.linalg.lstsq(x, t, rcond=None)
        if rank < x.shape[1]:
            raise SingularSystem(
                f"normal matrix is rank-deficient (rank {rank} < {x.shape[1]}) and ridge=0"
            )
        return w
    gram = x.T @ x + ridge * np.eye(x.shape[1])
    return np.linalg.solve(gram, x.T @ t)


def cosine(a, b) -> float:
    """Cosine similarity in [-1, 1]; zero vectors map to 0 by convention."""
    a = as_vector(a)
    b = as_vector(b)
    if a.shape[0] != b.shape[0]:
        raise ValueError("vectors must have the same length")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na < ZERO_NORM_TOL or nb < ZERO_NORM_TOL:
        return 0.0
    # Clip to kill 1+eps artifacts from rounding.
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))
