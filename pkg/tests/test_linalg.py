import numpy as np
import pytest

from aspectmf.linalg import (
    Basis,
    DegenerateBasis,
    SingularSystem,
    as_vector,
    cosine,
    gram_schmidt,
    least_squares,
    project_onto_span,
)
from properties import (
    gram_schmidt_orthonormality,
    projection_route_agreement,
    pythagoras_decomposition,
    random_basis,
)

SQRT2 = np.sqrt(2.0)


class TestGramSchmidt:
    def test_identity_on_orthonormal_input(self):
        q = gram_schmidt(Basis([[1.0, 0.0]]))
        assert np.allclose(q.vectors, [[1.0, 0.0]], atol=1e-15)

    def test_two_vector_hand_case(self):
        basis = Basis([[1.0, 0.0], [1.0 / SQRT2, 1.0 / SQRT2]])
        q = gram_schmidt(basis).vectors
        assert np.allclose(q[0], [1.0, 0.0], atol=1e-12)
        assert np.allclose(q[1], [0.0, 1.0], atol=1e-12)

    def test_three_vector_hand_case(self):
        basis = Basis([[1.0, 0, 0], [1.0, 1.0, 0], [1.0, 1.0, 1.0]])
        q = gram_schmidt(basis).vectors
        assert np.allclose(q, np.eye(3), atol=1e-12)
        gram = q @ q.T
        assert np.abs(gram - np.eye(3)).max() < 1e-12

    def test_degenerate_raises(self):
        with pytest.raises(DegenerateBasis):
            Basis([[1.0, 2.0], [2.0, 4.0]])
        with pytest.raises(DegenerateBasis):
            Basis([[1.0, 0.0], [1.0, 1e-12]])

    def test_leading_subspace_dependency(self):
        # vector i of the output must lie in span(input[0..i])
        rng = np.random.default_rng(3)
        basis = random_basis(rng, n_max=10)
        q = gram_schmidt(basis).vectors
        for i in range(basis.m):
            lead = basis.vectors[: i + 1]
            coeffs, _, res = project_onto_span(q[i], Basis(lead))
            assert np.linalg.norm(res) < 1e-9

    def test_orthonormality_property_suite(self):
        gram_schmidt_orthonormality(trials=1000, tol=1e-10)


class TestProjectOntoSpan:
    def test_axis_aligned(self):
        basis = Basis([[1.0, 0, 0], [0, 1.0, 0]])
        coeffs, v, res = project_onto_span([2.0, 3.0, 5.0], basis)
        assert np.allclose(coeffs, [2.0, 3.0], atol=1e-12)
        assert np.allclose(v, [2.0, 3.0, 0.0], atol=1e-12)
        assert np.allclose(res, [0.0, 0.0, 5.0], atol=1e-12)

    def test_vector_already_in_span(self):
        basis = Basis([[1.0, 0, 0], [0, 1.0, 0]])
        coeffs, v, res = project_onto_span([0.6, 0.8, 0.0], basis)
        assert np.allclose(coeffs, [0.6, 0.8], atol=1e-12)
        assert np.linalg.norm(res) < 1e-12

    def test_non_orthogonal_basis_hand_case(self):
        basis = Basis([[1.0, 0.0], [1.0 / SQRT2, 1.0 / SQRT2]])
        u = np.array([1.0, 1.0])
        coeffs, v, res = project_onto_span(u, basis)
        assert np.linalg.norm(v - u) < 1e-12
        assert np.linalg.norm(res) < 1e-12
        # expansion must reproduce u in the original basis
        assert np.abs(coeffs @ basis.vectors - u).max() < 1e-8
        assert np.allclose(coeffs, [0.0, SQRT2], atol=1e-12)

    def test_residual_orthogonal_to_basis(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            basis = random_basis(rng, n_max=16)
            u = rng.normal(size=basis.n)
            _, _, res = project_onto_span(u, basis)
            dots = basis.vectors @ res
            assert np.abs(dots).max() < 1e-9 * max(np.linalg.norm(u), 1.0)

    def test_idempotence(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            basis = random_basis(rng, n_max=12)
            u = rng.normal(size=basis.n)
            _, v, _ = project_onto_span(u, basis)
            _, v2, res2 = project_onto_span(v, basis)
            assert np.linalg.norm(v2 - v) < 1e-9
            assert np.linalg.norm(res2) < 1e-9

    def test_pythagoras_property_suite(self):
        pythagoras_decomposition(trials=300, tol=1e-8)

    def test_agrees_with_least_squares_route(self):
        projection_route_agreement(trials=300, tol=1e-8)

    def test_dimension_mismatch(self):
        basis = Basis([[1.0, 0.0]])
        with pytest.raises(ValueError):
            project_onto_span([1.0, 2.0, 3.0], basis)


class TestLeastSquares:
    def test_identity_design(self):
        w = least_squares([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0]], [4.0, 5.0, 6.0])
        assert np.allclose(w, [4.0, 5.0, 6.0], atol=1e-12)

    def test_exact_fit_single_column(self):
        w = least_squares([[1.0, 1.0]], [2.0, 2.0], ridge=0.0)
        assert np.allclose(w, [2.0], atol=1e-12)

    def test_ridge_shrinks_hand_case(self):
        w = least_squares([[1.0, 0.0], [0.0, 1.0]], [3.0, 4.0], ridge=1.0)
        assert np.allclose(w, [1.5, 2.0], atol=1e-12)

    def test_singular_system_raises(self):
        with pytest.raises(SingularSystem):
            least_squares([[1.0, 2.0], [2.0, 4.0]], [1.0, 1.0], ridge=0.0)

    def test_ridge_makes_singular_solvable(self):
        w = least_squares([[1.0, 2.0], [2.0, 4.0]], [1.0, 1.0], ridge=1e-6)
        assert np.isfinite(w).all()

    def test_rejects_negative_ridge(self):
        with pytest.raises(ValueError):
            least_squares([[1.0]], [1.0], ridge=-1.0)


class TestCosine:
    def test_parallel(self):
        assert cosine([1.0, 0.0], [1.0, 0.0]) == 1.0

    def test_orthogonal(self):
        assert cosine([1.0, 0.0], [0.0, 1.0]) == 0.0

    def test_zero_vector_convention(self):
        assert cosine([0.0, 0.0], [1.0, 2.0]) == 0.0

    def test_symmetry_and_self_similarity(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            a = rng.normal(size=6)
            b = rng.normal(size=6)
            assert cosine(a, b) == cosine(b, a)
            assert abs(cosine(a, a) - 1.0) < 1e-12
            assert -1.0 <= cosine(a, b) <= 1.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            cosine([1.0], [1.0, 2.0])


class TestValidation:
    def test_as_vector_rejects_nan(self):
        with pytest.raises(ValueError):
            as_vector([1.0, np.nan])
        with pytest.raises(ValueError):
            as_vector([np.inf, 0.0])

    def test_basis_rejects_more_vectors_than_dims(self):
        with pytest.raises(ValueError):
            Basis(np.eye(3)[:, :2].T @ np.eye(2))  # 3 vectors in R^2 impossible
        with pytest.raises(ValueError):
            Basis([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
