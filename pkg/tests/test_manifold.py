import math

import numpy as np
import pytest

from grasslang.errors import DimensionError, InputError, RankError
from grasslang.manifold import (
    PrincipalAngleSet,
    Subspace,
    orthogonal_procrustes,
    orthonormality_defect,
    principal_angles,
    projection_kernel,
    random_orthonormal,
    subspace_distance,
    subspace_similarity,
    truncated_svd,
)


def random_pair(rng, D=5, d1=2, d2=2):
    s1 = random_orthonormal(D, d1, rng)
    s2 = random_orthonormal(D, d2, rng)
    return s1, s2


def cayley_rotation(rng, d, scale):
    """Orthogonal matrix near identity, built independently of any QR/SVD."""
    g = rng.standard_normal((d, d)) * scale
    skew = g - g.T
    eye = np.eye(d)
    return np.linalg.solve(eye + skew, eye - skew)


class TestSubspaceType:
    def test_accepts_orthonormal_basis(self):
        s = Subspace(basis=np.eye(4)[:, :2], source_tag="r0")
        assert s.ambient_dim == 4 and s.rank == 2 and s.source_tag == "r0"

    def test_rejects_non_orthonormal(self):
        with pytest.raises(InputError):
            Subspace(basis=np.ones((3, 2)))

    def test_rejects_non_finite(self):
        bad = np.eye(3)[:, :2]
        bad[0, 0] = np.nan
        with pytest.raises(InputError):
            Subspace(basis=bad)

    def test_rejects_rank_above_ambient(self):
        with pytest.raises(RankError):
            Subspace(basis=np.zeros((2, 4)))  # d > D

    def test_basis_is_immutable(self):
        s = Subspace(basis=np.eye(3)[:, :1])
        with pytest.raises(ValueError):
            s.basis[0, 0] = 5.0


class TestTruncatedSvd:
    def test_diagonal_matrix(self):
        res = truncated_svd(np.diag([3.0, 1.0]), 1)
        np.testing.assert_allclose(res.left, [[1.0], [0.0]], atol=1e-12)
        np.testing.assert_allclose(res.singular_values, [3.0], atol=1e-12)
        np.testing.assert_allclose(res.right, [[1.0], [0.0]], atol=1e-12)

    def test_rank_one_outer_product_sign_convention(self):
        rng = np.random.default_rng(3)
        u = rng.standard_normal(6)
        u /= np.linalg.norm(u)
        v = rng.standard_normal(4)
        v /= np.linalg.norm(v)
        res = truncated_svd(np.outer(u, v), 1)
        np.testing.assert_allclose(res.singular_values, [1.0], atol=1e-12)
        # sign fixed so the largest-magnitude entry of the left vector is >= 0
        want = u if u[np.argmax(np.abs(u))] > 0 else -u
        np.testing.assert_allclose(res.left[:, 0], want, atol=1e-12)

    def test_residual_equals_discarded_spectrum(self):
        # oracle: eigendecomposition of X^T X by an independent dense routine
        rng = np.random.default_rng(7)
        X = rng.standard_normal((6, 9))
        res = truncated_svd(X, 3)
        resid = np.linalg.norm(X - res.reconstruct(), "fro") ** 2
        eigvals = np.sort(np.linalg.eigvalsh(X.T @ X))[::-1]
        np.testing.assert_allclose(resid, eigvals[3:].sum(), rtol=1e-10)

    def test_reconstruction_error_non_increasing_in_rank(self):
        rng = np.random.default_rng(11)
        X = rng.standard_normal((8, 12))
        errs = [np.linalg.norm(X - truncated_svd(X, r).reconstruct(), "fro")
                for r in range(1, 9)]
        assert all(a >= b - 1e-12 for a, b in zip(errs, errs[1:]))

    def test_rank_out_of_range(self):
        with pytest.raises(RankError):
            truncated_svd(np.eye(3), 0)
        with pytest.raises(RankError):
            truncated_svd(np.eye(3), 4)

    def test_non_finite_rejected(self):
        X = np.eye(3)
        X[1, 1] = np.inf
        with pytest.raises(InputError):
            truncated_svd(X, 1)

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        X = rng.standard_normal((5, 5))
        a = truncated_svd(X, 2)
        b = truncated_svd(X.copy(), 2)
        assert a.left.tobytes() == b.left.tobytes()
        assert a.right.tobytes() == b.right.tobytes()


class TestPrincipalAngles:
    def test_identical_subspaces(self):
        s = random_orthonormal(6, 3, 0)
        np.testing.assert_allclose(principal_angles(s, s).cosines, 1.0, atol=1e-12)

    def test_planar_analytic_case(self):
        e1 = Subspace(basis=np.array([[1.0], [0.0]]))
        diag = Subspace(basis=np.array([[1.0], [1.0]]) / math.sqrt(2))
        np.testing.assert_allclose(
            principal_angles(e1, diag).cosines, [1 / math.sqrt(2)], atol=1e-12)

    def test_squared_cosines_match_eigenvalue_oracle(self):
        # oracle: eigenvalues of the d x d matrix S1^T S2 S2^T S1
        rng = np.random.default_rng(13)
        for _ in range(100):
            s1, s2 = random_pair(rng, D=5, d1=2, d2=2)
            cos2 = principal_angles(s1, s2).cosines ** 2
            M = s1.basis.T @ s2.basis @ s2.basis.T @ s1.basis
            eig = np.sort(np.linalg.eigvalsh(M))[::-1]
            np.testing.assert_allclose(cos2, eig, atol=1e-10)

    def test_symmetry_and_right_orthogonal_invariance(self):
        rng = np.random.default_rng(17)
        for _ in range(20):
            s1, s2 = random_pair(rng, D=6, d1=3, d2=3)
            c12 = principal_angles(s1, s2).cosines
            c21 = principal_angles(s2, s1).cosines
            np.testing.assert_allclose(c12, c21, atol=1e-12)
            q = cayley_rotation(rng, 3, 0.7)
            s1q = Subspace(basis=s1.basis @ q)
            np.testing.assert_allclose(
                principal_angles(s1q, s2).cosines, c12, atol=1e-10)

    def test_ambient_mismatch(self):
        with pytest.raises(DimensionError):
            principal_angles(random_orthonormal(4, 2, 0), random_orthonormal(5, 2, 0))

    def test_type_rejects_unsorted(self):
        with pytest.raises(InputError):
            PrincipalAngleSet(cosines=np.array([0.1, 0.9]))


class TestSimilarityDistanceKernel:
    def test_self_similarity_is_rank(self):
        s = random_orthonormal(7, 3, 1)
        assert abs(subspace_similarity(s, s) - 3.0) < 1e-10

    def test_orthogonal_spans(self):
        e1 = Subspace(basis=np.eye(2)[:, :1])
        e2 = Subspace(basis=np.eye(2)[:, 1:])
        assert abs(subspace_similarity(e1, e2)) < 1e-12
        assert abs(subspace_distance(e1, e2) - math.sqrt(2)) < 1e-12

    def test_similarity_equals_frobenius_oracle(self):
        rng = np.random.default_rng(19)
        for _ in range(50):
            s1, s2 = random_pair(rng, D=6, d1=3, d2=2)
            direct = np.linalg.norm(s1.basis.T @ s2.basis, "fro") ** 2
            assert abs(subspace_similarity(s1, s2) - direct) < 1e-10

    def test_distance_identity_with_projector_oracle(self):
        # dist^2 computed from materialized D x D projectors
        rng = np.random.default_rng(23)
        for _ in range(50):
            s1, s2 = random_pair(rng, D=6, d1=3, d2=3)
            p1 = s1.basis @ s1.basis.T
            p2 = s2.basis @ s2.basis.T
            oracle = np.linalg.norm(p1 - p2, "fro") ** 2
            assert abs(subspace_distance(s1, s2) ** 2 - oracle) < 1e-8

    def test_distance_zero_on_self(self):
        # sqrt amplifies the float cancellation in 2d - 2||S^T S||^2, so the
        # self distance is tiny rather than exactly zero
        s = random_orthonormal(5, 2, 2)
        assert subspace_distance(s, s) < 1e-6

    def test_distance_rank_mismatch(self):
        with pytest.raises(RankError):
            subspace_distance(random_orthonormal(5, 2, 0), random_orthonormal(5, 3, 0))

    def test_kernel_self_is_rank(self):
        s = random_orthonormal(6, 4, 3)
        assert abs(projection_kernel(s, s) - 4.0) < 1e-10

    def test_kernel_right_orthogonal_invariance(self):
        rng = np.random.default_rng(29)
        for _ in range(20):
            s1, s2 = random_pair(rng, D=7, d1=3, d2=3)
            k = projection_kernel(s1, s2)
            q1 = cayley_rotation(rng, 3, 1.0)
            q2 = cayley_rotation(rng, 3, 1.0)
            kq = projection_kernel(Subspace(basis=s1.basis @ q1),
                                   Subspace(basis=s2.basis @ q2))
            assert abs(k - kq) < 1e-10

    def test_gram_matrix_psd(self):
        # oracle: dense symmetric eigensolver on the 20 x 20 Gram matrix
        rng = np.random.default_rng(31)
        subs = [random_orthonormal(8, 3, rng) for _ in range(20)]
        G = np.array([[projection_kernel(a, b) for b in subs] for a in subs])
        np.testing.assert_allclose(G, G.T, atol=1e-12)
        assert np.linalg.eigvalsh(G).min() >= -1e-8


class TestOrthogonalProcrustes:
    def test_recovers_known_rotation(self):
        rng = np.random.default_rng(37)
        R = cayley_rotation(rng, 4, 0.8)
        X = rng.standard_normal((4, 9))
        np.testing.assert_allclose(orthogonal_procrustes(X, R @ X), R, atol=1e-8)

    def test_identity_on_equal_inputs(self):
        rng = np.random.default_rng(41)
        X = rng.standard_normal((3, 7))
        np.testing.assert_allclose(orthogonal_procrustes(X, X), np.eye(3), atol=1e-10)

    def test_result_is_orthogonal(self):
        rng = np.random.default_rng(43)
        A = orthogonal_procrustes(rng.standard_normal((5, 6)),
                                  rng.standard_normal((5, 6)))
        assert orthonormality_defect(A) <= 1e-8

    def test_no_orthogonal_perturbation_improves_fit(self):
        # oracle: random Cayley perturbations of the returned minimizer
        rng = np.random.default_rng(47)
        X_from = rng.standard_normal((3, 8))
        X_to = rng.standard_normal((3, 8))
        A = orthogonal_procrustes(X_from, X_to)
        best = np.linalg.norm(X_to - A @ X_from, "fro")
        for _ in range(100):
            Q = cayley_rotation(rng, 3, rng.uniform(1e-3, 1.0))
            trial = np.linalg.norm(X_to - (A @ Q) @ X_from, "fro")
            assert trial >= best - 1e-10

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            orthogonal_procrustes(np.zeros((2, 3)), np.zeros((2, 4)))


class TestRandomOrthonormal:
    def test_orthonormality(self):
        for seed in range(10):
            s = random_orthonormal(9, 4, seed)
            assert orthonormality_defect(s.basis) <= 1e-10

    def test_seed_determinism(self):
        a = random_orthonormal(6, 3, 7)
        b = random_orthonormal(6, 3, 7)
        assert a.basis.tobytes() == b.basis.tobytes()

    def test_square_case_unit_determinant(self):
        for seed in range(5):
            s = random_orthonormal(5, 5, seed)
            assert abs(abs(np.linalg.det(s.basis)) - 1.0) < 1e-8

    def test_rank_above_ambient(self):
        with pytest.raises(RankError):
            random_orthonormal(3, 4, 0)
