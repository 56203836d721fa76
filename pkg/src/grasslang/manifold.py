"""Orthonormal subspaces and principal-angle geometry.

A subspace is a D x d matrix with orthonormal columns, treated as a point on
the Grassmann manifold: two bases related by a right orthogonal factor denote
the same subspace, and every similarity here is invariant under that
reparameterization.  All routines work in float64 and are deterministic.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InputError, RankError

# Frobenius tolerance for ||S^T S - I||; float64 leaves ample margin.
ORTHONORMALITY_TOL = 1e-8


@dataclass(frozen=True)
class Subspace:
    """Point on the Stiefel/Grassmann manifold with an explicit basis."""

    basis: np.ndarray
    source_tag: str = ""

    def __post_init__(self):
        basis = np.asarray(self.basis, dtype=np.float64)
        if basis.ndim != 2:
            raise InputError(f"basis must be 2-D, got shape {basis.shape}")
        if not np.all(np.isfinite(basis)):
            raise InputError("basis has non-finite entries")
        D, d = basis.shape
        if not 1 <= d <= D:
            raise RankError(f"need 1 <= rank <= ambient dim, got {d} and {D}")
        err = orthonormality_defect(basis)
        if err > ORTHONORMALITY_TOL:
            raise InputError(f"columns not orthonormal: defect {err:.3e}")
        basis = basis.copy()
        basis.flags.writeable = False
        object.__setattr__(self, "basis", basis)

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def rank(self) -> int:
        return self.basis.shape[1]


@dataclass(frozen=True)
class PrincipalAngleSet:
    """Cosines of the principal angles, largest first, clamped to [0, 1]."""

    cosines: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.cosines, dtype=np.float64)
        if c.ndim != 1 or c.size == 0:
            raise InputError("cosines must be a non-empty vector")
        if np.any(c < 0) or np.any(c > 1 + 1e-12):
            raise InputError("cosines outside [0, 1]")
        if np.any(np.diff(c) > 0):
            raise InputError("cosines must be non-increasing")
        c = c.copy()
        c.flags.writeable = False
        object.__setattr__(self, "cosines", c)

    @property
    def angles(self) -> np.ndarray:
        return np.arccos(np.clip(self.cosines, 0.0, 1.0))


@dataclass(frozen=True)
class SvdResult:
    """Truncated singular value decomposition X ~ U diag(s) V^T."""

    left: np.ndarray
    singular_values: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.singular_values, dtype=np.float64)
        if np.any(s < 0) or np.any(np.diff(s) > 0):
            raise InputError("singular values must be non-negative, descending")
        for name in ("left", "right"):
            m = np.asarray(getattr(self, name), dtype=np.float64)
            if orthonormality_defect(m) > ORTHONORMALITY_TOL:
                raise InputError(f"{name} factor is not column-orthonormal")

    def reconstruct(self) -> np.ndarray:
        return (self.left * self.singular_values) @ self.right.T


def orthonormality_defect(basis: np.ndarray) -> float:
    """Frobenius norm of basis^T basis - I."""
    basis = np.asarray(basis, dtype=np.float64)
    gram = basis.T @ basis
    return float(np.linalg.norm(gram - np.eye(basis.shape[1]), "fro"))


def _fix_signs(U: np.ndarray, V: np.ndarray):
    # Sign convention: in each left singular vector the entry of largest
    # magnitude is non-negative; ties break toward the lowest row index.
    U = U.copy()
    V = V.copy()
    for j in range(U.shape[1]):
        col = U[:, j]
        pivot = np.argmax(np.abs(col))  # argmax takes the first maximum
        if col[pivot] < 0:
            U[:, j] = -col
            V[:, j] = -V[:, j]
    return U, V


def truncated_svd(X: np.ndarray, r: int) -> SvdResult:
    """Best rank-r factorization of X with a deterministic sign convention."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise InputError(f"expected a matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InputError("matrix has non-finite entries")
    if not 1 <= r <= min(X.shape):
        raise RankError(f"rank {r} outside 1..{min(X.shape)} for shape {X.shape}")
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    U, V = _fix_signs(U[:, :r], Vt[:r].T)
    return SvdResult(left=U, singular_values=s[:r].copy(), right=V)


def principal_angles(s1: Subspace, s2: Subspace) -> PrincipalAngleSet:
    """Principal-angle cosines: singular values of S1^T S2, clamped to [0,1]."""
    if s1.ambient_dim != s2.ambient_dim:
        raise DimensionError(
            f"ambient dims differ: {s1.ambient_dim} vs {s2.ambient_dim}")
    sv = np.linalg.svd(s1.basis.T @ s2.basis, compute_uv=False)
    return PrincipalAngleSet(cosines=np.clip(sv, 0.0, 1.0))


def subspace_similarity(s1: Subspace, s2: Subspace) -> float:
    """Sum of squared principal-angle cosines, in [0, min(d1, d2)].

    Defined for unequal ranks as well; equals projection_kernel up to the
    clamping of the cosines.
    """
    return float(np.sum(principal_angles(s1, s2).cosines ** 2))


def subspace_distance(s1: Subspace, s2: Subspace) -> float:
    """Chordal distance sqrt(2d - 2 ||S1^T S2||_F^2) between equal-rank subspaces."""
    if s1.ambient_dim != s2.ambient_dim:
        raise DimensionError(
            f"ambient dims differ: {s1.ambient_dim} vs {s2.ambient_dim}")
    if s1.rank != s2.rank:
        raise RankError(f"ranks differ: {s1.rank} vs {s2.rank}")
    sq = 2.0 * s1.rank - 2.0 * np.linalg.norm(s1.basis.T @ s2.basis, "fro") ** 2
    return math.sqrt(max(sq, 0.0))


def projection_kernel(s1: Subspace, s2: Subspace) -> float:
    """Positive-definite subspace kernel ||S1^T S2||_F^2."""
    if s1.ambient_dim != s2.ambient_dim:
        raise DimensionError(
            f"ambient dims differ: {s1.ambient_dim} vs {s2.ambient_dim}")
    return float(np.linalg.norm(s1.basis.T @ s2.basis, "fro") ** 2)


def orthogonal_procrustes(x_from: np.ndarray, x_to: np.ndarray) -> np.ndarray:
    """Orthogonal A minimizing ||x_to - A x_from||_F.

    Returns U V^T from the full SVD of x_to x_from^T.  When that product is
    rank deficient the minimizer is not unique; the returned matrix is one
    valid choice, pinned down by the SVD sign convention.
    """
    x_from = np.asarray(x_from, dtype=np.float64)
    x_to = np.asarray(x_to, dtype=np.float64)
    if x_from.shape != x_to.shape:
        raise DimensionError(f"shape mismatch: {x_from.shape} vs {x_to.shape}")
    if x_from.ndim != 2 or x_from.shape[1] < 1:
        raise InputError("need at least one column")
    U, _, Vt = np.linalg.svd(x_to @ x_from.T)
    return U @ Vt


def random_orthonormal(D: int, d: int, seed) -> Subspace:
    """Haar-distributed orthonormal D x d basis.

    Gaussian matrix, thin QR, then the R diagonal's signs are folded into Q
    so the distribution is exactly Haar rather than QR-convention biased.
    """
    if d > D:
        raise RankError(f"rank {d} exceeds ambient dim {D}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    gauss = rng.standard_normal((D, d))
    Q, R = np.linalg.qr(gauss)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Subspace(basis=Q * signs)
