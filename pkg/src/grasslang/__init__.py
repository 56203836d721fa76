"""Subspace representations of phone-posterior sequences and the
principal-angle learners (projection-kernel SVM, subspace network) that
classify them."""

from .manifold import (
    PrincipalAngleSet,
    Subspace,
    SvdResult,
    orthogonal_procrustes,
    principal_angles,
    projection_kernel,
    random_orthonormal,
    subspace_distance,
    subspace_similarity,
    truncated_svd,
)
from .phonetics import PhoneticSequence, StackedMatrix, segment_posteriors, stack_context

__all__ = [
    "PrincipalAngleSet",
    "Subspace",
    "SvdResult",
    "orthogonal_procrustes",
    "principal_angles",
    "projection_kernel",
    "random_orthonormal",
    "subspace_distance",
    "subspace_similarity",
    "truncated_svd",
    "PhoneticSequence",
    "StackedMatrix",
    "segment_posteriors",
    "stack_context",
]
