#!/usr/bin/env python3
"""Tour of the subspace geometry primitives.

Subspaces are D x d orthonormal bases compared through principal angles:
the singular values of S1^T S2 are the angle cosines, and everything built
on them ignores which basis was chosen for a subspace.
"""

import numpy as np

from grasslang.manifold import (
    Subspace,
    principal_angles,
    projection_kernel,
    random_orthonormal,
    subspace_distance,
    subspace_similarity,
    truncated_svd,
)

rng = np.random.default_rng(0)

# --- two random planes in R^6 -------------------------------------------
s1 = random_orthonormal(6, 2, rng)
s2 = random_orthonormal(6, 2, rng)
angles = principal_angles(s1, s2)
print("cosines:", np.round(angles.cosines, 4))
print("angles (deg):", np.round(np.degrees(angles.angles), 2))

print("similarity (sum cos^2):", round(subspace_similarity(s1, s2), 4))
print("chordal distance:", round(subspace_distance(s1, s2), 4))
print("projection kernel:", round(projection_kernel(s1, s2), 4))

# --- basis choice does not matter ----------------------------------------
# rotate s1's basis by a random 2x2 orthogonal matrix: same subspace
g = rng.standard_normal((2, 2))
q = np.linalg.solve(np.eye(2) + (g - g.T), np.eye(2) - (g - g.T))
s1_rotated = Subspace(basis=s1.basis @ q)
print("kernel after rotating the basis:",
      round(projection_kernel(s1_rotated, s2), 4), "(unchanged)")

# --- the distance identity ------------------------------------------------
# 2d - 2||S1^T S2||_F^2 equals the Frobenius distance of the projectors
p1 = s1.basis @ s1.basis.T
p2 = s2.basis @ s2.basis.T
print("dist^2:", round(subspace_distance(s1, s2) ** 2, 10))
print("||P1 - P2||_F^2:", round(np.linalg.norm(p1 - p2, "fro") ** 2, 10))

# --- a Gram matrix over many subspaces is positive semidefinite -----------
subs = [random_orthonormal(8, 3, rng) for _ in range(12)]
gram = np.array([[projection_kernel(a, b) for b in subs] for a in subs])
print("Gram min eigenvalue:", float(np.linalg.eigvalsh(gram).min()))

# --- truncated SVD underlies every construction method --------------------
X = rng.standard_normal((6, 20))
res = truncated_svd(X, 3)
resid = np.linalg.norm(X - res.reconstruct(), "fro") ** 2
tail = np.sort(np.linalg.eigvalsh(X @ X.T))[:3].sum()
print("rank-3 residual:", round(resid, 6), "= discarded spectrum:",
      round(tail, 6))
