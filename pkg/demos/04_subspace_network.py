#!/usr/bin/env python3
"""The subspace network: training, invariance, and the gradient oracle.

The network scores each input subspace against banks of learnable
orthonormal maps, so its output depends only on the subspaces themselves,
not on the bases chosen to represent them.
"""

import numpy as np

from grasslang.manifold import Subspace, random_orthonormal
from grasslang.snn import (
    SnnTrainConfig,
    detection_scores,
    finite_difference_check,
    forward,
    init_snn,
    orthogonality_penalty,
    train,
)

rng = np.random.default_rng(2)
DIMS = [(12, 3), (9, 2)]  # (ambient, rank) per recognizer channel


def clustered_dataset(per_class=15, wobble=0.1):
    data = []
    for label in ("alpha", "bravo", "carol"):
        centers = [np.linalg.qr(rng.standard_normal((D, d)))[0] for D, d in DIMS]
        for _ in range(per_class):
            sample = [Subspace(basis=np.linalg.qr(
                c + wobble * rng.standard_normal(c.shape))[0])
                for c in centers]
            data.append((sample, label))
    return data


dataset = clustered_dataset()
holdout = dataset[::5]
training = [d for i, d in enumerate(dataset) if i % 5 != 0]

# --- train with the drop-based learning-rate schedule -----------------------
cfg = SnnTrainConfig(num_maps=10, beta=1.0, lambda_orth=1e-6,
                     max_epochs=30, batch_size=8, seed=0)
model = train(training, cfg)
for entry in model.history[::10]:
    print(f"epoch {entry['epoch']:3d}  lr {entry['lr']:.2e}"
          f"  loss {entry['mean_loss']:.4f}")

hits = sum(model.targets[int(np.argmax(detection_scores(model, s)))] == label
           for s, label in holdout)
print(f"held-out accuracy: {hits}/{len(holdout)}")

# --- the whole network is a function of the subspaces, not their bases ------
sample, _ = holdout[0]
g = rng.standard_normal((3, 3))
q = np.linalg.solve(np.eye(3) + (g - g.T), np.eye(3) - (g - g.T))
rotated = [Subspace(basis=sample[0].basis @ q), sample[1]]
la, _ = forward(sample, model)
lb, _ = forward(rotated, model)
print("max logit shift under basis rotation:", float(np.abs(la - lb).max()))

# --- penalty keeps the maps near the manifold -------------------------------
tight = train(training, SnnTrainConfig(num_maps=10, beta=1.0, lambda_orth=1e-3,
                                       max_epochs=30, batch_size=8, seed=0))
free = train(training, SnnTrainConfig(num_maps=10, beta=1.0, lambda_orth=0.0,
                                      max_epochs=30, batch_size=8, seed=0))
print("orthogonality defect with penalty:", round(orthogonality_penalty(tight), 6))
print("orthogonality defect without:    ", round(orthogonality_penalty(free), 6))

# --- analytic gradients match the finite-difference oracle -----------------
probe = init_snn(DIMS, ("alpha", "bravo", "carol"),
                 SnnTrainConfig(num_maps=3, beta=1.0, lambda_orth=1e-3, seed=1))
batch = [( [random_orthonormal(D, d, rng) for D, d in DIMS], "bravo")
         for _ in range(4)]
print("max relative gradient error:", finite_difference_check(batch, probe))
