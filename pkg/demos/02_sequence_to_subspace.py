#!/usr/bin/env python3
"""From a phone-posterior sequence to an orthonormal subspace.

A synthetic Markov language emits a noisy posteriorgram; context stacking
turns it into super-vectors, and three constructions (plain low-rank,
sparsity-thresholded dictionary, dynamic-model observability) each yield a
point on the Grassmann manifold.
"""

import numpy as np

from grasslang.construction import (
    OdlConfig,
    construct_odl,
    construct_olr,
    dlm_observability,
    fit_dlm,
)
from grasslang.manifold import orthonormality_defect, principal_angles
from grasslang.phonetics import stack_context
from grasslang.synthlab import EmissionConfig, fixture_a, sample_sequence, emit_posteriors

rng = np.random.default_rng(1)
lang = fixture_a().languages[0]
print("language:", lang.name, "| units:", lang.num_units, "| order:", lang.order)

# --- one utterance ---------------------------------------------------------
sequence = sample_sequence(lang, 160, rng)
print("first 12 phones:", sequence[:12])
seq = emit_posteriors(sequence, lang.num_units,
                      EmissionConfig(concentration=50.0, floor=0.05), rng)
print("posteriorgram:", seq.posteriors.shape,
      "| argmax accuracy:", np.mean(seq.posteriors.argmax(1) == sequence))

# --- contextualize: trigram-like super-vectors -----------------------------
Z = stack_context(seq, 3)
print("stacked matrix:", Z.data.shape, "(D = n*M =", Z.stacked_dim, ")")

# --- plain low-rank construction -------------------------------------------
d = 6
olr = construct_olr(Z, d)
print("OLR basis:", olr.basis.shape,
      "orthonormality defect:", orthonormality_defect(olr.basis))

# --- sparsity-thresholded dictionary ----------------------------------------
result = construct_odl(Z, d, OdlConfig(lambda_odl=1e-4, iterations=50), seed=0)
obj = result.objectives
print("ODL objective: first", round(obj[0], 3), "-> last", round(obj[-1], 3),
      "| non-increasing:", all(a >= b - 1e-9 for a, b in zip(obj, obj[1:])))

# with no threshold the alternation converges to the OLR span
free = construct_odl(Z, d, OdlConfig(lambda_odl=0.0, iterations=1500), seed=0)
cos = principal_angles(olr, free.subspace).cosines
print("lambda=0 span vs OLR span, worst cosine:", cos.min())

# --- dynamic-model route ----------------------------------------------------
model = fit_dlm(seq, d)
print("transition:", model.transition.shape, "generator:", model.generator.shape)
sub = dlm_observability(model, 3)
print("observability subspace:", sub.basis.shape,
      "defect:", orthonormality_defect(sub.basis))

# --- same-language utterances sit closer than cross-language ones ----------
other = fixture_a().languages[1]

def make_subspace(language, seed):
    r = np.random.default_rng(seed)
    s = sample_sequence(language, 160, r)
    e = emit_posteriors(s, language.num_units,
                        EmissionConfig(concentration=50.0, floor=0.05), r)
    return construct_olr(stack_context(e, 3), d)

same = (principal_angles(olr, make_subspace(lang, 7)).cosines ** 2).sum()
cross = (principal_angles(olr, make_subspace(other, 7)).cosines ** 2).sum()
print("kernel to same language:", round(same, 3),
      "| to other language:", round(cross, 3))
