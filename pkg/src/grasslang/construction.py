"""Building an orthonormal subspace from one utterance.

Three routes produce a point on the Grassmann manifold from a phone-vector
sequence:

* OLR: rank-d factorization of the stacked matrix, i.e. its top-d left
  singular vectors.
* ODL: the same factorization with an entrywise sparsity threshold on the
  loading matrix, solved by alternating exact coordinate updates.
* DLM: identify an orthonormal linear dynamical system (transition A,
  generator C) and take the scaled observability matrix as the basis.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import matio
from .errors import InputError, RankError, ShortUtteranceError
from .manifold import Subspace, orthogonal_procrustes, truncated_svd
from .phonetics import PhoneticSequence, stack_context

METHODS = ("olr", "odl", "dlm")


@dataclass(frozen=True)
class OdlConfig:
    """Sparsity threshold and iteration count for the alternating solver."""

    lambda_odl: float = 1e-4
    iterations: int = 50

    def __post_init__(self):
        if self.lambda_odl < 0:
            raise InputError(f"lambda_odl must be >= 0, got {self.lambda_odl}")
        if self.iterations < 1:
            raise InputError(f"iterations must be >= 1, got {self.iterations}")


@dataclass(frozen=True)
class DlmModel:
    """Orthonormal dynamic linear model: x_{k+1} = A x_k, y_k = C x_k."""

    transition: np.ndarray
    generator: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.transition, dtype=np.float64)
        C = np.asarray(self.generator, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise InputError(f"transition must be square, got {A.shape}")
        if C.ndim != 2 or C.shape[1] != A.shape[0]:
            raise InputError(
                f"generator cols {C.shape} must match state dim {A.shape[0]}")
        for name, m in (("transition", A), ("generator", C)):
            err = np.linalg.norm(m.T @ m - np.eye(m.shape[1]), "fro")
            if err > 1e-8:
                raise InputError(f"{name} not orthonormal: defect {err:.3e}")
        object.__setattr__(self, "transition", A.copy())
        object.__setattr__(self, "generator", C.copy())

    @property
    def state_dim(self) -> int:
        return self.transition.shape[0]


@dataclass(frozen=True)
class SubspaceSpec:
    """Method, context order and sample-subspace ratio for construction."""

    method: str
    context_order: int = 3
    sample_ratio: float = 0.6

    def __post_init__(self):
        if self.method not in METHODS:
            raise InputError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.context_order < 1:
            raise InputError(f"context order must be >= 1, got {self.context_order}")
        if not 0.0 < self.sample_ratio < 1.0:
            raise InputError(f"sample ratio must be in (0, 1), got {self.sample_ratio}")

    def rank_for(self, num_units: int) -> int:
        """Sample-subspace rank rule d = max(floor(alpha * M), 2)."""
        return max(math.floor(self.sample_ratio * num_units), 2)


@dataclass(frozen=True)
class OdlResult:
    """Subspace plus the per-iteration objective trace of the solver."""

    subspace: Subspace
    objectives: tuple
    early_stopped: bool = False


def _as_stacked(Z) -> np.ndarray:
    data = Z.data if hasattr(Z, "data") and not isinstance(Z, np.ndarray) else Z
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise InputError(f"stacked input must be a matrix, got shape {data.shape}")
    if not np.all(np.isfinite(data)):
        raise InputError("stacked input has non-finite entries")
    return data


def _check_olr_shape(Z: np.ndarray, d: int) -> None:
    D, K = Z.shape
    if not 1 <= d <= D:
        raise RankError(f"rank {d} outside 1..{D}")
    if K < D:
        raise ShortUtteranceError(
            f"utterance too short: K={K} columns < stacked dim D={D}")


def construct_olr(Z, d: int, source_tag: str = "") -> Subspace:
    """Top-d left singular vectors of the stacked matrix."""
    Z = _as_stacked(Z)
    _check_olr_shape(Z, d)
    return Subspace(basis=truncated_svd(Z, d).left, source_tag=source_tag)


def threshold_operator(X: np.ndarray, lam: float) -> np.ndarray:
    """Keep entries with |x| strictly larger than lam, zero the rest."""
    if lam < 0:
        raise InputError(f"threshold must be >= 0, got {lam}")
    X = np.asarray(X, dtype=np.float64)
    return np.where(np.abs(X) > lam, X, 0.0)


def odl_objective(Z, S, W, lam: float) -> float:
    """||Z - S W||_F^2 + lam^2 * nnz(W)."""
    Z = _as_stacked(Z)
    S = np.asarray(S.basis if isinstance(S, Subspace) else S, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    if S.shape[0] != Z.shape[0] or W.shape != (S.shape[1], Z.shape[1]):
        raise InputError(
            f"shape mismatch: Z {Z.shape}, S {S.shape}, W {W.shape}")
    return float(np.linalg.norm(Z - S @ W, "fro") ** 2
                 + lam ** 2 * np.count_nonzero(W))


def construct_odl(Z, d: int, cfg: OdlConfig = OdlConfig(), seed=0,
                  source_tag: str = "") -> OdlResult:
    """Alternating exact updates for the sparsity-thresholded factorization.

    Starts from d distinct columns of the identity sampled without
    replacement, then repeats: threshold the loadings W = O_lam(S^T Z), and
    re-fit S as the polar factor of Z W^T.  Both half-steps are exact
    coordinate minimizers, so the objective never increases.  If every
    loading is thresholded away (Z W^T = 0) the previous basis is kept and
    the solver stops early.
    """
    Z = _as_stacked(Z)
    _check_olr_shape(Z, d)
    D = Z.shape[0]
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    cols = rng.choice(D, size=d, replace=False)
    S = np.eye(D)[:, cols]

    objectives = []
    early = False
    for _ in range(cfg.iterations):
        W = threshold_operator(S.T @ Z, cfg.lambda_odl)
        objectives.append(odl_objective(Z, S, W, cfg.lambda_odl))
        ZWt = Z @ W.T
        if not ZWt.any():
            early = True
            break
        res = truncated_svd(ZWt, d)
        S = res.left @ res.right.T
    if not early:
        W = threshold_operator(S.T @ Z, cfg.lambda_odl)
        objectives.append(odl_objective(Z, S, W, cfg.lambda_odl))
    return OdlResult(subspace=Subspace(basis=S, source_tag=source_tag),
                     objectives=tuple(objectives), early_stopped=early)


def fit_dlm(Y, d: int) -> DlmModel:
    """Closed-form identification of the orthonormal dynamic linear model.

    Factors the M x K observation matrix as U S V^T; the generator is U, the
    state trajectory S V^T, and the transition is the orthogonal Procrustes
    map from states 1..K-1 onto states 2..K.
    """
    if isinstance(Y, PhoneticSequence):
        obs = Y.posteriors.T
    else:
        obs = np.asarray(Y, dtype=np.float64).T  # rows are phone vectors
    if obs.ndim != 2:
        raise InputError(f"observations must be a matrix, got shape {obs.shape}")
    M, K = obs.shape
    if K < 2:
        raise InputError(f"need at least 2 phone vectors, got {K}")
    if not 1 <= d <= min(M, K):
        raise RankError(f"state dim {d} outside 1..min({M}, {K})")
    res = truncated_svd(obs, d)
    states = res.singular_values[:, None] * res.right.T
    A = orthogonal_procrustes(states[:, :-1], states[:, 1:])
    return DlmModel(transition=A, generator=res.left)


def dlm_states(model: DlmModel, Y) -> np.ndarray:
    """State trajectory implied by the generator: d x K matrix C^T Y^T."""
    obs = Y.posteriors.T if isinstance(Y, PhoneticSequence) else np.asarray(Y).T
    return model.generator.T @ obs


def dlm_observability(model: DlmModel, n: int) -> Subspace:
    """Scaled observability matrix [C; CA; ...; CA^(n-1)] / sqrt(n).

    The 1/sqrt(n) factor makes the stack orthonormal: each block C A^i has
    orthonormal columns, so the unscaled Gram is n I.
    """
    if n < 1:
        raise InputError(f"context order must be >= 1, got {n}")
    blocks = []
    block = model.generator
    for _ in range(n):
        blocks.append(block)
        block = block @ model.transition
    return Subspace(basis=np.vstack(blocks) / math.sqrt(n))


def construct(seq: PhoneticSequence, spec: SubspaceSpec,
              cfg: OdlConfig = OdlConfig(), seed=0,
              source_tag: str = "") -> Subspace:
    """Dispatch over the three construction methods.

    OLR and ODL stack the sequence to context order n and factorize; DLM
    identifies the model on the raw sequence and expands it to the same
    n*M-dimensional ambient space via the observability matrix.  The rank
    is d = max(floor(alpha * M), 2) in every case.
    """
    d = spec.rank_for(seq.num_units)
    if spec.method == "dlm":
        model = fit_dlm(seq, d)
        sub = dlm_observability(model, spec.context_order)
        return Subspace(basis=sub.basis, source_tag=source_tag)
    Z = stack_context(seq, spec.context_order)
    if spec.method == "olr":
        return construct_olr(Z, d, source_tag=source_tag)
    return construct_odl(Z, d, cfg=cfg, seed=seed, source_tag=source_tag).subspace


def save_subspace(sub: Subspace, path, metadata: dict | None = None) -> None:
    """Matrix file plus key=value sidecar describing how it was built."""
    matio.save_matrix(path, sub.basis)
    with open(f"{path}.meta", "w", encoding="utf-8") as fh:
        fh.write(f"source_tag={sub.source_tag}\n")
        for key, value in (metadata or {}).items():
            fh.write(f"{key}={value}\n")


def load_subspace(path) -> tuple[Subspace, dict]:
    basis = matio.load_matrix(path)
    meta = {}
    with open(f"{path}.meta", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                key, _, value = line.partition("=")
                meta[key] = value
    sub = Subspace(basis=basis, source_tag=meta.get("source_tag", ""))
    return sub, meta
