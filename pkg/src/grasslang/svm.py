"""Projection-kernel SVM backend.

The kernel is precomputed: Gram[i, j] = ||S_i^T S_j||_F^2 over the training
subspaces of one recognizer.  Binary soft-margin problems are solved in the
dual by pairwise coordinate ascent with max-violating-pair selection, one
model per (recognizer, target language).  The raw margins of all models are
fused into per-target detection scores by L2-regularized multiclass
logistic regression.
"""

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import matio
from .errors import DimensionError, InputError
from .manifold import Subspace, projection_kernel

DIAG_JITTER = 1e-10
KKT_TOL = 1e-3
MAX_SWEEPS = 10_000


@dataclass(frozen=True)
class GramMatrix:
    """Symmetric projection-kernel matrix over one recognizer's subspaces."""

    values: np.ndarray
    row_ids: tuple

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise InputError(f"Gram matrix must be square, got {v.shape}")
        if len(self.row_ids) != v.shape[0]:
            raise InputError("row_ids length must match matrix size")
        if np.abs(v - v.T).max(initial=0.0) > 1e-10:
            raise InputError("Gram matrix asymmetric beyond 1e-10")
        object.__setattr__(self, "values", v.copy())
        object.__setattr__(self, "row_ids", tuple(self.row_ids))

    @property
    def size(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class SvmModel:
    """Dual solution: signed coefficients y_i alpha_i over the support set."""

    dual_coefs: np.ndarray
    support_ids: np.ndarray
    bias: float
    penalty: float

    def __post_init__(self):
        coefs = np.asarray(self.dual_coefs, dtype=np.float64)
        ids = np.asarray(self.support_ids, dtype=np.int64)
        if coefs.shape != ids.shape:
            raise InputError("dual_coefs and support_ids must align")
        if self.penalty <= 0:
            raise InputError(f"penalty must be > 0, got {self.penalty}")
        if np.abs(coefs).max(initial=0.0) > self.penalty * (1 + 1e-9):
            raise InputError("dual coefficients exceed the box constraint")
        if abs(coefs.sum()) > 1e-8:
            raise InputError("signed dual coefficients do not balance")
        object.__setattr__(self, "dual_coefs", coefs.copy())
        object.__setattr__(self, "support_ids", ids.copy())


def compute_gram(subspaces, row_ids=None) -> GramMatrix:
    """Pairwise projection-kernel values; diagonal equals each rank."""
    subspaces = list(subspaces)
    if not subspaces:
        raise InputError("need at least one subspace")
    ambient = subspaces[0].ambient_dim
    if any(s.ambient_dim != ambient for s in subspaces):
        raise DimensionError("subspaces mix ambient dimensions")
    if row_ids is None:
        row_ids = tuple(range(len(subspaces)))
    n = len(subspaces)
    values = np.empty((n, n))
    for i, si in enumerate(subspaces):
        values[i, i] = projection_kernel(si, si)
        for j in range(i + 1, n):
            values[i, j] = projection_kernel(si, subspaces[j])
            values[j, i] = values[i, j]
    return GramMatrix(values=values, row_ids=tuple(row_ids))


def kernel_row(test: Subspace, train_subspaces) -> np.ndarray:
    """Kernel values between one test subspace and the training list."""
    return np.array([projection_kernel(test, s) for s in train_subspaces])


def train_binary_svm(gram: GramMatrix, labels, C: float,
                     tol: float = KKT_TOL, max_sweeps: int = MAX_SWEEPS) -> SvmModel:
    """Soft-margin dual solver on a precomputed kernel.

    Max-violating-pair coordinate ascent: each step picks the most violating
    index pair (ties to the lowest index), moves along the equality
    constraint, and clips at the box.  Terminates when the KKT violation
    drops below tol.  A diagonal jitter absorbs float-level PSD violations.
    """
    y = np.asarray(labels, dtype=np.float64)
    if set(np.unique(y)) != {-1.0, 1.0}:
        raise InputError("labels must contain both classes as +/-1")
    if C <= 0:
        raise InputError(f"penalty C must be > 0, got {C}")
    K = gram.values + DIAG_JITTER * np.eye(gram.size)
    n = gram.size

    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of 1/2 a^T Q a - e^T a at a = 0
    converged = False
    for _ in range(max_sweeps):  # one sweep = up to n pair updates
        for _ in range(n):
            crit = -y * grad
            up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
            low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
            if not up.any() or not low.any():
                converged = True
                break
            i = int(np.flatnonzero(up)[np.argmax(crit[up])])
            j = int(np.flatnonzero(low)[np.argmin(crit[low])])
            if crit[i] - crit[j] <= tol:
                converged = True
                break
            quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
            if quad < -1e-8:
                raise InputError(f"Gram matrix not PSD: pair curvature {quad:.3e}")
            step = (crit[i] - crit[j]) / max(quad, 1e-12)
            step = min(step,
                       C - alpha[i] if y[i] > 0 else alpha[i],
                       alpha[j] if y[j] > 0 else C - alpha[j])
            alpha[i] += y[i] * step
            alpha[j] -= y[j] * step
            grad += step * y * (K[:, i] - K[:, j])
        if converged:
            break
    else:
        warnings.warn("SMO hit the sweep cap before reaching tolerance",
                      RuntimeWarning, stacklevel=2)

    crit = -y * grad
    up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
    low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
    hi = crit[up].max() if up.any() else 0.0
    lo = crit[low].min() if low.any() else 0.0
    bias = float((hi + lo) / 2.0)

    support = np.flatnonzero(alpha > 1e-12)
    return SvmModel(dual_coefs=y[support] * alpha[support],
                    support_ids=support, bias=bias, penalty=float(C))


def dual_objective(gram: GramMatrix, labels, model: SvmModel) -> float:
    """Value of the maximized dual, for monotonicity instrumentation."""
    y = np.asarray(labels, dtype=np.float64)
    alpha = np.zeros(gram.size)
    alpha[model.support_ids] = model.dual_coefs * y[model.support_ids]
    K = gram.values + DIAG_JITTER * np.eye(gram.size)
    qa = (y * alpha) @ K * y
    return float(alpha.sum() - 0.5 * alpha @ qa)


def svm_decision(model: SvmModel, kernel_values) -> float:
    """Sum of signed duals times kernel values plus the bias."""
    row = np.asarray(kernel_values, dtype=np.float64)
    if row.ndim != 1 or row.size <= model.support_ids.max(initial=-1):
        raise InputError("kernel row does not cover the training ids")
    return float(model.dual_coefs @ row[model.support_ids] + model.bias)


@dataclass(frozen=True)
class OvrSvmModel:
    """One binary model per (recognizer, target); scores stack l-major."""

    models: dict
    targets: tuple
    num_recognizers: int
    penalty: float

    def score_columns(self):
        return [(l, t) for l in range(self.num_recognizers) for t in self.targets]


def train_ovr(subspaces_by_recognizer, labels, C: float,
              targets=None) -> OvrSvmModel:
    """Target-dependent one-vs-rest SVMs for every recognizer channel."""
    labels = list(labels)
    if not subspaces_by_recognizer:
        raise InputError("need at least one recognizer channel")
    for l, subs in enumerate(subspaces_by_recognizer):
        if len(subs) != len(labels):
            raise InputError(f"recognizer {l} has {len(subs)} subspaces for"
                             f" {len(labels)} utterances")
    if targets is None:
        targets = tuple(sorted(set(labels)))
    if len(targets) < 2:
        raise InputError("need at least two target languages")
    models = {}
    for l, subs in enumerate(subspaces_by_recognizer):
        gram = compute_gram(subs)
        for t in targets:
            y = np.where(np.asarray(labels, dtype=object) == t, 1.0, -1.0)
            models[(l, t)] = train_binary_svm(gram, y, C)
    return OvrSvmModel(models=models, targets=tuple(targets),
                       num_recognizers=len(subspaces_by_recognizer),
                       penalty=float(C))


def score_raw(ovr: OvrSvmModel, train_subspaces_by_recognizer,
              test_subspaces_by_recognizer) -> np.ndarray:
    """Raw margin matrix, one row per test utterance, L*T columns l-major."""
    n_test = len(test_subspaces_by_recognizer[0])
    raw = np.empty((n_test, ovr.num_recognizers * len(ovr.targets)))
    for l in range(ovr.num_recognizers):
        train_subs = train_subspaces_by_recognizer[l]
        for i, sub in enumerate(test_subspaces_by_recognizer[l]):
            row = kernel_row(sub, train_subs)
            for ti, t in enumerate(ovr.targets):
                raw[i, l * len(ovr.targets) + ti] = \
                    svm_decision(ovr.models[(l, t)], row)
    return raw


def score_raw_training(ovr: OvrSvmModel, grams) -> np.ndarray:
    """Raw margins of the training utterances from their own Gram matrices."""
    n = grams[0].size
    raw = np.empty((n, ovr.num_recognizers * len(ovr.targets)))
    for l in range(ovr.num_recognizers):
        for ti, t in enumerate(ovr.targets):
            model = ovr.models[(l, t)]
            for i in range(n):
                raw[i, l * len(ovr.targets) + ti] = \
                    svm_decision(model, grams[l].values[i])
    return raw


@dataclass(frozen=True)
class FusionModel:
    """Multiclass logistic regression over raw scores; last weight row is bias."""

    weights: np.ndarray
    targets: tuple
    reg_strength: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if not np.all(np.isfinite(w)):
            raise InputError("fusion weights must be finite")
        if w.shape[1] != len(self.targets):
            raise InputError("weight columns must match targets")
        object.__setattr__(self, "weights", w.copy())


def _log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def fuse_scores(raw_scores, labels, targets=None,
                reg_strength: float = 1e-2, grad_tol: float = 1e-6,
                max_iter: int = 200_000) -> FusionModel:
    """Fit the fusion by full-batch gradient ascent with backtracking.

    Maximizes mean log-likelihood minus (reg/2) ||W||^2 (bias row exempt)
    until the gradient's Frobenius norm drops below grad_tol.  A fixed
    diagonal preconditioner shrinks the regularized rows' steps by
    1/(1+reg) so the bias row converges at its own scale even when the
    regularizer dominates.
    """
    X = np.asarray(raw_scores, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise InputError("raw scores must be finite")
    labels = list(labels)
    if targets is None:
        targets = tuple(sorted(set(labels)))
    if len(targets) < 2:
        raise InputError("need at least two classes to fuse")
    index = {t: i for i, t in enumerate(targets)}
    y = np.array([index[lab] for lab in labels])
    n, f = X.shape
    t_count = len(targets)
    Xb = np.hstack([X, np.ones((n, 1))])
    onehot = np.eye(t_count)[y]

    def objective_and_grad(W):
        logp = _log_softmax(Xb @ W)
        penalty = 0.5 * reg_strength * np.sum(W[:-1] ** 2)
        obj = logp[np.arange(n), y].mean() - penalty
        grad = Xb.T @ (onehot - np.exp(logp)) / n
        grad[:-1] -= reg_strength * W[:-1]
        return obj, grad

    precond = np.ones((f + 1, 1))
    precond[:-1] = 1.0 / (1.0 + reg_strength)

    W = np.zeros((f + 1, t_count))
    obj, grad = objective_and_grad(W)
    step = 1.0
    for _ in range(max_iter):
        if np.linalg.norm(grad) <= grad_tol:
            break
        direction = precond * grad
        slope = float(np.sum(grad * direction))
        accepted = False
        while step > 1e-18:
            W_new = W + step * direction
            obj_new, grad_new = objective_and_grad(W_new)
            if obj_new >= obj + 0.5 * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break  # no ascent step representable; at the numerical optimum
        W, obj, grad = W_new, obj_new, grad_new
        step *= 2.0
    else:
        warnings.warn("fusion hit the iteration cap before the gradient tolerance",
                      RuntimeWarning, stacklevel=2)
    return FusionModel(weights=W, targets=tuple(targets),
                       reg_strength=float(reg_strength))


def apply_fusion(model: FusionModel, raw_scores) -> np.ndarray:
    """Per-target log-posteriors, the detection scores for evaluation."""
    X = np.asarray(raw_scores, dtype=np.float64)
    Xb = np.hstack([X, np.ones((X.shape[0], 1))])
    return _log_softmax(Xb @ model.weights)


# ---------------------------------------------------------------------------
# Model archive: per-(recognizer, target) records plus the fusion weights
# ---------------------------------------------------------------------------

def save_svm_backend(out_dir, ovr: OvrSvmModel, fusion: FusionModel) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = [f"targets={','.join(ovr.targets)}",
             f"num_recognizers={ovr.num_recognizers}",
             f"penalty={ovr.penalty!r}",
             f"fusion_reg={fusion.reg_strength!r}"]
    order = sorted(ovr.models.items(), key=lambda kv: (kv[0][0], str(kv[0][1])))
    for (l, t), model in order:
        stem = f"svm.r{l}.{t}"
        matio.save_matrix(out_dir / f"{stem}.duals.gsm",
                          model.dual_coefs[None, :])
        matio.save_matrix(out_dir / f"{stem}.support.gsm",
                          model.support_ids[None, :].astype(np.float64))
        lines.append(f"model={l}:{t}:{model.bias!r}:{model.penalty!r}")
    matio.save_matrix(out_dir / "fusion.gsm", fusion.weights)
    (out_dir / "svm_index.txt").write_text("\n".join(lines) + "\n",
                                           encoding="utf-8")


def load_svm_backend(out_dir):
    out_dir = Path(out_dir)
    index = out_dir / "svm_index.txt"
    if not index.exists():
        raise InputError(f"missing SVM index {index}")
    keys, model_lines = {}, []
    for line in index.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition("=")
        if key == "model":
            model_lines.append(value)
        else:
            keys[key] = value
    targets = tuple(keys["targets"].split(","))
    models = {}
    for value in model_lines:
        l, t, bias, penalty = value.split(":")
        stem = f"svm.r{l}.{t}"
        duals = matio.load_matrix(out_dir / f"{stem}.duals.gsm")[0]
        support = matio.load_matrix(out_dir / f"{stem}.support.gsm")[0]
        models[(int(l), t)] = SvmModel(
            dual_coefs=duals, support_ids=support.astype(np.int64),
            bias=float(bias), penalty=float(penalty))
    ovr = OvrSvmModel(models=models, targets=targets,
                      num_recognizers=int(keys["num_recognizers"]),
                      penalty=float(keys["penalty"]))
    fusion = FusionModel(weights=matio.load_matrix(out_dir / "fusion.gsm"),
                         targets=targets,
                         reg_strength=float(keys["fusion_reg"]))
    return ovr, fusion
