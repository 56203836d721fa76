"""Subspace network: kernel scores against learnable orthonormal maps.

Each of the L inputs is a subspace from one recognizer.  Input l is scored
against m weight maps W_lm (D_l x d'_l) by k_lm = ||W_lm^T S_l||_F^2, which
is invariant to the basis chosen for S_l, so the whole network is a
function of the subspaces themselves.  The L*m scores feed a linear softmax
head (optionally with tanh hidden layers).  Training minimizes cross
entropy plus an orthogonality penalty lambda * sum ||W^T W - I||_F^2 with
Adam and a halve-every-10-epochs learning-rate schedule; weight maps start
Haar-orthonormal, head weights Glorot-normal.
"""

import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import matio
from .errors import DimensionError, InputError
from .manifold import random_orthonormal

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class SnnTrainConfig:
    """Optimizer, schedule and architecture settings.

    Defaults follow the best validated operating point: 170 maps per
    input, reference ratio 0.8, orthogonality factor 1e-9, learning rate
    1e-3 halved every 10 epochs, batches of 24, 200 epochs.
    """

    learning_rate: float = 1e-3
    lr_halving_period: int = 10
    batch_size: int = 24
    max_epochs: int = 200
    num_maps: int = 170
    beta: float = 0.8
    lambda_orth: float = 1e-9
    hidden_sizes: tuple = ()
    adam_beta1: float = ADAM_BETA1
    adam_beta2: float = ADAM_BETA2
    adam_eps: float = ADAM_EPS
    seed: int = 0

    def __post_init__(self):
        if min(self.learning_rate, self.lr_halving_period, self.batch_size,
               self.max_epochs, self.num_maps) <= 0:
            raise InputError("rates, periods, sizes and counts must be positive")
        if self.lambda_orth < 0:
            raise InputError(f"lambda_orth must be >= 0, got {self.lambda_orth}")
        if not 0.5 <= self.beta <= 1.5:
            raise InputError(f"beta must lie in [0.5, 1.5], got {self.beta}")
        object.__setattr__(self, "hidden_sizes", tuple(self.hidden_sizes))

    def kernel_rank(self, sample_rank: int) -> int:
        """Reference-subspace rank rule d' = max(floor(beta * d), 2)."""
        return max(math.floor(self.beta * sample_rank), 2)

    def lr_at(self, epoch: int) -> float:
        """Drop schedule: lr * 0.5^floor(epoch / period), epoch counted from 0."""
        return self.learning_rate * 0.5 ** (epoch // self.lr_halving_period)


@dataclass
class SnnModel:
    """Weight-map banks per input plus the softmax head.

    weight_maps[l] has shape (m, D_l, d'_l); head_layers is a list of
    (W, b) pairs applied with tanh between layers and softmax at the end.
    Maps are orthonormal at initialization only; training relaxes them
    under the penalty.
    """

    weight_maps: list
    head_layers: list
    lambda_orth: float
    targets: tuple
    beta: float = 1.0
    seed: int = 0
    epochs_trained: int = 0
    history: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if not self.weight_maps or not self.head_layers:
            raise InputError("model needs weight maps and a head")
        feat = sum(bank.shape[0] for bank in self.weight_maps)
        width = self.head_layers[0][0].shape[0]
        if width != feat:
            raise InputError(f"head expects {width} features, kernel layer"
                             f" yields {feat}")
        if self.head_layers[-1][0].shape[1] != len(self.targets):
            raise InputError("head output width must match target count")
        for bank in self.weight_maps:
            if bank.ndim != 3:
                raise InputError("each weight-map bank must be (m, D, d')")
            if not np.all(np.isfinite(bank)):
                raise InputError("weight maps must be finite")

    @property
    def num_inputs(self) -> int:
        return len(self.weight_maps)

    @property
    def num_maps(self) -> int:
        return self.weight_maps[0].shape[0]

    def parameters(self) -> list:
        """All trainable tensors in a fixed order."""
        params = list(self.weight_maps)
        for W, b in self.head_layers:
            params.extend((W, b))
        return params


def init_snn(input_dims, targets, cfg: SnnTrainConfig) -> SnnModel:
    """Haar-orthonormal maps, Glorot-normal head weights, zero biases."""
    rng = np.random.default_rng(cfg.seed)
    targets = tuple(targets)
    if len(targets) < 2:
        raise InputError("need at least two targets")
    weight_maps = []
    for D_l, d_l in input_dims:
        d_ref = cfg.kernel_rank(d_l)
        if d_ref > D_l:
            raise InputError(f"kernel rank {d_ref} exceeds ambient dim {D_l}")
        bank = np.empty((cfg.num_maps, D_l, d_ref))
        for j in range(cfg.num_maps):
            bank[j] = random_orthonormal(D_l, d_ref, rng).basis
        weight_maps.append(bank)
    head_layers = []
    widths = [len(weight_maps) * cfg.num_maps, *cfg.hidden_sizes, len(targets)]
    for fan_in, fan_out in zip(widths, widths[1:]):
        std = math.sqrt(2.0 / (fan_in + fan_out))
        head_layers.append((rng.standard_normal((fan_in, fan_out)) * std,
                            np.zeros(fan_out)))
    return SnnModel(weight_maps=weight_maps, head_layers=head_layers,
                    lambda_orth=cfg.lambda_orth, targets=targets,
                    beta=cfg.beta, seed=cfg.seed)


def _check_sample(sample, model: SnnModel):
    if len(sample) != model.num_inputs:
        raise DimensionError(f"expected {model.num_inputs} input subspaces,"
                             f" got {len(sample)}")
    for l, sub in enumerate(sample):
        if sub.ambient_dim != model.weight_maps[l].shape[1]:
            raise DimensionError(
                f"input {l}: ambient dim {sub.ambient_dim} does not match"
                f" weight maps ({model.weight_maps[l].shape[1]})")


def kernel_layer_forward(sample, model: SnnModel) -> np.ndarray:
    """Scores ||W_lm^T S_l||_F^2 for all maps, stacked input-major."""
    _check_sample(sample, model)
    scores = []
    for bank, sub in zip(model.weight_maps, sample):
        cross = np.einsum("mDe,Dd->med", bank, sub.basis)
        scores.append(np.einsum("med,med->m", cross, cross))
    return np.concatenate(scores)


def _head_forward(features: np.ndarray, model: SnnModel):
    """Activations after each head layer; tanh between, none at the end."""
    acts = [features]
    z = features
    for i, (W, b) in enumerate(model.head_layers):
        z = z @ W + b
        if i < len(model.head_layers) - 1:
            z = np.tanh(z)
        acts.append(z)
    return acts


def forward(sample, model: SnnModel):
    """Logits and softmax posteriors over the targets."""
    logits = _head_forward(kernel_layer_forward(sample, model), model)[-1]
    return logits, _softmax(logits)


def _softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _log_softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def detection_scores(model: SnnModel, sample) -> np.ndarray:
    """Per-target log-posterior, monotone in the logits."""
    logits, _ = forward(sample, model)
    return _log_softmax(logits)


def orthogonality_penalty(model: SnnModel) -> float:
    """Sum over maps of ||W^T W - I||_F^2 (without the lambda factor)."""
    total = 0.0
    for bank in model.weight_maps:
        eye = np.eye(bank.shape[2])
        gram = np.einsum("mDe,mDf->mef", bank, bank)
        total += float(np.sum((gram - eye) ** 2))
    return total


def _label_indices(batch, model: SnnModel):
    index = {t: i for i, t in enumerate(model.targets)}
    try:
        return [index[label] for _, label in batch]
    except KeyError as exc:
        raise InputError(f"label {exc} not among model targets") from exc


def loss(batch, model: SnnModel) -> float:
    """Mean cross entropy over the batch plus the orthogonality penalty."""
    batch = list(batch)
    if not batch:
        raise InputError("empty batch")
    idx = _label_indices(batch, model)
    total = 0.0
    for (sample, _), y in zip(batch, idx):
        logits, _ = forward(sample, model)
        total -= _log_softmax(logits)[y]
    return total / len(batch) + model.lambda_orth * orthogonality_penalty(model)


@dataclass
class SnnGradients:
    """Gradients aligned with SnnModel.parameters() order."""

    weight_maps: list
    head_layers: list

    def parameters(self) -> list:
        params = list(self.weight_maps)
        for dW, db in self.head_layers:
            params.extend((dW, db))
        return params


def backward(batch, model: SnnModel) -> SnnGradients:
    """Analytic gradients of loss() for every parameter tensor.

    The kernel layer's map gradient is 2 S S^T W per unit of upstream
    sensitivity; the penalty contributes 4 lambda W (W^T W - I), the exact
    derivative of the squared-Frobenius penalty.
    """
    batch = list(batch)
    if not batch:
        raise InputError("empty batch")
    idx = _label_indices(batch, model)
    B = len(batch)

    map_grads = [np.zeros_like(bank) for bank in model.weight_maps]
    head_grads = [(np.zeros_like(W), np.zeros_like(b))
                  for W, b in model.head_layers]

    for (sample, _), y in zip(batch, idx):
        _check_sample(sample, model)
        features = kernel_layer_forward(sample, model)
        acts = _head_forward(features, model)
        probs = _softmax(acts[-1])
        delta = probs.copy()
        delta[y] -= 1.0
        delta /= B
        # back through the head
        for i in range(len(model.head_layers) - 1, -1, -1):
            W, _ = model.head_layers[i]
            dW, db = head_grads[i]
            dW += np.outer(acts[i], delta)
            db += delta
            delta = delta @ W.T
            if i > 0:
                delta = delta * (1.0 - acts[i] ** 2)  # tanh'
        # back through the kernel layer
        offset = 0
        for l, (bank, sub) in enumerate(zip(model.weight_maps, sample)):
            m = bank.shape[0]
            dk = delta[offset:offset + m]
            offset += m
            proj = np.einsum("Dd,med->mDe",
                             sub.basis, np.einsum("mDe,Dd->med", bank, sub.basis))
            map_grads[l] += 2.0 * dk[:, None, None] * proj
    if model.lambda_orth:
        for l, bank in enumerate(model.weight_maps):
            eye = np.eye(bank.shape[2])
            gram = np.einsum("mDe,mDf->mef", bank, bank)
            map_grads[l] += 4.0 * model.lambda_orth * np.einsum(
                "mDe,mef->mDf", bank, gram - eye)
    return SnnGradients(weight_maps=map_grads, head_layers=head_grads)


def train(dataset, cfg: SnnTrainConfig, log_path=None) -> SnnModel:
    """Mini-batch Adam with the drop schedule; returns the final-epoch model.

    The dataset is a list of (sample, label) pairs where each sample is a
    list of subspaces, one per recognizer.  Everything (init, shuffles,
    batching) derives from cfg.seed, so identical seeds give bit-identical
    models.  No early stopping: the schedule makes the final epoch usable.
    """
    dataset = list(dataset)
    if not dataset:
        raise InputError("empty dataset")
    targets = tuple(sorted({label for _, label in dataset}))
    if len(targets) < 2:
        raise InputError("need at least two classes")
    input_dims = [(sub.ambient_dim, sub.rank) for sub in dataset[0][0]]
    model = init_snn(input_dims, targets, cfg)
    rng = np.random.default_rng(derive_train_seed(cfg.seed))

    params = model.parameters()
    adam_m = [np.zeros_like(p) for p in params]
    adam_v = [np.zeros_like(p) for p in params]
    step = 0
    log_lines = []
    for epoch in range(cfg.max_epochs):
        started = time.perf_counter()
        lr = cfg.lr_at(epoch)
        order = rng.permutation(len(dataset))
        batch_losses = []
        for lo in range(0, len(dataset), cfg.batch_size):
            batch = [dataset[i] for i in order[lo:lo + cfg.batch_size]]
            batch_losses.append(loss(batch, model))
            grads = backward(batch, model).parameters()
            step += 1
            for p, g, m_t, v_t in zip(params, grads, adam_m, adam_v):
                m_t += (1 - cfg.adam_beta1) * (g - m_t)
                v_t += (1 - cfg.adam_beta2) * (g * g - v_t)
                m_hat = m_t / (1 - cfg.adam_beta1 ** step)
                v_hat = v_t / (1 - cfg.adam_beta2 ** step)
                p -= lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
        entry = {
            "epoch": epoch,
            "lr": lr,
            "mean_loss": float(np.mean(batch_losses)),
            "penalty": model.lambda_orth * orthogonality_penalty(model),
            "seconds": time.perf_counter() - started,
        }
        model.history.append(entry)
        log_lines.append("{epoch}\t{lr!r}\t{mean_loss!r}\t{penalty!r}"
                         "\t{seconds:.3f}".format(**entry))
    model.epochs_trained = cfg.max_epochs
    if log_path is not None:
        with open(log_path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(log_lines) + "\n")
    return model


def derive_train_seed(seed: int) -> int:
    # keep the shuffle stream distinct from the init stream
    return (int(seed) * 0x9E3779B97F4A7C15 + 1) % (2 ** 63)


# ---------------------------------------------------------------------------
# Model archive: weight tensors as matrix files plus a UTF-8 index
# ---------------------------------------------------------------------------

def save_snn(model: SnnModel, out_dir) -> None:
    """Each map bank is stored flattened to (m*D, d'); the index records
    shapes, the penalty factor, targets, seed and epoch count."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = [
        f"lambda_orth={model.lambda_orth!r}",
        f"beta={model.beta!r}",
        f"seed={model.seed}",
        f"epochs_trained={model.epochs_trained}",
        f"targets={','.join(model.targets)}",
        f"num_inputs={model.num_inputs}",
        f"num_head_layers={len(model.head_layers)}",
    ]
    for l, bank in enumerate(model.weight_maps):
        m, D, d_ref = bank.shape
        lines.append(f"bank{l}={m}:{D}:{d_ref}")
        matio.save_matrix(out_dir / f"maps{l}.gsm", bank.reshape(m * D, d_ref))
    for i, (W, b) in enumerate(model.head_layers):
        matio.save_matrix(out_dir / f"head{i}_w.gsm", W)
        matio.save_matrix(out_dir / f"head{i}_b.gsm", b[None, :])
    (out_dir / "index.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_snn(out_dir) -> SnnModel:
    out_dir = Path(out_dir)
    keys = {}
    for line in (out_dir / "index.txt").read_text(encoding="utf-8").splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            keys[key] = value
    weight_maps = []
    for l in range(int(keys["num_inputs"])):
        m, D, d_ref = (int(v) for v in keys[f"bank{l}"].split(":"))
        flat = matio.load_matrix(out_dir / f"maps{l}.gsm")
        weight_maps.append(flat.reshape(m, D, d_ref))
    head_layers = []
    for i in range(int(keys["num_head_layers"])):
        W = matio.load_matrix(out_dir / f"head{i}_w.gsm")
        b = matio.load_matrix(out_dir / f"head{i}_b.gsm")[0]
        head_layers.append((W, b))
    return SnnModel(weight_maps=weight_maps, head_layers=head_layers,
                    lambda_orth=float(keys["lambda_orth"]),
                    targets=tuple(keys["targets"].split(",")),
                    beta=float(keys["beta"]), seed=int(keys["seed"]),
                    epochs_trained=int(keys["epochs_trained"]))


# ---------------------------------------------------------------------------
# Finite-difference oracle, exposed for the gradient-check command
# ---------------------------------------------------------------------------

def finite_difference_check(batch, model: SnnModel, step: float = 1e-5) -> float:
    """Max relative error between backward() and central differences.

    The error per tensor is max |analytic - numeric| scaled by the largest
    gradient magnitude in that tensor (floored to avoid 0/0).
    """
    analytic = backward(batch, model).parameters()
    worst = 0.0
    for p, g in zip(model.parameters(), analytic):
        numeric = np.zeros_like(p)
        flat_p = p.ravel()
        flat_n = numeric.ravel()
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + step
            hi = loss(batch, model)
            flat_p[i] = orig - step
            lo = loss(batch, model)
            flat_p[i] = orig
            flat_n[i] = (hi - lo) / (2 * step)
        scale = max(np.abs(g).max(initial=0.0), np.abs(numeric).max(initial=0.0),
                    1e-10)
        worst = max(worst, float(np.abs(g - numeric).max() / scale))
    return worst
