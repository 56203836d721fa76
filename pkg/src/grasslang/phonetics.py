"""Phone-posterior sequences: pooling, context stacking, and file I/O.

An utterance is a K x M row-stochastic matrix whose k-th row is the
posterior over M phone units for the k-th decoded segment.  Context
stacking concatenates each row with its n-1 predecessors (zero padded at
the start) into D = n*M dimensional super-vectors, one per column of the
stacked matrix.
"""

from dataclasses import dataclass

import numpy as np

from . import matio
from .errors import InputError, StochasticityError

# Rows must sum to 1 within this much to count as stochastic.
ROW_SUM_TOL = 1e-6
# Rows closer to 1 than this are left untouched on load, so a save/load
# round trip of pipeline output is bit-identical.
ROW_SUM_EXACT = 1e-12
# Frame-level posteriors may be sloppier than segment-level ones.
FRAME_SUM_TOL = 1e-4


@dataclass(frozen=True)
class PhoneticSequence:
    """Per-segment unit posteriors for one utterance, rows stochastic."""

    posteriors: np.ndarray
    phoneset_id: str = ""

    def __post_init__(self):
        post = np.asarray(self.posteriors, dtype=np.float64)
        if post.ndim != 2 or post.shape[0] < 1:
            raise InputError(f"posteriors must be K x M with K >= 1, got {post.shape}")
        if not np.all(np.isfinite(post)):
            raise InputError("posteriors have non-finite entries")
        if np.any(post < 0):
            raise InputError("posteriors have negative entries")
        sums = post.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > ROW_SUM_TOL):
            worst = float(np.max(np.abs(sums - 1.0)))
            raise StochasticityError(f"rows deviate from sum 1 by up to {worst:.3e}")
        post = post.copy()
        post.flags.writeable = False
        object.__setattr__(self, "posteriors", post)

    @property
    def num_phones(self) -> int:
        return self.posteriors.shape[0]

    @property
    def num_units(self) -> int:
        return self.posteriors.shape[1]


@dataclass(frozen=True)
class StackedMatrix:
    """Context-stacked super-vectors, one column per phone vector."""

    data: np.ndarray
    context_order: int
    num_units: int

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise InputError(f"stacked data must be a matrix, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise InputError("stacked data has non-finite entries")
        if self.context_order < 1:
            raise InputError(f"context order must be >= 1, got {self.context_order}")
        if data.shape[0] != self.context_order * self.num_units:
            raise InputError(
                f"stacked dim {data.shape[0]} != n*M ="
                f" {self.context_order * self.num_units}")
        data = data.copy()
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def stacked_dim(self) -> int:
        return self.data.shape[0]

    @property
    def num_phones(self) -> int:
        return self.data.shape[1]


def segment_posteriors(frame_posteriors, state_to_unit, segmentation,
                       phoneset_id: str = "") -> PhoneticSequence:
    """Collapse frame/state posteriors to one unit posterior per segment.

    Per frame, state posteriors are summed into their unit; per segment
    [start, end) the unit posteriors are averaged over frames and
    renormalized to sum 1.  Segments must be ordered, non-overlapping and
    non-empty within [0, T).
    """
    frames = np.asarray(frame_posteriors, dtype=np.float64)
    if frames.ndim != 2:
        raise InputError(f"frame posteriors must be T x S, got {frames.shape}")
    if not np.all(np.isfinite(frames)) or np.any(frames < 0):
        raise InputError("frame posteriors must be finite and non-negative")
    sums = frames.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > FRAME_SUM_TOL):
        worst = float(np.max(np.abs(sums - 1.0)))
        raise StochasticityError(f"frame rows deviate from sum 1 by {worst:.3e}")

    num_frames, num_states = frames.shape
    unit_of = np.asarray([state_to_unit[s] for s in range(num_states)], dtype=np.int64)
    if np.any(unit_of < 0):
        raise InputError("state-to-unit map has negative unit indices")
    num_units = int(unit_of.max()) + 1
    indicator = np.zeros((num_states, num_units))
    indicator[np.arange(num_states), unit_of] = 1.0

    if not segmentation:
        raise InputError("segmentation is empty")
    prev_end = 0
    rows = []
    for start, end in segmentation:
        if start < prev_end or end <= start or end > num_frames:
            raise InputError(
                f"segment ({start}, {end}) not ordered within 0..{num_frames}")
        prev_end = end
        pooled = (frames[start:end] @ indicator).mean(axis=0)
        rows.append(pooled / pooled.sum())
    return PhoneticSequence(posteriors=np.asarray(rows), phoneset_id=phoneset_id)


def stack_context(seq: PhoneticSequence, n: int) -> StackedMatrix:
    """Stack each phone vector with its n-1 predecessors, zero padded.

    Column k is [y_{k-n+1}; ...; y_{k-1}; y_k] with zero vectors standing in
    for indices before the first phone; the oldest block sits on top.
    """
    if n < 1:
        raise InputError(f"context order must be >= 1, got {n}")
    Y = seq.posteriors
    K, M = Y.shape
    data = np.zeros((n * M, K))
    for offset in range(n):
        # offset 0 is the oldest block (lag n-1), offset n-1 the current vector
        lag = n - 1 - offset
        block = data[offset * M:(offset + 1) * M]
        block[:, lag:] = Y[:K - lag].T
    return StackedMatrix(data=data, context_order=n, num_units=M)


def save_posteriorgram(seq: PhoneticSequence, path) -> None:
    """Write the matrix file plus its key=value sidecar (path + '.meta')."""
    matio.save_matrix(path, seq.posteriors)
    with open(f"{path}.meta", "w", encoding="utf-8") as fh:
        fh.write(f"phoneset_id={seq.phoneset_id}\n")
        fh.write(f"num_units={seq.num_units}\n")


def load_posteriorgram(path) -> PhoneticSequence:
    """Read a posteriorgram written by save_posteriorgram.

    Rows within ROW_SUM_TOL of stochastic are accepted; of those, rows off
    by more than ROW_SUM_EXACT are renormalized, anything worse is rejected.
    """
    post = matio.load_matrix(path)
    meta = _read_meta(f"{path}.meta")
    if "phoneset_id" not in meta or "num_units" not in meta:
        raise InputError(f"{path}.meta: missing phoneset_id or num_units")
    if int(meta["num_units"]) != post.shape[1]:
        raise InputError(
            f"{path}: sidecar num_units {meta['num_units']} != matrix cols"
            f" {post.shape[1]}")
    if np.any(post < 0):
        raise InputError(f"{path}: negative posterior entries")
    sums = post.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > ROW_SUM_TOL):
        worst = float(np.max(np.abs(sums - 1.0)))
        raise StochasticityError(f"{path}: rows deviate from sum 1 by {worst:.3e}")
    fix = np.abs(sums - 1.0) > ROW_SUM_EXACT
    if np.any(fix):
        post[fix] /= sums[fix, None]
    return PhoneticSequence(posteriors=post, phoneset_id=meta["phoneset_id"])


def _read_meta(path) -> dict:
    meta = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if "=" not in line:
                raise InputError(f"{path}: malformed sidecar line {line!r}")
            key, value = line.split("=", 1)
            meta[key] = value
    return meta


def write_manifest(path, records) -> None:
    """records: iterable of (utterance_id, language_label, [path_1..path_L])."""
    with open(path, "w", encoding="utf-8") as fh:
        for utt_id, label, paths in records:
            fh.write("\t".join([utt_id, label, *map(str, paths)]) + "\n")


def read_manifest(path):
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) < 3:
                raise InputError(f"{path}: manifest line needs id, label, path(s)")
            records.append((parts[0], parts[1], parts[2:]))
    return records
