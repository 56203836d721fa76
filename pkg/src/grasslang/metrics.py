"""Detection metrics and the cross-validation protocol.

Trials carry one detection score per (utterance, hypothesized target); a
trial is a target trial when the hypothesis matches the true language.
Acceptance is thresholded as score >= theta, so false-acceptance falls and
false-rejection rises as theta sweeps upward.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InputError


@dataclass(frozen=True)
class Trial:
    utterance_id: str
    target_label: str
    score: float
    is_target: bool

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise InputError(f"non-finite score for {self.utterance_id}")


class TrialSet:
    """Pooled collection of trials; per-target views are derived on demand."""

    def __init__(self, trials):
        self.trials = list(trials)
        if not self.trials:
            raise InputError("empty trial set")

    def scores_and_labels(self):
        scores = np.array([t.score for t in self.trials])
        labels = np.array([t.is_target for t in self.trials])
        return scores, labels

    def by_target(self) -> dict:
        groups = {}
        for t in self.trials:
            groups.setdefault(t.target_label, []).append(t)
        return {name: TrialSet(ts) for name, ts in groups.items()}


def _operating_points(scores, labels):
    """(FAR, FRR) at every distinct threshold, swept from -inf to +inf."""
    targets = np.sort(scores[labels])
    nontargets = np.sort(scores[~labels])
    if targets.size == 0 or nontargets.size == 0:
        raise InputError("need both target and non-target trials")
    thresholds = np.unique(scores)
    # accept iff score >= theta
    far = 1.0 - np.searchsorted(nontargets, thresholds, side="left") / nontargets.size
    frr = np.searchsorted(targets, thresholds, side="left") / targets.size
    far = np.concatenate([[1.0], far, [0.0]])
    frr = np.concatenate([[0.0], frr, [1.0]])
    return far, frr


def det_points(trials: TrialSet):
    """DET operating points as (FAR, FRR) pairs, endpoints included."""
    far, frr = _operating_points(*trials.scores_and_labels())
    return list(zip(far.tolist(), frr.tolist()))


def eer(trials: TrialSet) -> float:
    """Equal error rate, linearly interpolated at the FAR = FRR crossing."""
    far, frr = _operating_points(*trials.scores_and_labels())
    diff = far - frr  # starts at 1, ends at -1, non-increasing
    idx = int(np.argmax(diff <= 0))
    if diff[idx] == 0:
        return float(far[idx])
    fa0, fr0 = far[idx - 1], frr[idx - 1]
    fa1, fr1 = far[idx], frr[idx]
    t = (fa0 - fr0) / ((fr1 - fr0) - (fa1 - fa0))
    return float(fa0 + t * (fa1 - fa0))


def eer_by_target(trials: TrialSet) -> dict:
    return {name: eer(group) for name, group in trials.by_target().items()}


def avg_cost(trials: TrialSet) -> float:
    """Average two-term detection cost over targets at the best global threshold.

    C(theta) = mean over targets of 0.5 * P_miss(t) + 0.5 * P_FA(t); the
    reported value is min over theta.  This is the simplified equal-prior
    cost; reports should label it "Cavg (simplified)".
    """
    groups = trials.by_target()
    scores = np.unique(np.array([t.score for t in trials.trials]))
    thresholds = np.concatenate([scores, [np.inf]])
    total = np.zeros(thresholds.size)
    for group in groups.values():
        s, labels = group.scores_and_labels()
        targets = np.sort(s[labels])
        nontargets = np.sort(s[~labels])
        if targets.size == 0 or nontargets.size == 0:
            raise InputError("every target group needs both trial kinds")
        p_miss = np.searchsorted(targets, thresholds, side="left") / targets.size
        p_fa = 1.0 - np.searchsorted(nontargets, thresholds, side="left") / nontargets.size
        total += 0.5 * p_miss + 0.5 * p_fa
    return float(total.min() / len(groups))


def stratified_kfold(labels, k: int, seed):
    """k disjoint, exhaustive (train, test) index splits, balanced per class.

    Indices of each class are shuffled with the seed and dealt round-robin,
    so per-class test counts across folds differ by at most one.
    """
    labels = list(labels)
    if k < 2:
        raise InputError(f"need k >= 2 folds, got {k}")
    rng = np.random.default_rng(seed)
    folds = [[] for _ in range(k)]
    by_class = {}
    for idx, label in enumerate(labels):
        by_class.setdefault(label, []).append(idx)
    for label in sorted(by_class, key=str):
        members = np.array(by_class[label])
        if members.size < k:
            raise InputError(f"class {label!r} has {members.size} < k={k} members")
        members = members[rng.permutation(members.size)]
        for pos, idx in enumerate(members):
            folds[pos % k].append(int(idx))
    splits = []
    everything = set(range(len(labels)))
    for fold in folds:
        test = sorted(fold)
        train = sorted(everything.difference(test))
        splits.append((np.array(train), np.array(test)))
    return splits


def write_trials(path, trials: TrialSet) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in trials.trials:
            kind = "target" if t.is_target else "nontarget"
            fh.write(f"{t.utterance_id}\t{t.target_label}\t{t.score!r}\t{kind}\n")


def read_trials(path) -> TrialSet:
    trials = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4 or parts[3] not in ("target", "nontarget"):
                raise InputError(f"{path}: malformed trial line {line!r}")
            trials.append(Trial(utterance_id=parts[0], target_label=parts[1],
                                score=float(parts[2]),
                                is_target=parts[3] == "target"))
    return TrialSet(trials)


def write_det_points(path, points) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for far, frr in points:
            fh.write(f"{far!r}\t{frr!r}\n")
