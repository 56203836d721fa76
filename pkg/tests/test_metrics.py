import numpy as np
import pytest

from grasslang.errors import InputError
from grasslang.metrics import (
    Trial,
    TrialSet,
    avg_cost,
    det_points,
    eer,
    eer_by_target,
    read_trials,
    stratified_kfold,
    write_det_points,
    write_trials,
)


def make_trials(target_scores, nontarget_scores, label="L"):
    trials = [Trial(f"t{i}", label, s, True) for i, s in enumerate(target_scores)]
    trials += [Trial(f"n{i}", label, s, False) for i, s in enumerate(nontarget_scores)]
    return TrialSet(trials)


class TestEer:
    def test_perfect_separation(self):
        assert eer(make_trials([0.9, 0.8], [0.2, 0.1])) == 0.0

    def test_inverted_labels_worst_case(self):
        assert eer(make_trials([0.1, 0.2], [0.8, 0.9])) == 1.0

    def test_random_scores_near_half(self):
        # Monte-Carlo oracle, fixed seed
        rng = np.random.default_rng(0)
        scores = rng.standard_normal(10_000)
        labels = rng.random(10_000) < 0.3
        trials = TrialSet([Trial(str(i), "L", float(s), bool(l))
                           for i, (s, l) in enumerate(zip(scores, labels))])
        assert abs(eer(trials) - 0.5) < 0.02

    def test_invariant_under_increasing_transform(self):
        rng = np.random.default_rng(1)
        t = rng.standard_normal(50) + 0.5
        n = rng.standard_normal(80)
        base = eer(make_trials(t, n))
        warped = eer(make_trials(np.tanh(t) * 3 + 1, np.tanh(n) * 3 + 1))
        assert abs(base - warped) < 1e-12

    def test_label_score_negation_symmetry(self):
        rng = np.random.default_rng(2)
        t = rng.standard_normal(40) + 0.3
        n = rng.standard_normal(60)
        assert abs(eer(make_trials(t, n)) - eer(make_trials(-n, -t))) < 1e-12

    def test_bounds(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            t = rng.standard_normal(rng.integers(2, 30))
            n = rng.standard_normal(rng.integers(2, 30))
            assert 0.0 <= eer(make_trials(t, n)) <= 1.0

    def test_single_kind_rejected(self):
        with pytest.raises(InputError):
            eer(TrialSet([Trial("a", "L", 0.5, True)]))


class TestDetPoints:
    def test_perfect_curve_touches_origin(self):
        pts = det_points(make_trials([0.9], [0.1]))
        assert (0.0, 0.0) in pts

    def test_endpoints_present(self):
        rng = np.random.default_rng(4)
        pts = det_points(make_trials(rng.random(10), rng.random(10)))
        assert pts[0] == (1.0, 0.0) and pts[-1] == (0.0, 1.0)

    def test_monotone_tradeoff(self):
        rng = np.random.default_rng(5)
        pts = det_points(make_trials(rng.random(30) + 0.2, rng.random(40)))
        fars = [p[0] for p in pts]
        frrs = [p[1] for p in pts]
        assert all(a >= b for a, b in zip(fars, fars[1:]))
        assert all(a <= b for a, b in zip(frrs, frrs[1:]))

    def test_eer_lies_on_interpolated_curve(self):
        rng = np.random.default_rng(6)
        trials = make_trials(rng.random(25) + 0.1, rng.random(35))
        value = eer(trials)
        pts = det_points(trials)
        best = np.inf
        for (fa0, fr0), (fa1, fr1) in zip(pts, pts[1:]):
            denom = (fr1 - fr0) - (fa1 - fa0)
            if denom != 0:
                t = (fa0 - fr0) / denom
                if -1e-12 <= t <= 1 + 1e-12:
                    fa = fa0 + t * (fa1 - fa0)
                    fr = fr0 + t * (fr1 - fr0)
                    if abs(fa - fr) < 1e-9:
                        best = min(best, abs(fa - value))
        assert best < 1e-9


class TestAvgCost:
    def test_perfect_separation_zero(self):
        trials = TrialSet(
            [Trial("a", "A", 0.9, True), Trial("b", "A", 0.1, False),
             Trial("c", "B", 0.8, True), Trial("d", "B", 0.2, False)])
        assert avg_cost(trials) == 0.0

    def test_random_scores_near_half(self):
        rng = np.random.default_rng(7)
        trials = []
        for i in range(10_000):
            label = "AB"[i % 2]
            trials.append(Trial(str(i), label, float(rng.standard_normal()),
                                bool(rng.random() < 0.3)))
        assert abs(avg_cost(TrialSet(trials)) - 0.5) < 0.02

    def test_single_group_is_min_half_sum(self):
        trials = make_trials([0.9, 0.4], [0.6, 0.1])
        # best threshold accepts {0.9, 0.6, 0.4} or {0.9, 0.6}: cost 0.25 both
        assert abs(avg_cost(trials) - 0.25) < 1e-12

    def test_empty_group_kind_rejected(self):
        with pytest.raises(InputError):
            avg_cost(TrialSet([Trial("a", "A", 0.9, True),
                               Trial("b", "B", 0.8, True),
                               Trial("c", "B", 0.2, False)]))


class TestStratifiedKfold:
    def test_balanced_folds(self):
        labels = ["x"] * 10 + ["y"] * 10
        for train, test in stratified_kfold(labels, 5, seed=0):
            test_labels = [labels[i] for i in test]
            assert test_labels.count("x") == 2 and test_labels.count("y") == 2
            assert len(train) == 16

    def test_deterministic(self):
        labels = list("aabbbccccd" * 3)
        a = stratified_kfold(labels, 3, seed=42)
        b = stratified_kfold(labels, 3, seed=42)
        for (tr1, te1), (tr2, te2) in zip(a, b):
            np.testing.assert_array_equal(tr1, tr2)
            np.testing.assert_array_equal(te1, te2)

    def test_partition_is_disjoint_and_exhaustive(self):
        labels = ["u"] * 7 + ["v"] * 9
        splits = stratified_kfold(labels, 4, seed=1)
        seen = []
        for train, test in splits:
            assert set(train).isdisjoint(test)
            seen.extend(test.tolist())
        assert sorted(seen) == list(range(16))

    def test_counts_differ_at_most_one(self):
        labels = ["u"] * 7 + ["v"] * 9
        sizes = {}
        for _, test in stratified_kfold(labels, 4, seed=2):
            for lab in ("u", "v"):
                sizes.setdefault(lab, []).append(
                    sum(1 for i in test if labels[i] == lab))
        for counts in sizes.values():
            assert max(counts) - min(counts) <= 1

    def test_small_class_rejected(self):
        with pytest.raises(InputError):
            stratified_kfold(["a", "a", "b"], 2, seed=0)


class TestTrialIO:
    def test_round_trip(self, tmp_path):
        trials = make_trials([0.912345678901234, 0.5], [0.25], label="lang-a")
        path = tmp_path / "scores.trials"
        write_trials(path, trials)
        loaded = read_trials(path)
        assert len(loaded.trials) == 3
        for a, b in zip(loaded.trials, trials.trials):
            assert (a.utterance_id, a.target_label, a.score, a.is_target) == \
                   (b.utterance_id, b.target_label, b.score, b.is_target)

    def test_malformed_line_rejected(self, tmp_path):
        path = tmp_path / "bad.trials"
        path.write_text("utt\tlang\t0.5\tmaybe\n")
        with pytest.raises(InputError):
            read_trials(path)

    def test_det_file_format(self, tmp_path):
        path = tmp_path / "det.tsv"
        write_det_points(path, [(1.0, 0.0), (0.25, 0.5)])
        lines = path.read_text().splitlines()
        assert lines[0] == "1.0\t0.0" and lines[1] == "0.25\t0.5"

    def test_eer_by_target_exposed(self):
        trials = TrialSet(
            [Trial("a", "A", 0.9, True), Trial("b", "A", 0.1, False),
             Trial("c", "B", 0.2, True), Trial("d", "B", 0.8, False)])
        per = eer_by_target(trials)
        assert per["A"] == 0.0 and per["B"] == 1.0
