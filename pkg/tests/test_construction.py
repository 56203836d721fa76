import numpy as np
import pytest

from grasslang.construction import (
    OdlConfig,
    SubspaceSpec,
    construct,
    construct_odl,
    construct_olr,
    dlm_observability,
    dlm_states,
    fit_dlm,
    load_subspace,
    odl_objective,
    save_subspace,
    threshold_operator,
)
from grasslang.errors import InputError, RankError, ShortUtteranceError
from grasslang.manifold import (
    orthonormality_defect,
    principal_angles,
    random_orthonormal,
)
from grasslang.phonetics import PhoneticSequence


def random_olr_input(rng, D=6, K=30):
    return rng.standard_normal((D, K))


class TestConstructOlr:
    def test_dominant_axis(self):
        Z = np.zeros((2, 5))
        Z[0, 0] = 2.0
        Z[1, 1] = 1.0
        s = construct_olr(Z, 1)
        np.testing.assert_allclose(s.basis, [[1.0], [0.0]], atol=1e-12)

    def test_rank_one_input(self):
        rng = np.random.default_rng(0)
        u = rng.standard_normal(4)
        u /= np.linalg.norm(u)
        Z = np.outer(u, rng.standard_normal(9))
        s = construct_olr(Z, 1)
        resid = np.linalg.norm(Z - s.basis @ (s.basis.T @ Z), "fro")
        assert resid < 1e-10
        assert abs(abs(u @ s.basis[:, 0]) - 1.0) < 1e-12

    def test_residual_matches_discarded_spectrum(self):
        # oracle: eigenvalues of Z Z^T from a dense symmetric solver
        rng = np.random.default_rng(1)
        Z = random_olr_input(rng)
        s = construct_olr(Z, 3)
        resid = np.linalg.norm(Z - s.basis @ (s.basis.T @ Z), "fro") ** 2
        eig = np.sort(np.linalg.eigvalsh(Z @ Z.T))[::-1]
        np.testing.assert_allclose(resid, eig[3:].sum(), rtol=1e-10)

    def test_no_perturbation_beats_olr(self):
        # probe optimality with 100 seeded orthonormal perturbations
        rng = np.random.default_rng(2)
        Z = random_olr_input(rng)
        s = construct_olr(Z, 3)
        best = np.linalg.norm(Z - s.basis @ (s.basis.T @ Z), "fro") ** 2
        for _ in range(100):
            G = rng.standard_normal(s.basis.shape) * rng.uniform(1e-3, 1.0)
            Q, _ = np.linalg.qr(s.basis + G)
            resid = np.linalg.norm(Z - Q @ (Q.T @ Z), "fro") ** 2
            assert resid >= best - 1e-9

    def test_permutation_invariance_of_span(self):
        rng = np.random.default_rng(3)
        Z = random_olr_input(rng)
        perm = rng.permutation(Z.shape[1])
        a = construct_olr(Z, 3)
        b = construct_olr(Z[:, perm], 3)
        assert principal_angles(a, b).cosines.min() >= 1 - 1e-8

    def test_short_utterance_rejected(self):
        with pytest.raises(ShortUtteranceError):
            construct_olr(np.ones((6, 5)), 2)

    def test_rank_out_of_range(self):
        with pytest.raises(RankError):
            construct_olr(np.ones((3, 8)), 4)


class TestThresholdOperator:
    def test_strict_inequality_rule(self):
        out = threshold_operator(np.array([0.3, -0.7, 0.5]), 0.5)
        np.testing.assert_array_equal(out, [0.0, -0.7, 0.0])

    def test_zero_threshold_keeps_nonzeros(self):
        X = np.array([[0.0, -2.0], [1e-300, 3.0]])
        np.testing.assert_array_equal(threshold_operator(X, 0.0), X)

    def test_sparsity_non_increasing_in_lambda(self):
        rng = np.random.default_rng(4)
        X = rng.standard_normal((5, 7))
        lams = np.sort(np.abs(X).ravel())
        counts = [np.count_nonzero(threshold_operator(X, lam)) for lam in lams]
        assert all(a >= b for a, b in zip(counts, counts[1:]))

    def test_negative_lambda_rejected(self):
        with pytest.raises(InputError):
            threshold_operator(np.ones(2), -0.1)


class TestOdlObjective:
    def test_zero_when_span_covers(self):
        rng = np.random.default_rng(5)
        S = random_orthonormal(6, 3, rng).basis
        W = rng.standard_normal((3, 10))
        Z = S @ W
        assert odl_objective(Z, S, W, 0.0) < 1e-20

    def test_zero_loadings_give_energy(self):
        rng = np.random.default_rng(6)
        Z = rng.standard_normal((4, 9))
        S = np.eye(4)[:, :2]
        W = np.zeros((2, 9))
        expected = np.linalg.norm(Z, "fro") ** 2
        assert abs(odl_objective(Z, S, W, 0.5) - expected) < 1e-10

    def test_shape_mismatch(self):
        with pytest.raises(InputError):
            odl_objective(np.ones((4, 9)), np.eye(4)[:, :2], np.zeros((3, 9)), 0.0)


class TestConstructOdl:
    def test_objective_non_increasing(self):
        rng = np.random.default_rng(7)
        Z = random_olr_input(rng, D=8, K=40)
        for lam in (0.0, 1e-4, 0.3):
            res = construct_odl(Z, 3, OdlConfig(lambda_odl=lam, iterations=50), seed=1)
            obj = np.array(res.objectives)
            assert np.all(np.diff(obj) <= 1e-9 * max(1.0, obj[0]))

    def test_lambda_zero_matches_olr_span(self):
        # strong spectral gap, so the fixed-point iteration converges fast
        rng = np.random.default_rng(8)
        low = rng.standard_normal((8, 3)) @ rng.standard_normal((3, 40))
        Z = low + 1e-8 * rng.standard_normal((8, 40))
        olr = construct_olr(Z, 3)
        res = construct_odl(Z, 3, OdlConfig(lambda_odl=0.0, iterations=50), seed=2)
        assert not res.early_stopped
        assert principal_angles(olr, res.subspace).cosines.min() >= 1 - 1e-6

    def test_paper_operating_point_runs(self):
        rng = np.random.default_rng(9)
        Z = random_olr_input(rng, D=10, K=60)
        res = construct_odl(Z, 4, OdlConfig(), seed=3)  # lambda 1e-4, J 50
        assert orthonormality_defect(res.subspace.basis) <= 1e-8
        assert len(res.objectives) == 51

    def test_degenerate_threshold_early_stops(self):
        rng = np.random.default_rng(10)
        Z = rng.uniform(0.0, 0.1, size=(4, 12))
        res = construct_odl(Z, 2, OdlConfig(lambda_odl=1e3, iterations=20), seed=4)
        assert res.early_stopped
        # the initial basis (identity columns) is returned untouched
        assert sorted(np.abs(res.subspace.basis).sum(axis=0).tolist()) == [1.0, 1.0]

    def test_seed_determinism(self):
        rng = np.random.default_rng(11)
        Z = random_olr_input(rng)
        a = construct_odl(Z, 3, OdlConfig(), seed=5)
        b = construct_odl(Z, 3, OdlConfig(), seed=5)
        assert a.subspace.basis.tobytes() == b.subspace.basis.tobytes()

    def test_short_utterance_rejected(self):
        with pytest.raises(ShortUtteranceError):
            construct_odl(np.ones((6, 5)), 2, OdlConfig(), seed=0)


def simulate_dlm(rng, M=8, d=3, K=40):
    """Noise-free trajectory of an orthonormal dynamic linear model."""
    g = rng.standard_normal((d, d))
    skew = g - g.T
    A = np.linalg.solve(np.eye(d) + skew, np.eye(d) - skew)  # Cayley rotation
    C, _ = np.linalg.qr(rng.standard_normal((M, d)))
    x = rng.standard_normal(d)
    states = []
    for _ in range(K):
        states.append(x)
        x = A @ x
    X = np.array(states).T
    return (C @ X).T, A, C  # K x M observations


class TestFitDlm:
    def test_constant_sequence_analytic(self):
        c = np.array([0.3, 0.7])
        seq = PhoneticSequence(posteriors=np.tile(c, (6, 1)))
        model = fit_dlm(seq, 1)
        np.testing.assert_allclose(model.generator[:, 0], c / np.linalg.norm(c),
                                   atol=1e-12)
        np.testing.assert_allclose(model.transition, [[1.0]], atol=1e-12)

    def test_reconstructs_noise_free_data(self):
        rng = np.random.default_rng(12)
        for d in (2, 3, 5):
            Y, _, _ = simulate_dlm(rng, M=9, d=d, K=50)
            model = fit_dlm(Y, d)
            states = dlm_states(model, Y)
            recon = (model.generator @ states).T
            rel = np.linalg.norm(Y - recon, "fro") / np.linalg.norm(Y, "fro")
            assert rel <= 1e-6

    def test_one_step_prediction_residual(self):
        rng = np.random.default_rng(13)
        for d in (2, 3, 5):
            Y, _, _ = simulate_dlm(rng, M=9, d=d, K=50)
            model = fit_dlm(Y, d)
            states = dlm_states(model, Y)
            pred = model.transition @ states[:, :-1]
            resid = np.linalg.norm(states[:, 1:] - pred, "fro") ** 2
            assert resid <= 1e-8 * np.linalg.norm(states[:, 1:], "fro") ** 2

    def test_model_invariants(self):
        rng = np.random.default_rng(14)
        Y = rng.dirichlet(np.ones(7), size=30)
        model = fit_dlm(Y, 4)
        assert orthonormality_defect(model.transition) <= 1e-8
        assert orthonormality_defect(model.generator) <= 1e-8

    def test_rank_and_length_preconditions(self):
        Y = np.tile([0.5, 0.5], (5, 1))
        with pytest.raises(RankError):
            fit_dlm(Y, 3)  # d > min(M, K) = 2
        with pytest.raises(InputError):
            fit_dlm(np.array([[0.5, 0.5]]), 1)  # K < 2


class TestDlmObservability:
    def test_order_one_returns_generator(self):
        rng = np.random.default_rng(15)
        Y = rng.dirichlet(np.ones(6), size=25)
        model = fit_dlm(Y, 3)
        sub = dlm_observability(model, 1)
        np.testing.assert_allclose(sub.basis, model.generator, atol=1e-12)

    def test_constant_model_stacks_generator(self):
        c = np.array([0.3, 0.7])
        seq = PhoneticSequence(posteriors=np.tile(c, (6, 1)))
        model = fit_dlm(seq, 1)
        sub = dlm_observability(model, 3)
        want = np.vstack([model.generator] * 3) / np.sqrt(3)
        np.testing.assert_allclose(sub.basis, want, atol=1e-12)
        assert abs(sub.basis[:, 0] @ sub.basis[:, 0] - 1.0) < 1e-12

    def test_orthonormality_across_models(self):
        rng = np.random.default_rng(16)
        for _ in range(10):
            Y = rng.dirichlet(np.ones(8), size=40)
            model = fit_dlm(Y, 4)
            for n in (1, 2, 5):
                sub = dlm_observability(model, n)
                assert orthonormality_defect(sub.basis) <= 1e-8
                assert sub.ambient_dim == n * 8


class TestConstructDispatch:
    def test_rank_rule_paper_sizes(self):
        spec = SubspaceSpec(method="olr", context_order=3, sample_ratio=0.6)
        assert spec.rank_for(46) == 27
        assert spec.rank_for(62) == 37
        assert spec.rank_for(53) == 31

    def test_rank_rule_clamps_to_two(self):
        spec = SubspaceSpec(method="olr", context_order=1, sample_ratio=0.15)
        assert spec.rank_for(10) == 2

    def test_olr_order_one_matches_direct_call(self):
        rng = np.random.default_rng(17)
        seq = PhoneticSequence(posteriors=rng.dirichlet(np.ones(6), size=30))
        spec = SubspaceSpec(method="olr", context_order=1, sample_ratio=0.5)
        via_dispatch = construct(seq, spec)
        direct = construct_olr(seq.posteriors.T, 3)
        assert via_dispatch.basis.tobytes() == direct.basis.tobytes()

    def test_dlm_ambient_matches_stacked(self):
        rng = np.random.default_rng(18)
        seq = PhoneticSequence(posteriors=rng.dirichlet(np.ones(6), size=30))
        spec = SubspaceSpec(method="dlm", context_order=4, sample_ratio=0.5)
        sub = construct(seq, spec)
        assert sub.ambient_dim == 4 * 6 and sub.rank == 3

    def test_invalid_method_rejected(self):
        with pytest.raises(InputError):
            SubspaceSpec(method="pca")


class TestSubspaceArchive:
    def test_round_trip(self, tmp_path):
        sub = random_orthonormal(6, 3, 19)
        sub = type(sub)(basis=sub.basis, source_tag="rec-1")
        path = tmp_path / "utt.sub.gsm"
        save_subspace(sub, path, metadata={"method": "olr", "n": 3, "alpha": 0.6})
        loaded, meta = load_subspace(path)
        assert loaded.basis.tobytes() == sub.basis.tobytes()
        assert loaded.source_tag == "rec-1"
        assert meta["method"] == "olr" and meta["n"] == "3"
