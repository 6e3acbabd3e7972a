import math

import numpy as np
import pytest

from typicalset import (
    Ensemble,
    EntropyEstimate,
    GridResolutionError,
    MixtureModel,
    TrainingDivergedError,
    TypicalityConfig,
    gaussian_entropy,
    intersection_matrix,
    is_multi_typical,
    is_typical,
    min_typicality_log_density,
    check_mtilde_normalization,
    multi_typicality_score,
    rejection_sample_multi_typical,
    sample,
    train_ensemble,
)
from typicalset.ensemble import min_typicality_log_density_batch
from typicalset.training import InitConfig, TrainConfig

from conftest import STD_NORMAL_ENTROPY, STD_NORMAL_LOGPDF_AT_MODE


def gaussian_member(mean, log_var=0.0):
    model = MixtureModel.from_parameters([[float(mean)]], [[float(log_var)]])
    h = gaussian_entropy(model.components[0])
    return model, h


def build_ensemble(means, epsilons, n=1, entropies=None):
    models, hs = [], []
    for m in means:
        model, h = gaussian_member(m)
        models.append(model)
        hs.append(h)
    if entropies is not None:
        hs = list(entropies)
    return Ensemble(
        models=tuple(models),
        entropies=tuple(
            EntropyEstimate(value=h, std_error=0.0, num_samples=1, seed=0) for h in hs
        ),
        configs=tuple(
            TypicalityConfig(epsilon=e, n=n, entropy=h) for e, h in zip(epsilons, hs)
        ),
    )


class TestMultiScore:
    def test_two_member_hand_value(self):
        # members N(0,1) and N(5,1) with exact entropies; at the origin the
        # second member's NLL is 0.5 ln 2pi + 12.5, so its score is 12.0
        ens = build_ensemble([0.0, 5.0], [1.0, 1.0])
        assert multi_typicality_score(ens, [[0.0]]) == pytest.approx(12.0, abs=1e-12)
        out = is_multi_typical(ens, [[0.0]], epsilon=12.5)
        assert out.member_scores[0] == pytest.approx(0.5, abs=1e-12)
        assert out.member_scores[1] == pytest.approx(12.0, abs=1e-12)
        assert out.accepted

    def test_max_over_members(self):
        ens = build_ensemble([-2.0, 0.0, 2.0], [1.0, 1.0, 1.0])
        rng = np.random.default_rng(0)
        for _ in range(50):
            x = rng.normal(scale=3.0, size=(1, 1))
            out = is_multi_typical(ens, x, epsilon=5.0)
            assert out.score == max(out.member_scores)

    def test_single_member_reduces_to_plain_test(self, std_normal_1d):
        ens = build_ensemble([0.0], [0.7])
        cfg = TypicalityConfig(epsilon=0.7, n=1, entropy=STD_NORMAL_ENTROPY)
        rng = np.random.default_rng(1)
        for _ in range(100):
            x = rng.normal(size=(1, 1)) * 2
            assert (
                is_multi_typical(ens, x).accepted
                == is_typical(std_normal_1d, cfg, x).accepted
            )


class TestConjunction:
    def test_reject_when_any_member_rejects(self):
        # x = 1 scores exactly 0 for a standard normal member, but the far
        # member at 50 gives a huge score: one dissent vetoes
        ens5 = build_ensemble([0.0, 0.0, 0.0, 0.0, 50.0], [0.5] * 5)
        ens4 = build_ensemble([0.0, 0.0, 0.0, 0.0], [0.5] * 4)
        x = [[1.0]]
        assert not is_multi_typical(ens5, x).accepted
        assert is_multi_typical(ens4, x).accepted

    def test_equals_conjunction_of_member_tests(self):
        ens = build_ensemble([0.0, 1.5], [0.6, 0.8])
        rng = np.random.default_rng(2)
        for _ in range(300):
            x = rng.normal(scale=2.5, size=(1, 1))
            members = [
                is_typical(m, c, x).accepted
                for m, c in zip(ens.models, ens.configs)
            ]
            assert is_multi_typical(ens, x).accepted == all(members)

    def test_shared_epsilon_shrinks_with_more_members(self):
        big = build_ensemble([0.0, 1.0, -1.0], [1.0] * 3)
        small = build_ensemble([0.0, 1.0], [1.0] * 2)
        rng = np.random.default_rng(3)
        for _ in range(300):
            x = rng.normal(scale=2.0, size=(1, 1))
            if is_multi_typical(big, x, epsilon=0.9).accepted:
                assert is_multi_typical(small, x, epsilon=0.9).accepted

    def test_strict_at_shared_epsilon(self):
        ens = build_ensemble([0.0], [1.0])
        # score at origin is exactly 0.5; shared epsilon 0.5 must reject
        assert not is_multi_typical(ens, [[0.0]], epsilon=0.5).accepted
        assert is_multi_typical(ens, [[0.0]], epsilon=0.5000001).accepted

    def test_sequence_length_enforced(self):
        ens = build_ensemble([0.0], [1.0], n=2)
        with pytest.raises(ValueError):
            is_multi_typical(ens, [[0.0]])

    def test_shared_epsilon_validation(self):
        ens = build_ensemble([0.0], [1.0])
        with pytest.raises(ValueError):
            is_multi_typical(ens, [[0.0]], epsilon=0.0)


class TestEnsembleType:
    def test_alignment_enforced(self):
        model, h = gaussian_member(0.0)
        est = EntropyEstimate(value=h, std_error=0.0, num_samples=1, seed=0)
        cfg = TypicalityConfig(epsilon=1.0, n=1, entropy=h)
        with pytest.raises(ValueError):
            Ensemble(models=(model,), entropies=(est, est), configs=(cfg,))
        with pytest.raises(ValueError):
            Ensemble(models=(), entropies=(), configs=())

    def test_mixed_dimensions_rejected(self):
        a, h = gaussian_member(0.0)
        b = MixtureModel.from_parameters([[0.0, 0.0]], [[0.0, 0.0]])
        est = EntropyEstimate(value=h, std_error=0.0, num_samples=1, seed=0)
        cfg = TypicalityConfig(epsilon=1.0, n=1, entropy=h)
        with pytest.raises(ValueError):
            Ensemble(models=(a, b), entropies=(est, est), configs=(cfg, cfg))

    def test_mixed_n_rejected(self):
        a, h = gaussian_member(0.0)
        est = EntropyEstimate(value=h, std_error=0.0, num_samples=1, seed=0)
        c1 = TypicalityConfig(epsilon=1.0, n=1, entropy=h)
        c2 = TypicalityConfig(epsilon=1.0, n=2, entropy=h)
        with pytest.raises(ValueError):
            Ensemble(models=(a, a), entropies=(est, est), configs=(c1, c2))

    def test_properties(self):
        ens = build_ensemble([0.0, 1.0], [1.0, 1.0], n=3)
        assert ens.size == 2
        assert ens.dim == 1
        assert ens.n == 3
        assert not ens.is_partial


class TestTrainEnsemble:
    def fit(self, seed=0, K=3, **kwargs):
        true = MixtureModel.from_parameters([[-3.0], [3.0]], [[0.0], [0.0]])
        data = sample(true, 500, seed=99)
        defaults = dict(
            n=1, target_coverage=0.9, calibration_sequences=1000, entropy_samples=2000
        )
        defaults.update(kwargs)
        return train_ensemble(
            data,
            K,
            2,
            InitConfig(radius=4.0, log_var_low=0.0, log_var_high=1.0),
            TrainConfig(method="em", epochs=25, seed=0),
            seed=seed,
            **defaults,
        )

    def test_members_differ_and_calibrate(self):
        ens = self.fit()
        assert ens.size == 3
        assert len(ens.curves) == 3
        assert not ens.is_partial
        # independent member streams: the fitted means differ
        assert not np.array_equal(ens.models[0].means, ens.models[1].means)
        for cfg in ens.configs:
            assert cfg.epsilon > 0
            assert cfg.n == 1

    def test_bitwise_deterministic(self):
        a = self.fit(seed=7)
        b = self.fit(seed=7)
        for ma, mb in zip(a.models, b.models):
            assert np.array_equal(ma.means, mb.means)
            assert np.array_equal(ma.log_vars, mb.log_vars)
        assert [c.epsilon for c in a.configs] == [c.epsilon for c in b.configs]

    def test_calibrated_coverage_on_fresh_samples(self):
        ens = self.fit(calibration_sequences=5000)
        for model, cfg in zip(ens.models, ens.configs):
            fresh = sample(model, 2000, seed=123).data
            scores = np.abs(_nll_batch(model, fresh) - cfg.entropy)
            acc = float(np.mean(scores < cfg.epsilon))
            assert acc == pytest.approx(0.9, abs=0.04)

    def test_partial_ensemble_on_member_failure(self, monkeypatch):
        import typicalset.ensemble as ens_mod

        real = ens_mod.fit_mle
        calls = []

        def flaky(data, M, init_config, train_config):
            calls.append(train_config.seed)
            if len(calls) == 2:
                raise TrainingDivergedError(17)
            return real(data, M, init_config, train_config)

        monkeypatch.setattr(ens_mod, "fit_mle", flaky)
        ens = self.fit(K=3)
        assert ens.is_partial
        assert ens.size == 2
        assert len(ens.failures) == 1
        assert ens.failures[0].index == 1
        assert ens.failures[0].epoch == 17

    def test_all_members_failing_raises(self, monkeypatch):
        import typicalset.ensemble as ens_mod

        def dead(data, M, init_config, train_config):
            raise TrainingDivergedError(3)

        monkeypatch.setattr(ens_mod, "fit_mle", dead)
        with pytest.raises(TrainingDivergedError):
            self.fit(K=2)

    def test_k_validation(self):
        with pytest.raises(ValueError):
            self.fit(K=0)


def _nll_batch(model, pts):
    from typicalset import log_density_batch

    return -log_density_batch(model, pts)


class TestIntersectionMatrix:
    def small(self, seed=0, coverage=0.9):
        ens = build_ensemble([0.0, 0.5], [0.9, 0.9])
        gt, h = gaussian_member(0.25)
        return intersection_matrix(
            gt,
            ens,
            samples_per_cell=1000,
            seed=seed,
            target_coverage=coverage,
            calibration_sequences=2000,
            entropy_samples=5000,
        )

    def test_shape_and_labels(self):
        mat = self.small()
        assert mat.row_labels == ("ground_truth", "model_1", "model_2")
        assert mat.col_labels == mat.row_labels
        assert mat.entries.shape == (3, 3)

    def test_gt_diagonal_tracks_target_coverage(self):
        mat = self.small(coverage=0.9)
        assert mat.entries[0, 0] == pytest.approx(90.0, abs=3.0)

    def test_deterministic(self):
        a = self.small(seed=5)
        b = self.small(seed=5)
        assert np.array_equal(a.entries, b.entries)

    def test_csv_format(self, tmp_path):
        mat = self.small()
        path = tmp_path / "table.csv"
        mat.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "typical_set,ground_truth,model_1,model_2"
        cell = lines[1].split(",")[1]
        assert "." in cell and len(cell.split(".")[1]) == 1

    def test_entries_are_percentages(self):
        mat = self.small()
        assert np.all(mat.entries >= 0.0)
        assert np.all(mat.entries <= 100.0)

    def test_samples_per_cell_validation(self):
        ens = build_ensemble([0.0], [1.0])
        gt, _ = gaussian_member(0.0)
        with pytest.raises(ValueError):
            intersection_matrix(gt, ens, samples_per_cell=99)


class TestRejectionSampling:
    def test_survivors_are_multi_typical(self):
        ens = build_ensemble([0.0, 0.3], [1.2, 1.2])
        batch, report = rejection_sample_multi_typical(ens, 200, seed=3)
        assert report.total_generated == 400
        assert batch.count == report.survivors
        for row in batch.data[:50]:
            assert is_multi_typical(ens, row[None, :]).accepted

    def test_zero_survivors_yield_empty_batch(self):
        gt, _ = gaussian_member(0.0)
        ens = build_ensemble([0.0, 0.0], [1e-9, 1e-9])
        batch, report = rejection_sample_multi_typical(ens, 100, seed=4, ground_truth=gt)
        assert report.survivors == 0
        assert report.survivor_fraction == 0.0
        assert batch.count == 0
        assert batch.dim == 1
        assert report.survivor_gt_typical_fraction is None
        assert report.gt_multi_typical_fraction == 0.0

    def test_gt_fractions_for_well_matched_ensemble(self):
        # members equal to the ground truth, generous radii: nearly all
        # proposals survive and nearly all are ground-truth typical
        gt, h = gaussian_member(0.0)
        ens = build_ensemble([0.0, 0.0], [2.5, 2.5])
        batch, report = rejection_sample_multi_typical(
            ens, 500, seed=5, ground_truth=gt,
            calibration_sequences=2000, entropy_samples=5000,
        )
        assert report.survivor_fraction > 0.9
        assert report.survivor_gt_typical_fraction > 0.85
        assert report.gt_multi_typical_fraction > 0.9

    def test_disjoint_members_reject_everything_mutual(self):
        # two members 40 sigma apart: each member's samples are wildly
        # atypical for the other, so the conjunction kills the pool
        ens = build_ensemble([0.0, 40.0], [1.5, 1.5])
        batch, report = rejection_sample_multi_typical(ens, 300, seed=6)
        assert report.survivors == 0

    def test_requires_n_equal_one(self):
        ens = build_ensemble([0.0], [1.0], n=2)
        with pytest.raises(ValueError):
            rejection_sample_multi_typical(ens, 10, seed=0)

    def test_per_model_count_validation(self):
        ens = build_ensemble([0.0], [1.0])
        with pytest.raises(ValueError):
            rejection_sample_multi_typical(ens, 0, seed=0)

    def test_deterministic(self):
        ens = build_ensemble([0.0, 0.2], [1.0, 1.0])
        a, _ = rejection_sample_multi_typical(ens, 200, seed=9)
        b, _ = rejection_sample_multi_typical(ens, 200, seed=9)
        assert np.array_equal(a.data, b.data)


class TestMinTypicality:
    def test_single_member_returns_shifted_log_density(self):
        ens = build_ensemble([0.0], [1.0])
        # log q(0) + h = -0.918938... + 1.418938... = 0.5 exactly
        assert min_typicality_log_density(ens, [0.0]) == pytest.approx(0.5, abs=1e-12)

    def test_tie_breaks_to_lowest_index(self):
        # both members are N(0,1); entropies crafted so the shifted values
        # at the origin are +0.5 and -0.5: equal magnitude, first one wins
        nll0 = -STD_NORMAL_LOGPDF_AT_MODE
        ens = build_ensemble(
            [0.0, 0.0], [1.0, 1.0], entropies=[nll0 + 0.5, nll0 - 0.5]
        )
        assert min_typicality_log_density(ens, [0.0]) == pytest.approx(0.5, abs=1e-12)

    def test_picks_minimal_magnitude_member(self):
        ens = build_ensemble([0.0, 5.0], [1.0, 1.0])
        rng = np.random.default_rng(7)
        pts = rng.uniform(-3, 8, size=(200, 1))
        got = min_typicality_log_density_batch(ens, pts)
        from typicalset import log_density_batch

        shifted = np.stack(
            [
                log_density_batch(m, pts) + h.value
                for m, h in zip(ens.models, ens.entropies)
            ]
        )
        expect = shifted[np.argmin(np.abs(shifted), axis=0), np.arange(200)]
        assert np.array_equal(got, expect)

    def test_membership_equivalence_at_shared_epsilon(self):
        ens = build_ensemble([0.0, 1.0], [1.0, 1.0])
        rng = np.random.default_rng(8)
        for eps in (0.3, 0.8, 1.5):
            for _ in range(100):
                x = rng.normal(scale=2.0, size=(1, 1))
                lhs = abs(min_typicality_log_density(ens, x[0])) < eps
                rhs = is_multi_typical(ens, x, epsilon=eps).accepted
                assert lhs == rhs


class TestMtilde:
    def test_singleton_recovers_entropy(self):
        # m~ = q e^h for one exact member: Z = e^h and E[-log m] = h
        ens = build_ensemble([0.0], [1.0])
        report = check_mtilde_normalization(ens, points_per_dim=2048)
        assert report.log_z == pytest.approx(STD_NORMAL_ENTROPY, abs=1e-6)
        assert report.expected_nll == pytest.approx(STD_NORMAL_ENTROPY, abs=1e-6)

    def test_two_member_values_close(self):
        ens = build_ensemble([0.0, 0.6], [1.0, 1.0])
        report = check_mtilde_normalization(ens, points_per_dim=2048)
        assert report.expected_nll == pytest.approx(report.log_z, abs=0.35)

    def test_coarse_grid_raises(self):
        ens = build_ensemble([0.0], [1.0])
        with pytest.raises(GridResolutionError):
            check_mtilde_normalization(ens, points_per_dim=4, padding_sigmas=30.0)

    def test_dim_limit(self):
        model = MixtureModel.from_parameters([[0.0] * 3], [[0.0] * 3])
        h = gaussian_entropy(model.components[0])
        ens = Ensemble(
            models=(model,),
            entropies=(EntropyEstimate(value=h, std_error=0.0, num_samples=1, seed=0),),
            configs=(TypicalityConfig(epsilon=1.0, n=1, entropy=h),),
        )
        with pytest.raises(ValueError):
            check_mtilde_normalization(ens)
