import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from typicalset import (
    InitConfig,
    LearningCurve,
    MixtureModel,
    TrainConfig,
    TrainingDivergedError,
    avg_neg_log_density,
    effective_mode_count,
    em_step,
    fit_mle,
    random_base_distribution,
    sample,
)
from typicalset.rng import derive_seed
from typicalset.training import _gradient_step, _responsibilities


def make_case(seed, n=60, d=2, m=3):
    rng = np.random.default_rng(seed)
    data = rng.normal(size=(n, d)) * rng.uniform(0.5, 2.0) + rng.normal(size=d)
    model = MixtureModel.from_parameters(
        rng.normal(size=(m, d)), rng.uniform(-1.0, 0.5, size=(m, d))
    )
    return model, data


class TestEmStep:
    def test_single_component_exact_moments(self):
        # with M = 1 responsibilities are all one; one step lands exactly
        # on the empirical mean and biased variance
        data = np.array([[0.0], [2.0], [4.0]])
        start = MixtureModel.from_parameters([[10.0]], [[2.0]])
        out = em_step(start, data)
        assert out.means[0, 0] == pytest.approx(2.0, abs=1e-12)
        assert np.exp(out.log_vars[0, 0]) == pytest.approx(8.0 / 3.0, abs=1e-12)
        assert out.weights[0] == 1.0

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10**6))
    def test_never_increases_nll(self, seed):
        model, data = make_case(seed)
        before = avg_neg_log_density(model, data)
        after = avg_neg_log_density(em_step(model, data, restart_seed=seed), data)
        assert after <= before + 1e-9

    def test_fixed_point(self):
        # iterate to convergence, then one more step must stay put
        model, data = make_case(3)
        for i in range(300):
            model = em_step(model, data, restart_seed=i)
        again = em_step(model, data, restart_seed=999)
        assert np.allclose(again.means, model.means, atol=1e-8)
        assert np.allclose(again.log_vars, model.log_vars, atol=1e-7)

    def test_duplicated_data_invariance(self):
        model, data = make_case(11)
        once = em_step(model, data)
        twice = em_step(model, np.concatenate([data, data]))
        assert np.allclose(once.means, twice.means, atol=1e-9)
        assert np.allclose(once.log_vars, twice.log_vars, atol=1e-9)
        assert np.allclose(once.weights, twice.weights, atol=1e-12)

    def test_permutation_invariance(self):
        model, data = make_case(12, n=400)
        perm = np.random.default_rng(0).permutation(400)
        a = em_step(model, data)
        b = em_step(model, data[perm])
        assert np.allclose(a.means, b.means, atol=1e-10)
        assert np.allclose(a.log_vars, b.log_vars, atol=1e-10)

    def test_variance_floor(self):
        # all points identical: the exact update is zero variance
        data = np.full((50, 1), 3.0)
        out = em_step(MixtureModel.from_parameters([[3.0]], [[0.0]]), data)
        assert np.exp(out.log_vars[0, 0]) == pytest.approx(1e-6, rel=1e-9)

    def test_starved_component_restarts(self, caplog):
        # second component sits 1000 sigma away: zero responsibility
        data = np.random.default_rng(1).normal(size=(100, 1))
        model = MixtureModel.from_parameters([[0.0], [1000.0]], [[0.0], [-4.0]])
        with caplog.at_level(logging.WARNING, logger="typicalset.training"):
            out = em_step(model, data, restart_seed=5)
        assert any("starved" in rec.message for rec in caplog.records)
        # the restarted mean is one of the data points
        assert float(out.means[1, 0]) in set(data[:, 0].tolist())
        assert out.weights[1] > 0

    def test_restart_deterministic(self):
        data = np.random.default_rng(1).normal(size=(100, 1))
        model = MixtureModel.from_parameters([[0.0], [1000.0]], [[0.0], [-4.0]])
        a = em_step(model, data, restart_seed=5)
        b = em_step(model, data, restart_seed=5)
        assert np.array_equal(a.means, b.means)

    def test_empty_data_rejected(self, std_normal_1d):
        with pytest.raises(ValueError):
            em_step(std_normal_1d, np.empty((0, 1)))


class TestGradientStep:
    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10**6))
    def test_small_step_never_decreases_likelihood(self, seed):
        model, data = make_case(seed)
        logits = np.array(model.log_weights)
        means = np.array(model.means)
        log_vars = np.array(model.log_vars)
        nl, nm, nv, before = _gradient_step(logits, means, log_vars, data, 1e-4)
        stepped = MixtureModel.from_parameters(nm, nv, log_weights=nl - nl.max())
        after = -avg_neg_log_density(stepped, data)
        assert after >= before - 1e-9

    def test_matches_em_fixed_point_single_component(self):
        # at the M = 1 optimum (empirical moments) the gradient vanishes
        data = np.random.default_rng(2).normal(size=(200, 2)) + [1.0, -1.0]
        opt = em_step(MixtureModel.from_parameters([[0.0, 0.0]], [[0.0, 0.0]]), data)
        logits = np.array(opt.log_weights)
        nl, nm, nv, _ = _gradient_step(
            logits, np.array(opt.means), np.array(opt.log_vars), data, 0.5
        )
        assert np.allclose(nm, opt.means, atol=1e-9)
        assert np.allclose(nv, opt.log_vars, atol=1e-9)


class TestFitMle:
    def test_curve_shape_and_entry_zero(self):
        data = sample(MixtureModel.from_parameters([[0.0]], [[0.0]]), 100, seed=4)
        cfg = TrainConfig(method="em", epochs=7, seed=9, test_fraction=0.25)
        model, curve = fit_mle(data, 2, InitConfig(radius=1.0), cfg)
        assert curve.epochs == 7
        assert len(curve.train_nll) == 8

        # entry 0 is the initial model, reproducible from the documented streams
        init = random_base_distribution(
            1, 2, 1.0, 1.0, 3.0, seed=derive_seed(9, "init")
        )
        from typicalset.rng import make_rng

        perm = make_rng(derive_seed(9, "split")).permutation(100)
        x_train = data.data[perm[25:]]
        assert curve.train_nll[0] == pytest.approx(
            avg_neg_log_density(init, x_train), abs=1e-12
        )

    def test_seed_determinism_bitwise(self):
        data = np.random.default_rng(3).normal(size=(80, 2))
        cfg = TrainConfig(method="gradient", epochs=20, learning_rate=0.1, seed=5)
        m1, c1 = fit_mle(data, 3, InitConfig(), cfg)
        m2, c2 = fit_mle(data, 3, InitConfig(), cfg)
        assert np.array_equal(m1.means, m2.means)
        assert np.array_equal(m1.log_vars, m2.log_vars)
        assert c1.train_nll == c2.train_nll

    def test_seeds_differ(self):
        data = np.random.default_rng(3).normal(size=(80, 2))
        m1, _ = fit_mle(data, 3, InitConfig(), TrainConfig(epochs=1, seed=5))
        m2, _ = fit_mle(data, 3, InitConfig(), TrainConfig(epochs=1, seed=6))
        assert not np.array_equal(m1.means, m2.means)

    def test_em_improves_on_mixture(self):
        true = MixtureModel.from_parameters([[-4.0], [4.0]], [[0.0], [0.0]])
        data = sample(true, 600, seed=7)
        model, curve = fit_mle(
            data, 2, InitConfig(radius=5.0, log_var_low=0.0, log_var_high=1.0),
            TrainConfig(method="em", epochs=60, seed=1),
        )
        assert curve.train_nll[-1] < curve.train_nll[0] - 0.5
        got = sorted(model.means[:, 0].tolist())
        assert got[0] == pytest.approx(-4.0, abs=0.4)
        assert got[1] == pytest.approx(4.0, abs=0.4)

    def test_gradient_and_em_agree_single_component(self):
        data = np.random.default_rng(8).normal(size=(300, 1)) * 1.5 + 0.7
        em_model, _ = fit_mle(data, 1, InitConfig(), TrainConfig(method="em", epochs=1, seed=2))
        gd_model, _ = fit_mle(
            data, 1, InitConfig(),
            TrainConfig(method="gradient", epochs=600, learning_rate=0.8, seed=2),
        )
        assert gd_model.means[0, 0] == pytest.approx(em_model.means[0, 0], abs=1e-3)
        assert gd_model.log_vars[0, 0] == pytest.approx(em_model.log_vars[0, 0], abs=1e-3)

    def test_divergence_raises_with_epoch(self):
        data = np.random.default_rng(9).normal(size=(50, 1))
        with pytest.raises(TrainingDivergedError) as exc_info:
            fit_mle(
                data, 2, InitConfig(),
                TrainConfig(method="gradient", epochs=500, learning_rate=1e6, seed=0),
            )
        assert exc_info.value.epoch >= 1

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            fit_mle(np.array([[1.0]]), 1, InitConfig(), TrainConfig(epochs=1))

    def test_split_respects_fraction(self):
        # 10 points at fraction 0.3: 3 test, 7 train; curve entry 0 must
        # average over exactly 7 points (checked indirectly by determinism
        # of the documented split stream)
        data = np.arange(10, dtype=np.float64)[:, None]
        cfg = TrainConfig(method="em", epochs=1, seed=4, test_fraction=0.3)
        _, curve = fit_mle(data, 1, InitConfig(radius=10.0), cfg)
        from typicalset.rng import make_rng

        perm = make_rng(derive_seed(4, "split")).permutation(10)
        init = random_base_distribution(1, 1, 10.0, 1.0, 3.0, seed=derive_seed(4, "init"))
        assert curve.train_nll[0] == pytest.approx(
            avg_neg_log_density(init, data[perm[3:]]), abs=1e-12
        )


class TestConfigs:
    def test_train_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(method="sgd")
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)
        with pytest.raises(ValueError):
            TrainConfig(method="gradient", learning_rate=0.0)
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)

    def test_em_ignores_learning_rate_validation(self):
        # zero rate only matters for the gradient method
        cfg = TrainConfig(method="em", learning_rate=0.0)
        assert cfg.method == "em"

    def test_init_config_defaults_match_reference_scheme(self):
        cfg = InitConfig()
        assert cfg.radius == 3.0
        assert (cfg.log_var_low, cfg.log_var_high) == (1.0, 3.0)
        assert cfg.convention == "variance"


class TestLearningCurve:
    def test_validation(self):
        with pytest.raises(ValueError):
            LearningCurve((1.0, 2.0), (1.0,))
        with pytest.raises(ValueError):
            LearningCurve((), ())

    def test_epochs_property(self):
        assert LearningCurve((3.0, 2.0, 1.0), (3.1, 2.1, 1.1)).epochs == 2

    def test_csv_round_trip_bytes(self, tmp_path):
        curve = LearningCurve((3.5, 2.25), (3.625, 2.375))
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        curve.to_csv(a)
        curve.to_csv(b)
        assert a.read_bytes() == b.read_bytes()
        lines = a.read_text().splitlines()
        assert lines[0] == "epoch,train_nll,test_nll"
        assert lines[1] == "0,3.5,3.625"
        assert lines[2] == "1,2.25,2.375"


class TestModeCount:
    def test_strict_threshold(self):
        model = MixtureModel.from_parameters(
            [[0.0], [1.0], [2.0]], [[0.0]] * 3, weights=[0.5, 0.49, 0.01]
        )
        assert effective_mode_count(model, 0.02) == 2
        assert effective_mode_count(model, 0.005) == 3
        assert effective_mode_count(model, 0.0) == 3
        # a threshold equal to a stored weight excludes that component
        smallest = float(model.weights.min())
        assert effective_mode_count(model, smallest) == 2

    def test_uniform_weights(self):
        model = random_base_distribution(2, 10, 1.0, 0.0, 1.0, seed=1)
        assert effective_mode_count(model, 0.05) == 10

    def test_threshold_validation(self):
        model = random_base_distribution(1, 2, 1.0, 0.0, 1.0, seed=1)
        with pytest.raises(ValueError):
            effective_mode_count(model, 1.0)
        with pytest.raises(ValueError):
            effective_mode_count(model, -0.1)
