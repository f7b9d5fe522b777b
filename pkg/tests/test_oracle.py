import numpy as np
import pytest

from tripsim.adversary import AdversaryProfile
from tripsim.engine import SimConfig, run_simulation
from tripsim.learner import evaluate, init_params
from tripsim.engine import STREAM_INIT, stream
from tripsim.oracle import (
    OracleResult,
    cosine_distance,
    exact_shapley,
    pearson,
    rerun_with_subset,
)
from tripsim.shapley import shapley_from_table
from tripsim.topology import TopologySpec

from oracles import shapley_by_subsets, table_as_set_game


def tiny_cfg(**overrides) -> SimConfig:
    settings = dict(
        n=3, rounds=2, epochs=1, lr=0.1, seed=21,
        topology=TopologySpec("line"),
        train_pool=120, test_size=80, center_scale=0.8,
    )
    settings.update(overrides)
    return SimConfig(**settings)


class TestRerunWithSubset:
    def test_full_subset_is_the_original_run(self):
        cfg = tiny_cfg()
        full = run_simulation(cfg, compute_lcvs=False)
        rerun = rerun_with_subset(cfg, frozenset(range(3)))
        assert np.array_equal(full.accuracy, rerun.accuracy)
        for a, b in zip(full.final_models, rerun.final_models):
            assert np.array_equal(a.values, b.values)

    def test_empty_subset_keeps_initial_accuracy(self):
        cfg = tiny_cfg()
        rerun = rerun_with_subset(cfg, frozenset())
        initial = init_params(16, 4, stream(cfg.seed, STREAM_INIT))
        for model in rerun.final_models:
            assert np.allclose(model.values, initial.values, atol=1e-12)
        assert np.all(rerun.accuracy == rerun.accuracy[0, 0])

    def test_dummies_still_relay(self):
        # client 1 sits mid-line; with only ends training, accuracy still moves
        cfg = tiny_cfg()
        rerun = rerun_with_subset(cfg, frozenset({0, 2}))
        assert not np.array_equal(rerun.accuracy[0], rerun.accuracy[-1])

    def test_rejects_adversarial_config(self):
        profile = AdversaryProfile(fake_report=True)
        cfg = tiny_cfg(dishonest=(0,), profile=profile)
        with pytest.raises(ValueError, match="honest"):
            rerun_with_subset(cfg, frozenset({0}))


class TestExactShapley:
    def test_matches_independent_subset_formula(self):
        cfg = tiny_cfg()
        oracle = exact_shapley(cfg)
        n = cfg.n
        players = list(range(n))
        for i in range(n):
            game = table_as_set_game(oracle.utilities[i], players)
            reference = np.array([shapley_by_subsets(game, players)[j]
                                  for j in players])
            assert np.allclose(oracle.phi_normalized[i], reference, atol=1e-12)
            assert np.allclose(oracle.phi_literal[i], reference * n, atol=1e-12)

    def test_efficiency_per_evaluator(self):
        cfg = tiny_cfg()
        oracle = exact_shapley(cfg)
        for i in range(cfg.n):
            gain = oracle.utilities[i][-1] - oracle.utilities[i][0]
            assert oracle.phi_normalized[i].sum() == pytest.approx(gain, abs=1e-12)

    def test_workers_give_identical_tables(self):
        cfg = tiny_cfg()
        serial = exact_shapley(cfg, workers=1)
        parallel = exact_shapley(cfg, workers=2)
        assert np.array_equal(serial.utilities, parallel.utilities)
        assert np.array_equal(serial.phi_literal, parallel.phi_literal)

    def test_zero_learning_rate_gives_zero_attribution(self):
        oracle = exact_shapley(tiny_cfg(lr=0.0))
        assert np.allclose(oracle.phi_literal, 0.0, atol=1e-12)

    def test_cap(self):
        with pytest.raises(ValueError, match="cap"):
            exact_shapley(tiny_cfg(), cap=2)

    def test_full_mask_column_matches_plain_run(self):
        cfg = tiny_cfg()
        oracle = exact_shapley(cfg)
        full = run_simulation(cfg, compute_lcvs=False)
        for i in range(cfg.n):
            assert oracle.utilities[i][-1] == evaluate(full.final_models[i],
                                                       full.testset)


class TestVectorComparisons:
    def test_cosine_hand_value(self):
        a = np.array([1.0, 2.0, 3.0])
        b = np.array([1.0, 3.0, 2.0])
        assert cosine_distance(a, b) == pytest.approx(1.0 - 13.0 / 14.0, abs=1e-15)

    def test_cosine_identical_is_zero(self):
        v = np.array([0.3, -0.2, 0.9])
        assert cosine_distance(v, v) == pytest.approx(0.0, abs=1e-15)

    def test_cosine_opposite_is_two(self):
        v = np.array([1.0, -1.0])
        assert cosine_distance(v, -v) == pytest.approx(2.0, abs=1e-15)

    def test_cosine_zero_vector_rejected(self):
        with pytest.raises(ValueError, match="undefined"):
            cosine_distance(np.zeros(3), np.ones(3))

    def test_pearson_hand_value(self):
        x = np.array([1.0, 2.0, 3.0, 4.0])
        y = np.array([2.0, 4.0, 6.0, 8.0])
        assert pearson(x, y) == pytest.approx(1.0, abs=1e-12)
        assert pearson(x, -y) == pytest.approx(-1.0, abs=1e-12)

    def test_pearson_known_imperfect(self):
        x = np.array([1.0, 2.0, 3.0])
        y = np.array([1.0, 3.0, 2.0])
        assert pearson(x, y) == pytest.approx(0.5, abs=1e-12)

    def test_pearson_constant_rejected(self):
        with pytest.raises(ValueError, match="undefined"):
            pearson(np.ones(4), np.array([1.0, 2.0, 3.0, 4.0]))

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="length"):
            cosine_distance(np.ones(3), np.ones(4))
        with pytest.raises(ValueError, match="length"):
            pearson(np.ones(3), np.ones(4))


class TestTripAgainstOracle:
    def test_totals_track_ground_truth(self):
        cfg = tiny_cfg(rounds=3)
        sim = run_simulation(cfg)
        oracle = exact_shapley(cfg)
        for i in range(cfg.n):
            d = cosine_distance(sim.contributions[i], oracle.phi_literal[i])
            assert d < 0.3
