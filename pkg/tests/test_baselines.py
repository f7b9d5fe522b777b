import numpy as np
import pytest

from tripsim.adversary import AdversaryProfile
from tripsim.baselines import mr_contributions, or_contributions, run_cfl
from tripsim.engine import SimConfig
from tripsim.learner import evaluate
from tripsim.shapley import shapley_from_table
from tripsim.topology import TopologySpec


def cfl_cfg(**overrides) -> SimConfig:
    settings = dict(
        n=3, rounds=3, epochs=1, lr=0.1, seed=31,
        topology=TopologySpec("line"),
        train_pool=150, test_size=90, center_scale=0.8,
    )
    settings.update(overrides)
    return SimConfig(**settings)


class TestRunCfl:
    def test_shapes_and_determinism(self):
        a = run_cfl(cfl_cfg())
        b = run_cfl(cfl_cfg())
        assert len(a.global_models) == 4
        assert len(a.client_posts) == 3
        assert a.accuracy.shape == (4,)
        for ma, mb in zip(a.global_models, b.global_models):
            assert np.array_equal(ma.values, mb.values)

    def test_global_model_is_mean_of_posts(self):
        result = run_cfl(cfl_cfg(rounds=1))
        posts = np.stack([p.values for p in result.client_posts[0].values()])
        assert np.allclose(result.global_models[1].values, posts.mean(axis=0),
                           atol=1e-12)

    def test_learning_happens(self):
        result = run_cfl(cfl_cfg())
        assert result.accuracy[-1] > result.accuracy[0] + 0.1

    def test_rejects_adversaries(self):
        profile = AdversaryProfile(fake_report=True)
        with pytest.raises(ValueError, match="honest"):
            run_cfl(cfl_cfg(dishonest=(0,), profile=profile))


class TestMrContributions:
    def test_telescoping_sum(self):
        result = run_cfl(cfl_cfg())
        phi = mr_contributions(result, normalized=True)
        total_gain = result.accuracy[-1] - result.accuracy[0]
        assert phi.sum() == pytest.approx(total_gain, abs=1e-12)

    def test_literal_is_n_times_normalized(self):
        result = run_cfl(cfl_cfg())
        literal = mr_contributions(result, normalized=False)
        normalized = mr_contributions(result, normalized=True)
        assert np.allclose(literal, normalized * 3, atol=1e-12)

    def test_zero_learning_rate(self):
        result = run_cfl(cfl_cfg(lr=0.0))
        assert np.allclose(mr_contributions(result), 0.0, atol=1e-12)

    def test_shape(self):
        assert mr_contributions(run_cfl(cfl_cfg())).shape == (3,)


class TestOrContributions:
    def test_full_coalition_replays_bitwise(self):
        cfg = cfl_cfg()
        result = run_cfl(cfg)
        # S = N in the replay table must equal the actual final accuracy
        phi, utilities = or_contributions(result, return_table=True)
        assert utilities[-1] == result.accuracy[-1]
        assert utilities[0] == result.accuracy[0]

    def test_matches_direct_shapley_on_replay_table(self):
        result = run_cfl(cfl_cfg())
        phi, utilities = or_contributions(result, return_table=True)
        assert np.allclose(phi, shapley_from_table(utilities, 3), atol=1e-12)

    def test_zero_learning_rate(self):
        result = run_cfl(cfl_cfg(lr=0.0))
        assert np.allclose(or_contributions(result), 0.0, atol=1e-12)

    def test_single_client(self):
        cfg = cfl_cfg(n=1, topology=TopologySpec("star"))
        result = run_cfl(cfg)
        phi = or_contributions(result)
        gain = result.accuracy[-1] - result.accuracy[0]
        assert phi[0] == pytest.approx(gain, abs=1e-12)

    def test_cap(self):
        result = run_cfl(cfl_cfg())
        with pytest.raises(ValueError, match="cap"):
            or_contributions(result, cap=2)

    def test_mr_and_or_agree_roughly(self):
        result = run_cfl(cfl_cfg())
        mr = mr_contributions(result, normalized=True)
        orv = or_contributions(result, normalized=True)
        # same game, different decompositions; both credit the same total
        assert mr.sum() == pytest.approx(orv.sum(), abs=1e-9)
