import math
import textwrap

import pytest

from tripsim.config import ExperimentConfig, load_config


BASE = {
    "name": "unit",
    "seed": 5,
    "sim": {"clients": 4, "rounds": 2},
    "topology": {"kind": "regular", "k": 2},
    "data": {"kind": "iid"},
}


def cfg_with(**sections) -> dict:
    merged = {k: (dict(v) if isinstance(v, dict) else v) for k, v in BASE.items()}
    for key, value in sections.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key].update(value)
        else:
            merged[key] = value
    return merged


class TestValidation:
    def test_minimal_config_accepted(self):
        cfg = ExperimentConfig.model_validate(BASE)
        assert cfg.to_sim_config().n == 4

    def test_lambda_alias_and_range(self):
        good = ExperimentConfig.model_validate(cfg_with(sim={"lambda": 0.7}))
        assert good.sim.lam == 0.7
        with pytest.raises(ValueError, match=r"λ ∈ \(0,1\]"):
            ExperimentConfig.model_validate(cfg_with(sim={"lambda": 0.0}))
        with pytest.raises(ValueError, match=r"λ ∈ \(0,1\]"):
            ExperimentConfig.model_validate(cfg_with(sim={"lambda": 1.5}))

    def test_consistency_threshold_forms(self):
        auto = ExperimentConfig.model_validate(
            cfg_with(sim={"consistency_threshold": "auto"}))
        assert auto.to_sim_config().consistency_threshold is None
        inf = ExperimentConfig.model_validate(
            cfg_with(sim={"consistency_threshold": "inf"}))
        assert inf.to_sim_config().consistency_threshold == math.inf
        fixed = ExperimentConfig.model_validate(
            cfg_with(sim={"consistency_threshold": 0.25}))
        assert fixed.to_sim_config().consistency_threshold == 0.25

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValueError, match="extra"):
            ExperimentConfig.model_validate(cfg_with(sim={"cliens": 4}))

    def test_sizes_kind_needs_fractions(self):
        with pytest.raises(ValueError, match="fractions"):
            ExperimentConfig.model_validate(cfg_with(data={"kind": "sizes"}))

    def test_fraction_length_must_match_clients(self):
        bad = cfg_with(data={"kind": "sizes", "fractions": [0.5, 0.5]})
        with pytest.raises(ValueError, match="per client"):
            ExperimentConfig.model_validate(bad)

    def test_file_topology_needs_path(self):
        with pytest.raises(ValueError, match="schedule_file"):
            ExperimentConfig.model_validate(cfg_with(topology={"kind": "file"}))

    def test_adversary_ids_or_fraction(self):
        both = cfg_with(adversary={"ids": [0], "fraction": 0.5,
                                   "fake_report": True})
        with pytest.raises(ValueError, match="not both"):
            ExperimentConfig.model_validate(both)

    def test_csv_pair_required(self):
        with pytest.raises(ValueError, match="together"):
            ExperimentConfig.model_validate(
                cfg_with(task={"csv_train": "only_one.csv"}))


class TestRoster:
    def adversary_cfg(self, **adv) -> ExperimentConfig:
        payload = cfg_with(adversary={"fake_report": True, **adv})
        return ExperimentConfig.model_validate(payload)

    def test_explicit_ids(self):
        cfg = self.adversary_cfg(ids=[2, 0])
        assert cfg.roster() == (0, 2)

    def test_fraction_is_deterministic(self):
        a = self.adversary_cfg(fraction=0.5).roster()
        b = self.adversary_cfg(fraction=0.5).roster()
        assert a == b
        assert len(a) == 2

    def test_no_adversary_section_means_empty(self):
        cfg = ExperimentConfig.model_validate(BASE)
        assert cfg.roster() == ()
        assert cfg.profile() is None

    def test_profile_maps_attacks(self):
        cfg = self.adversary_cfg(ids=[1])
        profile = cfg.profile()
        assert profile.fake_report and not profile.fake_pretrain
        both = ExperimentConfig.model_validate(
            cfg_with(adversary={"fake_pretrain": True, "fake_report": True,
                                "ids": [1]}))
        assert both.profile().fake_pretrain and both.profile().fake_report


class TestToSimConfig:
    def test_round_trip_of_core_fields(self):
        payload = cfg_with(
            sim={"clients": 5, "rounds": 7, "epochs": 2, "lr": 0.05,
                 "batch_size": 16, "lambda": 0.9,
                 "countermeasures": {"c1": True, "c2": True}},
            topology={"kind": "watts-strogatz", "k": 2, "beta": 0.3},
            task={"d": 8, "classes": 3, "center_scale": 0.7},
        )
        sim = ExperimentConfig.model_validate(payload).to_sim_config()
        assert (sim.n, sim.rounds, sim.epochs, sim.lr) == (5, 7, 2, 0.05)
        assert sim.batch_size == 16
        assert sim.lam == 0.9
        assert sim.enable_c1 and sim.enable_c2
        assert sim.topology.kind == "watts-strogatz"
        assert sim.topology.beta == 0.3
        assert sim.d == 8 and sim.n_classes == 3
        assert sim.center_scale == 0.7

    def test_adversary_round_trip(self):
        payload = cfg_with(adversary={"fake_pretrain": True, "ids": [1, 3],
                                      "pre_generator": "random-params"})
        cfg = ExperimentConfig.model_validate(payload)
        sim = cfg.to_sim_config()
        assert sim.dishonest == (1, 3)
        assert sim.profile.pre_generator == "random-params"


class TestLoadConfig:
    def test_yaml_round_trip(self, tmp_path):
        path = tmp_path / "exp.yaml"
        path.write_text(textwrap.dedent("""\
            name: demo
            seed: 9
            sim:
              clients: 3
              rounds: 2
              lambda: 0.5
            topology:
              kind: line
            data:
              kind: iid
        """))
        cfg = load_config(path)
        assert cfg.name == "demo"
        assert cfg.sim.lam == 0.5
        assert cfg.to_sim_config().topology.kind == "line"

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_config(tmp_path / "absent.yaml")

    def test_malformed_yaml_names_the_file(self, tmp_path):
        path = tmp_path / "broken.yaml"
        path.write_text("sim: [unclosed\n")
        with pytest.raises(ValueError, match="broken.yaml"):
            load_config(path)

    def test_semantic_error_propagates(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text(textwrap.dedent("""\
            name: demo
            seed: 1
            sim:
              clients: 3
              rounds: 2
              lambda: 2.0
            topology:
              kind: line
            data:
              kind: iid
        """))
        with pytest.raises(ValueError, match=r"λ ∈ \(0,1\]"):
            load_config(path)
