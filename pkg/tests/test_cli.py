import filecmp
import textwrap
import warnings

import pytest
from click.testing import CliRunner

from tripsim.cli import CONFIG_EXIT, NUMERIC_EXIT, main


GOOD_YAML = textwrap.dedent("""\
    name: cli-run
    seed: 13
    sim:
      clients: 3
      rounds: 2
    topology:
      kind: line
    data:
      kind: iid
    task:
      train_pool: 120
      test_size: 60
      center_scale: 0.8
""")


@pytest.fixture()
def runner():
    return CliRunner()


def write_config(tmp_path, text=GOOD_YAML):
    path = tmp_path / "exp.yaml"
    path.write_text(text)
    return path


class TestSimulateCommand:
    def test_success_writes_files(self, runner, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "out"
        result = runner.invoke(main, ["simulate", "--config", str(cfg),
                                      "--out", str(out)])
        assert result.exit_code == 0, result.output
        names = {p.name for p in out.iterdir()}
        assert {"result.json", "contributions.csv", "accuracy.csv",
                "lcv_log.csv"} <= names
        assert "final_accuracy" in result.output

    def test_byte_identical_reruns(self, runner, tmp_path):
        cfg = write_config(tmp_path)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        for out in (out1, out2):
            r = runner.invoke(main, ["simulate", "--config", str(cfg),
                                     "--out", str(out)])
            assert r.exit_code == 0, r.output
        match, mismatch, errors = filecmp.cmpfiles(
            out1, out2, [p.name for p in out1.iterdir()], shallow=False)
        assert not mismatch and not errors

    def test_seed_override_changes_output(self, runner, tmp_path):
        cfg = write_config(tmp_path)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        runner.invoke(main, ["simulate", "--config", str(cfg), "--out", str(out1)])
        runner.invoke(main, ["simulate", "--config", str(cfg), "--out", str(out2),
                             "--seed", "99"])
        a = (out1 / "contributions.csv").read_text()
        b = (out2 / "contributions.csv").read_text()
        assert a != b

    def test_workers_do_not_change_output(self, runner, tmp_path):
        cfg = write_config(tmp_path)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        runner.invoke(main, ["shapley", "--config", str(cfg), "--out", str(out1)])
        runner.invoke(main, ["shapley", "--config", str(cfg), "--out", str(out2),
                             "--workers", "2"])
        a = (out1 / "exact_contributions.csv").read_text()
        b = (out2 / "exact_contributions.csv").read_text()
        assert a == b


class TestFailureModes:
    def test_missing_config_file(self, runner, tmp_path):
        result = runner.invoke(main, ["simulate", "--config",
                                      str(tmp_path / "nope.yaml"),
                                      "--out", str(tmp_path / "out")])
        assert result.exit_code == 2

    def test_malformed_yaml(self, runner, tmp_path):
        cfg = write_config(tmp_path, "sim: [unclosed\n")
        result = runner.invoke(main, ["simulate", "--config", str(cfg),
                                      "--out", str(tmp_path / "out")])
        assert result.exit_code == CONFIG_EXIT
        assert "invalid YAML" in result.output

    def test_semantic_config_error(self, runner, tmp_path):
        bad = GOOD_YAML.replace("rounds: 2", "rounds: 2\n  lambda: 1.5")
        cfg = write_config(tmp_path, bad)
        result = runner.invoke(main, ["simulate", "--config", str(cfg),
                                      "--out", str(tmp_path / "out")])
        assert result.exit_code == CONFIG_EXIT
        assert "λ" in result.output

    def test_numeric_error_exit_code(self, runner, tmp_path):
        bad = GOOD_YAML.replace("rounds: 2", "rounds: 2\n  epochs: 2")
        bad = bad.replace("center_scale: 0.8", "center_scale: 1.0e+200")
        cfg = write_config(tmp_path, bad)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            result = runner.invoke(main, ["simulate", "--config", str(cfg),
                                          "--out", str(tmp_path / "out")])
        assert result.exit_code == NUMERIC_EXIT
        assert "numeric" in result.output.lower()

    def test_out_is_required(self, runner, tmp_path):
        cfg = write_config(tmp_path)
        result = runner.invoke(main, ["simulate", "--config", str(cfg)])
        assert result.exit_code == 2


class TestOtherCommands:
    @pytest.mark.parametrize("command,marker", [
        ("shapley", "trip_contributions.csv"),
        ("removal", "removal.csv"),
    ])
    def test_commands_produce_their_files(self, runner, tmp_path, command, marker):
        extra = ""
        if command == "removal":
            extra = "removal:\n  k: [1]\n  orders: [low]\n"
        cfg = write_config(tmp_path, GOOD_YAML + extra)
        out = tmp_path / "out"
        result = runner.invoke(main, [command, "--config", str(cfg),
                                      "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert marker in {p.name for p in out.iterdir()}

    def test_version(self, runner):
        result = runner.invoke(main, ["--version"])
        assert result.exit_code == 0
        assert "0.1.0" in result.output

    def test_help_lists_commands(self, runner):
        result = runner.invoke(main, ["--help"])
        for name in ("simulate", "shapley", "removal", "correlation",
                     "dishonest", "serve"):
            assert name in result.output
