"""
Tests for the command-line front end: subcommands, artifacts and exit codes.
"""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from fusionsched.config import ConfigLoader
from fusionsched.harness.cli import cli_main
from fusionsched.harness.experiment import build_system
from fusionsched.logger import _LoggingSettings
from fusionsched.storage_system.storage import CheckpointStorage, ResultStorage, SnapshotStorage

SMALL_ARGS = [
    "--set", "gen.n_states=3",
    "--set", "gen.n_sensors=4",
    "--set", "env.horizon=10",
    "--set", "env.history_len=3",
    "--set", "ppo.n_envs=2",
    "--set", "ppo.n_steps=5",
    "--set", "ppo.n_minibatches=2",
    "--set", "ppo.update_epochs=1",
    "--set", "ppo.hidden_sizes=8",
    "--seed", "5",
    "--runs", "2",
    "--log-level", "WARNING",
]


@pytest.fixture(autouse=True)
def restore_logging():
    """cli_main reconfigures the process-wide sinks; put them back."""
    saved = (_LoggingSettings.level, _LoggingSettings.log_file, _LoggingSettings.to_console)
    yield
    _LoggingSettings.level, _LoggingSettings.log_file, _LoggingSettings.to_console = saved


@pytest.fixture
def out_dir(tmp_path):
    """Output directory for one CLI invocation."""
    return str(tmp_path / "results")


def run(command, out_dir, *extra):
    return cli_main([command, *SMALL_ARGS, "--output-dir", out_dir, *extra])


class TestParsing:
    """Argument errors and help."""

    def test_missing_command(self):
        """No subcommand is a usage error."""
        assert cli_main([]) == 2

    def test_unknown_policy(self, out_dir):
        """argparse rejects unknown policy names."""
        assert run("evaluate", out_dir, "--policy", "oracle") == 2

    def test_help(self, capsys):
        """--help exits cleanly."""
        assert cli_main(["evaluate", "--help"]) == 0
        assert "--policy" in capsys.readouterr().out


class TestConfiguration:
    """Config resolution through the CLI."""

    def test_show_config(self, capsys):
        """Flags land in the printed configuration."""
        assert cli_main(["show-config", "--seed", "42", "--set", "env.beta=0.3", "--log-level", "ERROR"]) == 0
        out = capsys.readouterr().out
        assert "run.master_seed = 42" in out
        assert "env.beta = 0.3" in out

    def test_flag_beats_set(self, capsys):
        """Dedicated flags win over --set."""
        assert cli_main(["show-config", "--set", "run.n_runs=9", "--runs", "4", "--log-level", "ERROR"]) == 0
        assert "run.n_runs = 4" in capsys.readouterr().out

    def test_show_config_round_trips(self, tmp_path, capsys):
        """The printed text loads back to the same configuration."""
        assert cli_main(["show-config", "--set", "gen.n_sensors=7", "--log-level", "ERROR"]) == 0
        path = tmp_path / "printed.cfg"
        path.write_text(capsys.readouterr().out, encoding="utf-8")
        assert ConfigLoader.load(str(path)).gen.n_sensors == 7

    def test_invalid_value(self, out_dir):
        """Out-of-range values exit with the configuration code."""
        assert run("show-config", out_dir, "--set", "env.beta=-1") == 3

    def test_malformed_override(self, out_dir):
        """--set without '=' is a configuration error."""
        assert run("show-config", out_dir, "--set", "env.beta") == 3

    def test_missing_config_file(self, tmp_path):
        """A missing --config path exits with the configuration code."""
        assert cli_main(["show-config", "--config", str(tmp_path / "absent.cfg")]) == 3


class TestSystemCommands:
    """snapshot and check-stability."""

    def test_snapshot(self, out_dir):
        """The snapshot holds the realization the seed draws."""
        assert run("snapshot", out_dir) == 0
        model, sensors = SnapshotStorage(out_dir).load(os.path.join(out_dir, "system_snapshot.txt"))
        config = ConfigLoader.load(None, {"gen.n_states": "3", "gen.n_sensors": "4", "run.master_seed": "5"})
        system = build_system(config)
        np.testing.assert_array_equal(model.A, system.model.A)
        assert [s.id for s in sensors] == [1, 2, 3, 4]

    def test_check_stability(self, out_dir, capsys):
        """The report is printed as key: value lines."""
        assert run("check-stability", out_dir) == 0
        out = capsys.readouterr().out
        assert "feasible:" in out
        assert "unstable_dim:" in out

    def test_unwritable_output(self, tmp_path):
        """A file in place of the output directory is a storage failure."""
        blocker = tmp_path / "blocker"
        blocker.write_text("x", encoding="utf-8")
        assert run("snapshot", str(blocker)) == 5


class TestEvaluate:
    """evaluate, delay-stats and transcript."""

    def test_evaluate_writes_csvs(self, out_dir):
        """Summary and trace CSVs appear in the output directory."""
        assert run("evaluate", out_dir, "--policy", "idle", "--policy", "random") == 0
        storage = ResultStorage(out_dir)
        summary = storage.read_rows("summary.csv")
        assert [row["policy"] for row in summary] == ["idle", "random"]
        assert all(row["n_runs"] == "2" for row in summary)
        assert len(storage.read_rows("traces.csv")) == 2 * 10

    def test_evaluate_defaults_to_baselines(self, out_dir):
        """Without --policy every baseline runs."""
        assert run("evaluate", out_dir) == 0
        rows = ResultStorage(out_dir).read_rows("summary.csv")
        assert [row["policy"] for row in rows] == ["idle", "random", "greedy_oracle"]

    def test_ppo_needs_checkpoint(self, out_dir):
        """Asking for ppo without a checkpoint is a usage error."""
        assert run("evaluate", out_dir, "--policy", "ppo") == 7

    def test_missing_checkpoint(self, out_dir, tmp_path):
        """A checkpoint path that does not exist exits with the checkpoint code."""
        assert run("evaluate", out_dir, "--checkpoint", str(tmp_path / "none.bin")) == 4

    def test_delay_stats(self, out_dir):
        """One row per sensor."""
        assert run("delay-stats", out_dir, "--policy", "idle") == 0
        rows = ResultStorage(out_dir).read_rows("delay_stats.csv")
        assert [row["sensor"] for row in rows] == ["1", "2", "3", "4"]

    def test_transcript(self, out_dir):
        """One row per step of the chosen run."""
        assert run("transcript", out_dir, "--policy", "greedy", "--run", "1") == 0
        rows = ResultStorage(out_dir).read_rows("transcript_greedy_oracle_run1.csv")
        assert [int(row["k"]) for row in rows] == list(range(1, 11))

    def test_transcript_single_policy(self, out_dir):
        """transcript refuses more than one policy."""
        assert run("transcript", out_dir, "--policy", "idle", "--policy", "random") == 7


class TestTrain:
    """train and evaluating its checkpoint."""

    def test_train_then_evaluate(self, out_dir):
        """A checkpoint from train enables the ppo policy."""
        assert run("train", out_dir, "--total-steps", "20") == 0
        checkpoint = os.path.join(out_dir, "checkpoint.bin")
        actor, critic, header = CheckpointStorage().load(checkpoint)
        assert header["meta"]["master_seed"] == 5
        assert actor.layer_sizes[-1] == 5
        curve = ResultStorage(out_dir).read_rows("learning_curve.csv")
        assert [int(row["env_steps"]) for row in curve] == [10, 20]

        assert run("evaluate", out_dir, "--checkpoint", checkpoint) == 0
        rows = ResultStorage(out_dir).read_rows("summary.csv")
        assert [row["policy"] for row in rows] == ["idle", "random", "greedy_oracle", "ppo"]

    def test_train_custom_checkpoint_path(self, out_dir, tmp_path):
        """--checkpoint chooses where the networks go."""
        target = str(tmp_path / "nets" / "ppo.bin")
        assert run("train", out_dir, "--total-steps", "10", "--checkpoint", target) == 0
        assert os.path.isfile(target)

    def test_divergence_exit_code(self, out_dir):
        """A tripped divergence guard exits with the training code."""
        assert run("train", out_dir, "--total-steps", "10", "--set", "ppo.divergence_threshold=0.0") == 6
