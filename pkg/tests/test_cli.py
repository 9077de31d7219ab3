import csv

import pytest

from cab.cli import figure_config, main
from cab.config import apply_overrides, load_config, parse_bool, parse_values
from cab.errors import ConfigError
from cab.harness import ExperimentConfig
from cab.policies import LEARNING_POLICIES

SMALL = ["--set", "N=5", "--set", "K=3", "--set", "d=2", "--set", "T=10"]


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_ini(tmp_path, text):
    path = tmp_path / "exp.ini"
    path.write_text(text)
    return path


def test_load_config_sections(tmp_path):
    path = write_ini(
        tmp_path,
        "[experiment]\nn_users = 7\nK = 4\nhorizon = 12\nlambda = 0.25\nn_seeds = 3\n"
        "sweep_param = beta\nsweep_values = 1, 2.5\n\n[policy cab-ucb]\nc1 = 2.0\n\n[policy max-match]\n",
    )
    config = load_config(path)
    assert (config.env.n_users, config.env.n_arms, config.env.horizon, config.env.popularity) == (7, 4, 12, 0.25)
    assert config.n_seeds == 3
    assert config.sweep == ("beta", [1, 2.5])
    assert config.policies == {"cab-ucb": {"c1": 2.0}, "max-match": {}}


def test_load_config_defaults_to_all_learning_policies(tmp_path):
    config = load_config(write_ini(tmp_path, "[experiment]\nseed = 4\n"))
    assert list(config.policies) == list(LEARNING_POLICIES)
    assert config.env.seed == 4


@pytest.mark.parametrize(
    "text",
    [
        "[experiment]\nbogus = 1\n",
        "[other]\nx = 1\n",
        "[policy cab-ucb]\nzz = 1\n",
        "[policy cab-ucb]\nc1 = abc\n",
        "[experiment]\nsweep_param = beta\n",
        "[experiment]\nsweep_param = delta\nsweep_values = 1\n",
        "no section header\n",
    ],
)
def test_load_config_rejects(tmp_path, text):
    with pytest.raises(ConfigError):
        load_config(write_ini(tmp_path, text))


def test_apply_overrides_policy_keys():
    config = apply_overrides(ExperimentConfig(policies={"cab-ucb": {}, "fairx": {}}), {"policy.gamma": "0.3"})
    assert config.policies == {"cab-ucb": {"gamma": 0.3}, "fairx": {"gamma": 0.3}}
    assert apply_overrides(ExperimentConfig(), {"normalize_features": "yes"}).env.normalize_features is True


def test_parse_helpers():
    assert parse_values("1, 2,5.5") == [1, 2, 5.5]
    assert parse_bool("Off") is False
    with pytest.raises(ConfigError):
        parse_values("a,b")
    with pytest.raises(ConfigError):
        parse_bool("maybe")


def test_figure_configs():
    assert figure_config("2b").sweep == ("beta", [1.0, 2.0, 5.0, 10.0, 20.0])
    assert figure_config("2c").sweep == ("lambda", [0.0, 0.25, 0.5, 0.75, 1.0])
    assert figure_config("2d").env.popularity == figure_config("2e").env.popularity == 1.0
    a = figure_config("2a")
    assert (a.env.n_users, a.env.n_arms, a.env.horizon, a.env.beta, a.n_seeds) == (50, 10, 500, 5.0, 10)
    assert list(a.policies) == list(LEARNING_POLICIES)


def test_run_missing_file_exits_1(tmp_path, capsys):
    assert main(["run", str(tmp_path / "missing.toml")]) == 1
    assert "configuration error" in capsys.readouterr().err


def test_unknown_flag_exits_1(capsys):
    assert main(["figure", "2a", "--bogus"]) == 1
    assert "usage" in capsys.readouterr().err


def test_bad_set_key_exits_1(tmp_path):
    assert main(["figure", "2a", "--set", "nope=1", "--out", str(tmp_path)]) == 1


def test_runtime_error_exits_2(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    args = ["figure", "2a", "--seeds", "1", "--policies", "random", "--out", str(blocker / "o"), *SMALL]
    assert main(args) == 2


def test_figure_emits_three_csvs(tmp_path):
    assert main(["figure", "2a", "--seeds", "2", "--out", str(tmp_path), *SMALL]) == 0
    for name in ("per_round.csv", "aggregate.csv", "selection.csv"):
        assert (tmp_path / name).exists()
    policies = {r["policy"] for r in rows(tmp_path / "aggregate.csv")}
    assert policies == set(LEARNING_POLICIES) | {"oracle-satisfaction", "oracle-match"}


def test_sweep_command_rows(tmp_path):
    args = ["sweep", "--param", "beta", "--values", "1,2,5,10,20", "--seeds", "1", "--policies", "cab-ucb,max-match"]
    assert main([*args, "--out", str(tmp_path), "--no-per-round", *SMALL]) == 0
    agg = rows(tmp_path / "aggregate.csv")
    for policy in ("cab-ucb", "max-match"):
        assert len([r for r in agg if r["policy"] == policy]) == 5
    assert not (tmp_path / "per_round.csv").exists()


def test_run_command_with_config(tmp_path):
    path = write_ini(tmp_path, "[experiment]\nN = 4\nK = 2\nd = 2\nT = 6\nn_seeds = 2\n\n[policy random]\n")
    out = tmp_path / "out"
    assert main(["run", str(path), "--out", str(out)]) == 0
    assert {r["seed"] for r in rows(out / "per_round.csv")} == {"0", "1"}


def test_outputs_byte_identical_across_invocations(tmp_path):
    for sub in ("a", "b"):
        assert main(["figure", "2a", "--seeds", "2", "--out", str(tmp_path / sub), *SMALL]) == 0
    for name in ("per_round.csv", "aggregate.csv", "selection.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_instance_and_replay(tmp_path):
    inst = tmp_path / "inst.json"
    assert main(["instance", "--out", str(inst), "--seed", "5", *SMALL]) == 0
    out = tmp_path / "replay"
    assert main(["replay", "--instance", str(inst), "--policies", "cab-ucb", "--out", str(out)]) == 0
    per_round = rows(out / "per_round.csv")
    assert {r["seed"] for r in per_round} == {"5"}
    assert len(per_round) == 3 * 10

    # a replay of the saved instance reproduces a fresh run from the same seed
    fresh = tmp_path / "fresh"
    args = ["figure", "2a", "--seeds", "1", "--seed", "5", "--policies", "cab-ucb", "--out", str(fresh), *SMALL]
    assert main(args) == 0
    assert (fresh / "per_round.csv").read_bytes() == (out / "per_round.csv").read_bytes()


def test_replay_rejects_env_overrides_and_bad_files(tmp_path):
    inst = tmp_path / "inst.json"
    assert main(["instance", "--out", str(inst), *SMALL]) == 0
    assert main(["replay", "--instance", str(inst), "--set", "K=5", "--out", str(tmp_path / "o")]) == 1
    assert main(["replay", "--instance", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")]) == 1
