import csv
import json

import pytest

from metacolloc.cli import main
from metacolloc.network import load_checkpoint

SMALL_TRAIN = ["--features", "16", "--n-train", "40", "--n-test", "10"]
SMALL_SOLVE = ["--n-interior", "60", "--n-boundary", "20", "--n-eval", "100"]


@pytest.fixture(scope="module")
def ckpt(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "ckpt.mcbd"
    argv = ["train", "--hidden", "8", "--epochs", "2", "--tasks", "2", "--seed", "42", "--out", str(path)]
    assert main(argv + SMALL_TRAIN) == 0
    return path


def test_train_writes_checkpoint_and_log(ckpt):
    params = load_checkpoint(ckpt)
    assert params.width == 8
    assert params.metadata["seed"] == 42
    rows = list(csv.DictReader(open(str(ckpt) + ".log.csv")))
    assert [r["epoch"] for r in rows] == ["1", "2"]


def test_solve_prints_json_row(ckpt, capsys):
    argv = ["solve", "--checkpoint", str(ckpt), "--pde", "sinegordon", "--newton-iters", "4", "--precision", "fp64", "--seed", "1"]
    assert main(argv + SMALL_SOLVE) == 0
    row = json.loads(capsys.readouterr().out.strip())
    assert row["pde"] == "sinegordon"
    assert row["K"] == 4
    assert row["seed"] == 1


def test_seed_from_environment(ckpt, capsys, monkeypatch):
    monkeypatch.setenv("METACOLLOC_SEED", "7")
    assert main(["solve", "--checkpoint", str(ckpt), "--pde", "poisson"] + SMALL_SOLVE) == 0
    assert json.loads(capsys.readouterr().out)["seed"] == 7


def test_sweep_frequency_csv(ckpt, tmp_path):
    out = tmp_path / "sweep.csv"
    argv = ["sweep-frequency", "--checkpoint", str(ckpt), "--freqs", "1,2,4,8,16,32,64", "--out", str(out), "--n-fit", "200", "--n-eval", "100"]
    assert main(argv) == 0
    rows = list(csv.DictReader(open(out)))
    assert [json.loads(r["extra"])["omega"] for r in rows] == [1, 2, 4, 8, 16, 32, 64]
    meta = json.loads(open(str(out) + ".meta.json").read())
    assert "target" in meta


@pytest.mark.parametrize(
    "argv",
    [
        ["suite", "--pde", "poisson", "--seed", "0", "--seed", "1"],
        ["ablate", "--pde", "poisson", "--variant", "full", "--variant", "low_only"],
        ["precision", "--pde", "poisson"],
        ["sweep-iterations", "--pde", "kdv", "--k-grid", "1,2"],
        ["geometry", "--pde", "poisson@annulus"],
        ["bench-timing", "--pde", "poisson", "--repeats", "1"],
    ],
)
def test_experiment_subcommands(ckpt, tmp_path, argv):
    out = tmp_path / "rows.csv"
    assert main(argv + ["--checkpoint", str(ckpt), "--out", str(out), "--threads", "1"] + SMALL_SOLVE) == 0
    rows = list(csv.DictReader(open(out)))
    assert rows and all(r["status"] == "ok" for r in rows)


def test_bench3d_needs_matching_dimension(ckpt):
    assert main(["bench3d", "--checkpoint", str(ckpt), "--pde", "poisson3d"] + SMALL_SOLVE) == 1


def test_unknown_subcommand_exits_one(capsys):
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 1
    assert "usage" in capsys.readouterr().err


def test_unknown_flag_exits_one():
    with pytest.raises(SystemExit) as info:
        main(["solve", "--bogus"])
    assert info.value.code == 1


def test_missing_checkpoint_exits_one(tmp_path):
    assert main(["solve", "--checkpoint", str(tmp_path / "nope.mcbd"), "--hidden", "8"] + SMALL_SOLVE) == 1


def test_unknown_problem_exits_one(ckpt):
    assert main(["solve", "--checkpoint", str(ckpt), "--pde", "navier"] + SMALL_SOLVE) == 1
