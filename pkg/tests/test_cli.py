import csv
import subprocess
import sys

import numpy as np
import pytest

from queuelearn.blackwell import PayoffTensor
from queuelearn.cli import main, read_config
from queuelearn.formats import load_schedules, load_tensor, parse_target, save_tensor
from queuelearn.geometry import Box, HalfSpace, NonpositiveOrthant, Singleton
from queuelearn.harness import UsageError


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.mark.parametrize("argv", [
    ["blackwell", "--T", "50", "--reps", "2"],
    ["regret", "--T", "50", "--adversary", "cyclic"],
    ["maxweight", "--T", "100", "--policy", "fmw-log", "--arrivals", "bernoulli:0.3,0.3"],
    ["lindley", "--T", "200"],
    ["admission", "--lam", "0.9", "--horizon", "500", "--L", "inf"],
    ["balance", "--n", "5,10", "--horizon", "50", "--regime", "high_message"],
])
def test_subcommands_succeed(tmp_path, argv):
    out = tmp_path / "o.csv"
    assert main(argv + ["--out", str(out)]) == 0
    assert rows(out) and rows(tmp_path / "o_summary.csv")
    assert list(rows(tmp_path / "o_summary.csv")[0]) == ["config", "metric", "mean", "se", "ci95", "count"]


@pytest.mark.parametrize("argv", [
    [],
    ["teleport"],
    ["regret", "--bogus", "1"],
    ["regret", "--T", "many"],
    ["regret", "--reps", "0"],
    ["blackwell", "--tensor", "/nonexistent/tensor.txt"],
    ["maxweight", "--policy", "psychic"],
    ["maxweight", "--arrivals", "poisson:1"],
    ["blackwell", "--target", "sphere:1"],
])
def test_usage_errors(tmp_path, argv):
    assert main(argv + ["--out", str(tmp_path / "x.csv")] if argv else argv) == 2


def test_runtime_failure_exit_code(tmp_path):
    path = tmp_path / "ones.txt"
    save_tensor(path, PayoffTensor(np.ones((2, 2, 1))))
    code = main(["blackwell", "--tensor", str(path), "--target", "halfspace:1;0", "--T", "10",
                 "--out", str(tmp_path / "x.csv")])
    assert code == 3


def test_config_file_and_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# blackwell defaults\nT = 30\nadversary=cyclic\nreps=2\n")
    out = tmp_path / "a.csv"
    assert main(["blackwell", "--config", str(cfg), "--out", str(out)]) == 0
    assert len(rows(out)) == 30
    assert int(rows(tmp_path / "a_summary.csv")[0]["count"]) == 2
    assert main(["blackwell", "--config", str(cfg), "--T", "12", "--out", str(out)]) == 0
    assert len(rows(out)) == 12
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour=blue\n")
    assert main(["blackwell", "--config", str(bad), "--out", str(out)]) == 2
    assert main(["blackwell", "--config", str(tmp_path / "missing.cfg"), "--out", str(out)]) == 2
    assert read_config(cfg) == {"T": "30", "adversary": "cyclic", "reps": "2"}
    (tmp_path / "junk.cfg").write_text("just words\n")
    with pytest.raises(UsageError):
        read_config(tmp_path / "junk.cfg")


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "queuelearn", "regret", "--T", "20",
                          "--out", str(tmp_path / "m.csv")], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    res = subprocess.run([sys.executable, "-m", "queuelearn", "nope"], capture_output=True, text=True)
    assert res.returncode == 2


def test_tensor_round_trip(tmp_path):
    T = PayoffTensor(np.random.default_rng(0).normal(size=(3, 2, 4)))
    path = tmp_path / "t.txt"
    save_tensor(path, T)
    back = load_tensor(path)
    assert np.array_equal(back.R, T.R)
    path.write_text("2 2 1\n1\n2\n3\n")
    with pytest.raises(ValueError):
        load_tensor(path)


def test_schedule_file(tmp_path):
    path = tmp_path / "s.txt"
    path.write_text("# crossbar\n1 0\n0,1\n")
    assert load_schedules(path).tolist() == [[1, 0], [0, 1]]
    path.write_text("1 0.5\n")
    with pytest.raises(ValueError):
        load_schedules(path)


def test_parse_target():
    T2 = PayoffTensor(np.ones((1, 1, 2)))
    assert isinstance(parse_target("orthant", T2), NonpositiveOrthant)
    assert np.array_equal(parse_target("singleton", T2).point, [0, 0])
    assert np.array_equal(parse_target("singleton:1,2", T2).point, [1, 2])
    h = parse_target("halfspace:1,-1;0.5", T2)
    assert isinstance(h, HalfSpace) and h.offset == 0.5
    b = parse_target("box:-1,-1;1,2", T2)
    assert isinstance(b, Box) and b.hi.tolist() == [1, 2]
    T1 = PayoffTensor(np.array([[1.0, -1.0], [-1.0, 1.0]])[:, :, None])
    v = parse_target("value", T1)
    assert abs(v.offset) < 1e-12
    with pytest.raises(ValueError):
        parse_target("value", T2)
    assert isinstance(parse_target("singleton:0", T1), Singleton)
