import json
import subprocess
import sys

import numpy as np
import pytest

from graphshrink.cli import (
    EXIT_CONFIG,
    EXIT_DIMENSION,
    EXIT_DRAWS,
    EXIT_MISSING_FILE,
    EXIT_OK,
    EXIT_USAGE,
    main,
)


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--out", str(d), "--side", "4", "--n-train", "12", "--n-test", "6", "--seed", "1",
                 "--beta", "paper-like"]) == EXIT_OK
    return d


def fit_args(sim_dir, out, *extra):
    return ["fit", "--graph", str(sim_dir / "graph.txt"), "--x", str(sim_dir / "X.csv"),
            "--y", str(sim_dir / "y.csv"), "--iters", "40", "--burnin", "10", "--thin", "1", "--seed", "5",
            "--out", str(out), *extra]


def test_simulate_outputs(sim_dir):
    names = {p.name for p in sim_dir.iterdir()}
    assert names >= {"graph.txt", "X.csv", "y.csv", "X_test.csv", "y_test.csv", "beta.csv", "partition.csv", "meta.json"}
    meta = json.loads((sim_dir / "meta.json").read_text())
    assert meta["p"] == 16 and meta["seed"] == 1


def test_fit_deterministic(sim_dir, tmp_path):
    assert main(fit_args(sim_dir, tmp_path / "a")) == EXIT_OK
    assert main(fit_args(sim_dir, tmp_path / "b")) == EXIT_OK
    for name in ("draws.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["n_draws"] == 40 and len(summary["partition"]) == 16


def test_fit_then_summarize(sim_dir, tmp_path, capsys):
    assert main(fit_args(sim_dir, tmp_path / "fit", "--chains", "2")) == EXIT_OK
    code = main(["summarize", "--draws", str(tmp_path / "fit" / "draws.csv"), "--out", str(tmp_path / "s"),
                 "--truth", str(sim_dir / "partition.csv"), "--plot-data"])
    assert code == EXIT_OK
    line = capsys.readouterr().out.strip()
    assert line.startswith("rand_index ")
    ri = float(line.split()[1])
    assert 0.0 <= ri <= 1.0
    s = json.loads((tmp_path / "s" / "summary.json").read_text())
    assert s["rand_index"] == ri and s["n_draws"] == 80
    assert (tmp_path / "s" / "vertex_estimates.csv").read_text().startswith("vertex,label,")


def test_normal_means(tmp_path):
    (tmp_path / "g.txt").write_text("0 1\n1 2\n2 3\n")
    np.savetxt(tmp_path / "y.csv", [0.1, 0.0, 5.0, 5.1])
    code = main(["fit", "--graph", str(tmp_path / "g.txt"), "--y", str(tmp_path / "y.csv"), "--normal-means",
                 "--iters", "30", "--thin", "1", "--out", str(tmp_path / "o")])
    assert code == EXIT_OK
    assert json.loads((tmp_path / "o" / "summary.json").read_text())["n_draws"] == 30


def test_config_file(sim_dir, tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"iters": 20, "thin": 2, "seed": 9}))
    args = ["fit", "--graph", str(sim_dir / "graph.txt"), "--x", str(sim_dir / "X.csv"),
            "--y", str(sim_dir / "y.csv"), "--config", str(tmp_path / "c.json"), "--out", str(tmp_path / "o")]
    assert main(args) == EXIT_OK
    assert json.loads((tmp_path / "o" / "summary.json").read_text())["n_draws"] == 10


def test_bf_curve(tmp_path):
    out = tmp_path / "bf.csv"
    assert main(["bf-curve", "--out", str(out), "--scenario", "balanced_nu5", "--scenario", "7:0.8",
                 "--t-max", "5", "--t-points", "3"]) == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0].startswith("scenario,") and len(lines) == 7


class TestExitCodes:
    def test_missing_file(self, sim_dir, tmp_path):
        args = fit_args(sim_dir, tmp_path / "o")
        args[args.index("--y") + 1] = str(tmp_path / "nope.csv")
        assert main(args) == EXIT_MISSING_FILE
        assert main(["summarize", "--draws", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]) == EXIT_MISSING_FILE

    def test_dimension_mismatch(self, sim_dir, tmp_path):
        np.savetxt(tmp_path / "y.csv", np.ones(5))
        args = fit_args(sim_dir, tmp_path / "o")
        args[args.index("--y") + 1] = str(tmp_path / "y.csv")
        assert main(args) == EXIT_DIMENSION

    def test_graph_size_mismatch(self, sim_dir, tmp_path):
        (tmp_path / "g.txt").write_text("0 1\n")
        args = fit_args(sim_dir, tmp_path / "o")
        args[args.index("--graph") + 1] = str(tmp_path / "g.txt")
        args += ["--p", "3"]
        assert main(args) == EXIT_DIMENSION

    def test_usage(self, sim_dir, tmp_path):
        assert main(fit_args(sim_dir, tmp_path / "o", "--normal-means")) == EXIT_USAGE
        with pytest.raises(SystemExit) as exc:
            main(["fit"])
        assert exc.value.code == EXIT_USAGE

    def test_bad_config(self, sim_dir, tmp_path):
        assert main(fit_args(sim_dir, tmp_path / "o", "--c", "1.5")) == EXIT_CONFIG
        assert main(fit_args(sim_dir, tmp_path / "o", "--thin", "100")) == EXIT_CONFIG
        assert main(fit_args(sim_dir, tmp_path / "o", "--chains", "0")) == EXIT_CONFIG
        (tmp_path / "c.json").write_text('{"nope": 1}')
        assert main(fit_args(sim_dir, tmp_path / "o", "--config", str(tmp_path / "c.json"))) == EXIT_CONFIG
        assert main(["bf-curve", "--out", str(tmp_path / "b.csv"), "--scenario", "bogus"]) == EXIT_CONFIG

    def test_bad_draws(self, tmp_path):
        (tmp_path / "d.csv").write_text("garbage\n")
        assert main(["summarize", "--draws", str(tmp_path / "d.csv"), "--out", str(tmp_path)]) == EXIT_DRAWS


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "graphshrink.cli", "bf-curve", "--out", str(tmp_path / "b.csv"),
                          "--scenario", "balanced_nu10", "--t-points", "2"], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
