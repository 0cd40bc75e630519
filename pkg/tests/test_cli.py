import json
import subprocess
import sys

import pytest

from cegal import io as fio
from cegal.cli import EXIT_INFEASIBLE, EXIT_OK, EXIT_UNSAT, EXIT_USAGE, main

FORMULA = 'P<=0.2 [ true U<=64 "unsafe" ]'


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, out


def fields(line):
    return dict(part.split("=", 1) for part in line.split())


@pytest.fixture(scope="module")
def grid(tmp_path_factory):
    d = tmp_path_factory.mktemp("grid")
    assert main(["gridworld", "gen", "--out", str(d / "g.mdp"), "--expert-out", str(d / "e.pol")]) == 0
    assert main(["demo", "--model", str(d / "g.mdp"), "--policy", str(d / "e.pol"), "--count", "2000",
                 "--filter-safe", "--seed", "1", "--out", str(d / "demos.txt")]) == 0
    assert main(["safe", "--model", str(d / "g.mdp"), "--pstar", "0.2", "--out", str(d / "safe.pol")]) == 0
    return d


def test_no_arguments_is_usage_error(capsys):
    assert main([]) == EXIT_USAGE
    assert main(["frobnicate"]) == EXIT_USAGE


def test_help_exits_zero(capsys):
    assert main(["--help"]) == EXIT_OK


def test_check_exit_codes(grid, capsys):
    code, out = run(capsys, "check", "--model", grid / "g.mdp", "--policy", grid / "safe.pol",
                    "--formula", FORMULA)
    assert code == EXIT_OK and fields(out)["verdict"] == "SAT"
    # the preset's expert takes about a 14% risk
    code, out = run(capsys, "check", "--model", grid / "g.mdp", "--policy", grid / "e.pol",
                    "--pstar", "0.1")
    f = fields(out)
    assert code == EXIT_UNSAT and f["verdict"] == "UNSAT"
    assert float(f["probability"]) > 0.1


def test_missing_file_is_usage_error(grid, capsys):
    code, _ = run(capsys, "check", "--model", grid / "nope.mdp", "--policy", grid / "e.pol")
    assert code == EXIT_USAGE


def test_cex_output_parses(grid, capsys, tmp_path):
    code, out = run(capsys, "cex", "--model", grid / "g.mdp", "--policy", grid / "e.pol",
                    "--pstar", "0.1", "--out", tmp_path / "c.txt")
    assert code == EXIT_OK
    paths, total = fio.parse_counterexample((tmp_path / "c.txt").read_text())
    assert total > 0.1 and len(paths) == int(fields(out)["paths"])
    code, _ = run(capsys, "cex", "--model", grid / "g.mdp", "--policy", grid / "safe.pol", "--pstar", "0.2")
    assert code == EXIT_USAGE


def test_infeasible_exit_code(tmp_path, capsys):
    # every demonstration from this chain hits the unsafe state
    (tmp_path / "m.mdp").write_text("MDP 2 1 0.9 0\n0 0 1 1.0\n1 0 1 1.0\nLABEL unsafe 1\n")
    (tmp_path / "p.pol").write_text("0 0\n1 0\n")
    code, _ = run(capsys, "demo", "--model", tmp_path / "m.mdp", "--policy", tmp_path / "p.pol",
                  "--count", "3", "--filter-safe", "--out", tmp_path / "d.txt")
    assert code == EXIT_INFEASIBLE


def test_cegal_pipeline_and_outputs(grid, capsys, tmp_path):
    args = ["cegal", "--model", grid / "g.mdp", "--demos", grid / "demos.txt", "--pstar", "0.2",
            "--init-policy", grid / "safe.pol"]
    code, out = run(capsys, *args, "--out", tmp_path / "a.pol", "--weights-out", tmp_path / "a.w",
                    "--transcript", tmp_path / "a.csv")
    assert code == EXIT_OK
    f = fields(out)
    assert f["verdict"] == "SAT" and f["mu_source"] == "demos"
    settings, rows = fio.load_transcript(tmp_path / "a.csv")
    assert settings["pstar"] == "0.2" and settings["formula"] == FORMULA
    assert rows[0]["iter"] == 0 and len(rows) >= 2
    fio.load_policy(tmp_path / "a.pol")
    assert len(fio.load_weights(tmp_path / "a.w")) == 4

    code, _ = run(capsys, "export-rewardmap", "--model", grid / "g.mdp", "--weights", tmp_path / "a.w",
                  "--csv", tmp_path / "r.csv", "--pgm", tmp_path / "r.pgm")
    assert code == EXIT_OK
    assert fio.parse_reward_csv((tmp_path / "r.csv").read_text()).shape == (8, 8)
    assert fio.parse_pgm((tmp_path / "r.pgm").read_text()).shape == (8, 8)


def test_byte_identical_reruns(grid, capsys, tmp_path):
    outs = []
    for tag in ("a", "b"):
        d = tmp_path / tag
        d.mkdir()
        main(["gridworld", "gen", "--preset", "random", "--seed", "3", "--out", str(d / "g.mdp"),
              "--expert-out", str(d / "e.pol")])
        main(["demo", "--model", str(d / "g.mdp"), "--policy", str(d / "e.pol"), "--count", "300",
              "--seed", "5", "--out", str(d / "d.txt")])
        main(["cegal", "--model", str(grid / "g.mdp"), "--demos", str(grid / "demos.txt"),
              "--init-policy", str(grid / "safe.pol"), "--max-iters", "5", "--out", str(d / "c.pol"),
              "--transcript", str(d / "t.csv")])
        outs.append([(d / n).read_bytes() for n in ("g.mdp", "e.pol", "d.txt", "c.pol", "t.csv")])
    capsys.readouterr()
    assert outs[0] == outs[1]


def test_initial_policy_close_exits_immediately(grid, capsys, tmp_path):
    code, out = run(capsys, "cegal", "--model", grid / "g.mdp", "--expert-policy", grid / "safe.pol",
                    "--init-policy", grid / "safe.pol", "--out", tmp_path / "x.pol")
    assert code == EXIT_OK
    assert fields(out)["reason"] == "InitialPolicyClose"


def test_config_precedence(grid, capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"pstar": 0.3, "max_iters": 4, "epsilon": 1.0}))
    base = ["cegal", "--model", grid / "g.mdp", "--expert-policy", grid / "e.pol",
            "--init-policy", grid / "safe.pol", "--config", cfg, "--out", tmp_path / "p.pol",
            "--transcript", tmp_path / "t.csv"]
    run(capsys, *base)
    settings, _ = fio.load_transcript(tmp_path / "t.csv")
    assert (settings["pstar"], settings["max_iters"], settings["epsilon"]) == ("0.3", "4", "1.0")
    assert settings["alpha"] == "0.5"  # default
    run(capsys, *base, "--pstar", "0.25")
    settings, _ = fio.load_transcript(tmp_path / "t.csv")
    assert settings["pstar"] == "0.25"
    cfg.write_text(json.dumps({"bogus": 1}))
    code, _ = run(capsys, *base)
    assert code == EXIT_USAGE


def test_al_with_counterexample(grid, capsys, tmp_path):
    run(capsys, "cex", "--model", grid / "g.mdp", "--policy", grid / "e.pol", "--pstar", "0.1",
        "--out", tmp_path / "c.txt")
    code, out = run(capsys, "al", "--model", grid / "g.mdp", "--expert-policy", grid / "e.pol",
                    "--init-policy", grid / "safe.pol", "--counterexample", tmp_path / "c.txt",
                    "--k", "0.5", "--out", tmp_path / "al.pol")
    assert code == EXIT_OK
    assert "reason=" in out


def test_mountaincar_gen(tmp_path, capsys):
    code, out = run(capsys, "mountaincar", "gen", "--n-pos", "8", "--n-vel", "6", "--samples", "5",
                    "--out", tmp_path / "mc.mdp", "--expert-out", tmp_path / "mc.pol")
    assert code == EXIT_OK and fields(out)["states"] == "48"
    mdp, feats = fio.load_mdp(tmp_path / "mc.mdp")
    assert mdp.n_actions == 3 and feats.k == 20


def test_console_module_entry(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "cegal.cli", "gridworld", "gen", "--out",
                           str(tmp_path / "g.mdp")], capture_output=True, text=True)
    assert proc.returncode == 0
    assert fields(proc.stdout.strip())["states"] == "64"
