import io
import math
import subprocess
import sys

import numpy as np
import pytest

from rsmdesign.cli import main, parse_number
from rsmdesign.criteria import efficiency_table
from rsmdesign.data import example1_designs, example1_model, example1_region, fixture_path
from rsmdesign.model import read_design


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def data_lines(text):
    return [ln for ln in text.splitlines() if ln and not ln.startswith("#")]


def test_parse_number():
    assert parse_number("sqrt(5)") == math.sqrt(5)
    assert parse_number("2.5") == 2.5
    with pytest.raises(ValueError):
        parse_number("five")


def test_evaluate_single_design_is_fully_efficient(capsys):
    code, out, _ = run(["evaluate", "--config", fixture_path("example1.yaml"), fixture_path("example1_design5.csv")], capsys)
    assert code == 0
    header, row = data_lines(out)
    effs = [float(v) for h, v in zip(header.split(","), row.split(",")) if h.startswith("eff_")]
    assert effs and all(e == pytest.approx(100.0) for e in effs)


def test_evaluate_text_and_reference(capsys):
    files = [fixture_path(f"example1_design{k}.csv") for k in (4, 6)]
    code, out, _ = run(["evaluate", "--config", fixture_path("example1.yaml"), "--format", "text", *files], capsys)
    assert code == 0 and "I_D" in out
    code, _, err = run(["evaluate", "--config", fixture_path("example1.yaml"), "--reference", "XX=1", *files], capsys)
    assert code == 2 and "reference" in err


def test_optimize_example_config(tmp_path, capsys):
    out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
    base = ["optimize", fixture_path("example1.yaml"), "--starts", "20"]
    assert run(base + ["-o", out1], capsys)[0] == 0
    assert run(base + ["-o", out2, "--workers", "2"], capsys)[0] == 0
    assert out1.read_bytes() == out2.read_bytes()

    model, region = example1_model(), example1_region()
    found = read_design(out1, name="found")
    designs = dict(example1_designs())
    designs["found"] = found
    table = efficiency_table(designs, model, region)
    for name in ("DPS", "ID"):
        assert table.efficiency("found", name) >= table.efficiency(8, name) - 0.5


def test_optimize_to_stdout(capsys):
    code, out, err = run(["optimize", "--q", "2", "--n", "9", "--kappa", "DS=1", "--starts", "3"], capsys)
    assert code == 0
    assert len(data_lines(out)) == 1 + 9
    assert "criterion value" in err


def test_kappas_must_sum_to_one(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("q: 2\nn: 9\nregion: {kind: cube}\ncriterion: {kappas: {k0: 0.9}}\n")
    code, _, err = run(["optimize", cfg, "--starts", "2"], capsys)
    assert code == 2 and "kappa" in err.lower()


def test_too_few_runs_exit_code(capsys):
    code, _, err = run(["optimize", "--q", "3", "--n", "8", "--kappa", "k0=1", "--starts", "2"], capsys)
    assert code == 3 and "infeasible" in err


def test_interval_without_pure_error_exit_code(capsys):
    code, _, err = run(
        ["graph", "--config", fixture_path("example2.yaml"), fixture_path("example2_design1.csv"), "--interval", "0.05"],
        capsys,
    )
    assert code == 4


def test_unreadable_design_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("x1,x2\n1,oops\n")
    assert run(["evaluate", bad], capsys)[0] == 2
    assert run(["evaluate", tmp_path / "missing.csv"], capsys)[0] == 2


def test_bad_yaml_exit_code(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("q: [3\n")
    assert run(["optimize", cfg], capsys)[0] == 2
    cfg.write_text("q: 3\nn: 20\nregion: {kind: torus}\n")
    assert run(["optimize", cfg], capsys)[0] == 2


def test_argparse_errors_exit_two(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["graph"])
    assert exc.value.code == 2


def test_graph_intercept_only_is_flat(capsys):
    code, out, _ = run(
        ["graph", "--config", fixture_path("example1.yaml"), fixture_path("example1_design4.csv"),
         "--intercept-only", "--n-radii", "6", "--shell-samples", "500"],
        capsys,
    )
    assert code == 0
    rows = data_lines(out)
    assert rows[0] == "x,min,mean,max"
    vals = [float(v) for r in rows[1:] for v in r.split(",")[1:4:2]]
    assert np.allclose(vals, 1 / 26, rtol=1e-9)


def test_graph_interval_multiplies_by_f_quantile(capsys):
    # design 5 has 12 pure-error df; F(1, 12; 0.95) = 4.7472
    args = ["graph", "--config", fixture_path("example1.yaml"), fixture_path("example1_design5.csv"),
            "--n-radii", "3", "--shell-samples", "500"]
    _, plain, _ = run(args, capsys)
    _, wide, _ = run(args + ["--interval", "0.05"], capsys)
    p = np.array([[float(v) for v in r.split(",")[1:4:2]] for r in data_lines(plain)[1:]])
    w = np.array([[float(v) for v in r.split(",")[1:4:2]] for r in data_lines(wide)[1:]])
    assert np.allclose(w / p, 4.7472, atol=5e-5)


def test_graph_fds(capsys):
    code, out, _ = run(
        ["graph", fixture_path("example1_design8.csv"), "--variant", "fds", "--n-samples", "99"], capsys
    )
    assert code == 0
    rows = data_lines(out)
    assert rows[0] == "fraction,value" and len(rows) == 100
    vals = [float(r.split(",")[1]) for r in rows[1:]]
    assert vals == sorted(vals)


def test_candidates(capsys):
    code, out, _ = run(["candidates", "--q", "3", "--region", "cube"], capsys)
    assert code == 0
    assert len(data_lines(out)) == 1 + 27
    code, out, _ = run(["candidates", "--q", "2", "--region", "sphere"], capsys)
    pts = np.loadtxt(io.StringIO("\n".join(data_lines(out)[1:])), delimiter=",")
    norms = np.linalg.norm(pts, axis=1)
    assert np.allclose(norms[norms > 0], math.sqrt(2), rtol=0, atol=1e-9)


def test_verify_ccd_small(capsys):
    code, out, _ = run(["verify-ccd", "--q", "3", "--n", "18", "--starts", "10", "--seed", "1"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "q,n,centers,ccd_value,best_value,gap,verdict"
    assert lines[1].startswith("3,18,4,") and lines[1].endswith(",not improved upon")


def test_verify_ccd_bad_range(capsys):
    assert run(["verify-ccd", "--q", "3", "--n", "20-16"], capsys)[0] == 2
    assert run(["verify-ccd", "--q", "3", "--n", "10"], capsys)[0] == 2


def test_console_script_help():
    proc = subprocess.run([sys.executable, "-m", "rsmdesign.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for cmd in ("optimize", "evaluate", "graph", "verify-ccd", "candidates"):
        assert cmd in proc.stdout
