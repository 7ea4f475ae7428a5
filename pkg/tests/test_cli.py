import subprocess
import sys

import pandas as pd
import pytest

from predcal.calibration import read_trace_csv
from predcal.cli import main

FORMULA = "y_ijk~(1|a)+(1|b)+(1|a:b)"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_quasi_pois_hist_mean(capsys, fixture_dir):
    code, out, _ = run(capsys, "quasi-pois", "--hist", fixture_dir / "qp_dat1.csv", "--m", 1,
                       "--nboot", 1000, "--seed", 1234)
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "m,hist_mean,quant_calib,pred_se,lower,upper"
    assert lines[1].split(",")[1] == "48.9"


def test_one_sided_lower_prints_zero(capsys, fixture_dir):
    code, out, _ = run(capsys, "quasi-bin", "--hist", fixture_dir / "qb_dat1.csv", "--newsize", 50,
                       "--alternative", "upper", "--nboot", 500)
    assert code == 0
    t = pd.read_csv(pd.io.common.StringIO(out))
    assert t["lower"].iloc[0] == 0


def test_lmm_futmat_six_rows(capsys, fixture_dir, tmp_path):
    out_path = tmp_path / "r.csv"
    code, _, _ = run(capsys, "lmm-futmat", "--hist", fixture_dir / "c2_dat1.csv", "--formula",
                     FORMULA, "--futmat-list", fixture_dir / "fml.json", "--seed", 1234,
                     "--nboot", 500, "--out", out_path)
    assert code == 0
    assert pd.read_csv(out_path)["m"].iloc[0] == 6


def test_table_round_trip_precision(capsys, fixture_dir, tmp_path):
    from predcal import datasets, quasi_bin_pi

    out_path = tmp_path / "r.csv"
    run(capsys, "quasi-bin", "--hist", fixture_dir / "qb_dat1.csv", "--newsize", "40,50",
        "--nboot", 500, "--seed", 3, "--out", out_path)
    back = pd.read_csv(out_path)
    ref = quasi_bin_pi(datasets.qb_dat1(), newsize=[40, 50], nboot=500, seed=3).table
    assert back["quant_calib"].tolist() == ref["quant_calib"].tolist()
    for col in ("pred_se", "lower", "upper"):
        assert back[col].to_numpy() == pytest.approx(ref[col].to_numpy(), rel=1e-5)


def test_trace_files(capsys, fixture_dir, tmp_path):
    trace, svg = tmp_path / "t.csv", tmp_path / "t.svg"
    run(capsys, "quasi-pois", "--hist", fixture_dir / "qp_dat1.csv", "--m", 2, "--nboot", 500,
        "--trace-csv", trace, "--trace-svg", svg)
    rows = read_trace_csv(trace)
    assert rows[0][:2] == (-1, 0.01) and rows[1][:2] == (0, 10.0)
    assert svg.read_text().startswith("<svg")


def test_seed_env_and_flag(capsys, fixture_dir, monkeypatch):
    args = ["quasi-pois", "--hist", fixture_dir / "qp_dat1.csv", "--m", 2, "--nboot", 300]
    monkeypatch.setenv("PREDCAL_SEED", "77")
    _, env_out, _ = run(capsys, *args)
    _, flag_out, _ = run(capsys, *args, "--seed", 77)
    _, other, _ = run(capsys, *args, "--seed", 78)
    assert env_out == flag_out != other
    monkeypatch.setenv("PREDCAL_SEED", "x")
    assert run(capsys, *args)[0] == 2


def test_validation_exit_codes(capsys, fixture_dir, tmp_path):
    code, _, err = run(capsys, "quasi-bin", "--hist", fixture_dir / "qp_dat1.csv", "--newsize", 5)
    assert code == 2 and "--hist" in err
    code, _, err = run(capsys, "quasi-pois", "--hist", tmp_path / "none.csv", "--m", 1)
    assert code == 2 and "not found" in err
    bad = tmp_path / "gap.csv"
    bad.write_text("y\n3\n\n4\n,\n")
    code, _, err = run(capsys, "quasi-pois", "--hist", bad, "--m", 1)
    assert code == 2 and "gap.csv:" in err
    code, _, err = run(capsys, "quasi-pois", "--hist", fixture_dir / "qp_dat1.csv", "--m", 1,
                       "--alpha", 2)
    assert code == 2 and "alpha" in err
    code, _, err = run(capsys, "lmm-futvec", "--hist", fixture_dir / "c2_dat1.csv")
    assert code == 2 and "--formula" in err
    code, _, err = run(capsys, "lmm-unstruc", "--hist", fixture_dir / "c2_dat1.csv",
                       "--formula", "y_ijk~(1|a", "--m", 1)
    assert code == 2 and "offset" in err


def test_strict_non_convergence(capsys, fixture_dir):
    args = ["quasi-pois", "--hist", fixture_dir / "qp_dat1.csv", "--m", 1, "--nboot", 300,
            "--delta-max", 1]
    code, out, err = run(capsys, *args)
    assert code == 0 and "warning" in err and out
    assert run(capsys, *args, "--strict")[0] == 3


def test_sample_subcommand(capsys, fixture_dir):
    code, out, _ = run(capsys, "sample", "beta-binomial", "--n", 10, "--size", 50, "--prob", 0.1,
                       "--rho", 0.06, "--seed", 1)
    t = pd.read_csv(pd.io.common.StringIO(out))
    assert code == 0 and len(t) == 10 and (t.succ + t.fail == 50).all()
    code, out, _ = run(capsys, "sample", "lmm", "--hist", fixture_dir / "c2_dat3.csv",
                       "--formula", FORMULA, "--nboot", 3)
    assert code == 0 and len(pd.read_csv(pd.io.common.StringIO(out))) == 24
    assert run(capsys, "sample", "quasi-poisson", "--lambda", 5)[0] == 2


def test_coverage_sim_subcommand(capsys, tmp_path):
    per = tmp_path / "per.csv"
    code, out, _ = run(capsys, "coverage-sim", "--family", "quasi-pois", "--lambda", 50, "--phi", 3,
                       "--m", 1, "--n-sim", 100, "--nboot", 200, "--per-sim", per)
    assert code == 0
    assert out.splitlines()[0] == "scenario,n_sim,coverage,mc_se,failures"
    assert len(pd.read_csv(per)) == 100


def test_fixtures_subcommand(capsys, tmp_path):
    assert run(capsys, "fixtures", "--dir", tmp_path)[0] == 0
    assert (tmp_path / "fml.json").exists() and (tmp_path / "c2_dat1.csv").exists()


def test_console_entry_point(fixture_dir):
    proc = subprocess.run([sys.executable, "-m", "predcal.cli", "quasi-pois", "--hist",
                           str(fixture_dir / "qp_dat2.csv"), "--m", "1", "--nboot", "200"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("m,hist_mean")
