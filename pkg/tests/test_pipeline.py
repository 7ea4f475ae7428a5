import numpy as np
import pandas as pd
import pytest

from predcal import datasets
from predcal.core import CalibrationSettings, ValidationError
from predcal.design import ClusterSizes, CountRepeats, Unstructured
from predcal.pipeline import (
    TaskKind,
    TaskSpec,
    beta_bin_pi,
    lmm_pi_matrices,
    lmm_pi_rows,
    lmm_pi_unstructured,
    quasi_bin_pi,
    quasi_pois_pi,
    run_task,
)

FAST = dict(nboot=500, seed=1234)
C2 = datasets.C2_FORMULA


def test_quasi_pois_table():
    res = quasi_pois_pi(datasets.qp_dat1()["y"], m=1, **FAST)
    t = res.table
    assert list(t.columns) == ["m", "hist_mean", "quant_calib", "pred_se", "lower", "upper"]
    assert t["hist_mean"].iloc[0] == 48.9
    assert t["pred_se"].iloc[0] == pytest.approx(16.236413123319792)
    assert res.quant_calib == t["quant_calib"].iloc[0]


def test_quasi_pois_newdat_cover_column():
    res = quasi_pois_pi(datasets.qp_dat1(), newdat=datasets.qp_dat2(), **FAST)
    t = res.table
    assert len(t) == 3 and "cover" in t
    assert t["cover"].tolist() == ((t["lower"] <= t["y"]) & (t["y"] <= t["upper"])).tolist()
    assert t["quant_calib"].nunique() == 1


def test_binomial_tables():
    res = quasi_bin_pi(datasets.qb_dat1(), newsize=[40, 50, 60], **FAST)
    t = res.table
    assert t["total"].tolist() == [40, 50, 60]
    assert t["hist_prob"].eq(0.13).all()
    assert np.all((t["lower"] >= 0) & (t["upper"] <= t["total"]))
    res = beta_bin_pi(datasets.qb_dat1(), newdat=datasets.bb_dat2(), **FAST)
    assert res.table["total"].tolist() == [40, 50, 60]
    assert "cover" in res.table


def test_one_sided_binomial_lower_is_zero():
    res = quasi_bin_pi(datasets.qb_dat1(), newsize=50, alternative="upper", **FAST)
    assert res.table["lower"].iloc[0] == 0.0


def test_lmm_variants():
    d1, d3 = datasets.c2_dat1(), datasets.c2_dat3()
    un = lmm_pi_unstructured(d1, C2, m=3, **FAST)
    assert un.table["m"].iloc[0] == 3
    assert un.table["hist_mean"].iloc[0] == pytest.approx(102.3970826, abs=1e-6)
    fv = lmm_pi_rows(d1, C2, futvec=list(datasets.C2_FUTVEC), **FAST)
    assert fv.table["m"].iloc[0] == 8
    fm = lmm_pi_matrices(d1, C2, futmat_list=datasets.c2_dat4_futmat(), **FAST)
    assert fm.table["m"].iloc[0] == 6
    nd = lmm_pi_matrices(d3, C2, newdat=datasets.c2_dat4(), **FAST)
    assert len(nd.table) == 6 and "cover" in nd.table


def test_futvec_and_matching_newdat_agree():
    d3 = datasets.c2_dat3()
    a = lmm_pi_rows(d3, C2, futvec=[1, 2], **FAST)
    b = lmm_pi_rows(d3, C2, futvec=[1, 2], newdat=d3.iloc[:2], **FAST)
    assert a.quant_calib == b.quant_calib
    with pytest.raises(ValidationError, match="futvec selects"):
        lmm_pi_rows(d3, C2, futvec=[1, 2], newdat=d3.iloc[:3], **FAST)


def test_future_specification_rules():
    hist = datasets.as_counts(datasets.qp_dat1())
    s = CalibrationSettings(**FAST)
    with pytest.raises(ValidationError, match="not both"):
        run_task(TaskSpec(TaskKind.QUASI_POIS, hist, CountRepeats(1), datasets.qp_dat2(), settings=s))
    with pytest.raises(ValidationError):
        run_task(TaskSpec(TaskKind.QUASI_POIS, hist, settings=s))
    with pytest.raises(ValidationError):
        run_task(TaskSpec(TaskKind.QUASI_POIS, hist, ClusterSizes([3]), settings=s))
    mixed = datasets.as_mixed(datasets.c2_dat1())
    with pytest.raises(ValidationError):
        run_task(TaskSpec(TaskKind.LMM_FUTVEC, mixed, Unstructured(2), model=C2, settings=s))


def test_same_seed_same_table():
    a = quasi_bin_pi(datasets.qb_dat1(), newsize=50, **FAST).table
    b = quasi_bin_pi(datasets.qb_dat1(), newsize=50, threads=2, **FAST).table
    pd.testing.assert_frame_equal(a, b)


def test_newdat_does_not_change_calibration():
    # observed values only feed the cover column
    a = quasi_pois_pi(datasets.qp_dat1(), m=3, **FAST)
    b = quasi_pois_pi(datasets.qp_dat1(), newdat=datasets.qp_dat2(), **FAST)
    assert a.quant_calib == b.quant_calib


def test_all_rows_futvec_equals_historical_matrices():
    from predcal.design import build_design_matrices, parse_formula

    d3 = datasets.c2_dat3()
    spec = parse_formula(C2)
    dm = build_design_matrices(datasets.as_mixed(d3), spec)
    a = lmm_pi_rows(d3, C2, futvec=list(range(1, 9)), **FAST)
    b = lmm_pi_matrices(d3, C2, futmat_list=dm, **FAST)
    pd.testing.assert_frame_equal(a.table, b.table)
