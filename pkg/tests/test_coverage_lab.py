import pandas as pd
import pytest

from predcal.core import CalibrationSettings, ValidationError
from predcal.coverage_lab import ScenarioSpec, Truth, simulate_coverage, write_summary_csv
from predcal.datasets import C2_FORMULA, c2_dat3
from predcal.design import ClusterSizes, CountRepeats, Unstructured
from predcal.pipeline import TaskKind

QP = Truth("quasi_pois", {"lam": 50.0, "phi": 3.0}, n_clusters=10)
SMALL = CalibrationSettings(nboot=200)


def test_spec_validation():
    with pytest.raises(ValidationError):
        ScenarioSpec("x", QP, TaskKind.QUASI_BIN, ClusterSizes([5]))
    with pytest.raises(ValidationError):
        ScenarioSpec("x", QP, TaskKind.QUASI_POIS, CountRepeats(1), n_sim=10)
    with pytest.raises(ValidationError):
        ScenarioSpec("x", QP, TaskKind.QUASI_POIS, CountRepeats(1), mode="other")


def test_small_run_and_thread_invariance(tmp_path):
    spec = ScenarioSpec("qp", QP, TaskKind.QUASI_POIS, CountRepeats(1), n_sim=100,
                        settings=SMALL, seed=3)
    a = simulate_coverage(spec)
    b = simulate_coverage(spec, threads=4)
    assert a.coverage == b.coverage
    pd.testing.assert_frame_equal(a.log, b.log)
    assert 0.8 <= a.coverage <= 1.0 and a.failures == 0
    path = tmp_path / "s.csv"
    write_summary_csv([a], path)
    assert path.read_text().splitlines()[0] == "scenario,n_sim,coverage,mc_se,failures"


def test_fixed_zero_delta_never_covers():
    spec = ScenarioSpec("qp0", QP, TaskKind.QUASI_POIS, CountRepeats(2), n_sim=100,
                        mode="fixed", fixed_delta=0.0)
    assert simulate_coverage(spec).coverage < 0.1


def test_binomial_and_lmm_truths():
    tb = Truth("beta_bin", {"prob": 0.2, "rho": 0.05}, sizes=(40,) * 8)
    rep = simulate_coverage(ScenarioSpec("bb", tb, TaskKind.BETA_BIN, ClusterSizes([40]),
                                         n_sim=100, mode="naive"))
    assert rep.n_sim == 100
    layout = c2_dat3()[["a", "b"]]
    tl = Truth("lmm", {"mu": 10.0, "sigma2": [1.0, 1.0, 0.5, 1.0]}, layout=layout, formula=C2_FORMULA)
    rep = simulate_coverage(ScenarioSpec("lmm", tl, TaskKind.LMM_UNSTRUC, Unstructured(1),
                                         n_sim=100, mode="fixed", fixed_delta=50.0))
    assert rep.coverage == 1.0
