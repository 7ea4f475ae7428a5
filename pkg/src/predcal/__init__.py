"""Bootstrap-calibrated prediction intervals for clustered data.

The interval for a future observation is ``y_hat ± delta * pred_se`` where
``delta`` is tuned on parametric bootstrap replicates until the simulated
simultaneous coverage matches ``1 - alpha``.

>>> import predcal
>>> res = predcal.quasi_pois_pi(predcal.datasets.qp_dat1()["y"], m=1, nboot=500, seed=1)
>>> float(res.table["hist_mean"].iloc[0])
48.9
"""

from . import datasets
from .calibration import (
    BootstrapReplicates,
    CalibrationResult,
    bisect_delta,
    calibrate,
    coverage_at,
    make_replicates,
)
from .core import (
    Alternative,
    CalibrationSettings,
    ClusteredBinomial,
    ClusteredCounts,
    ConvergenceError,
    FitError,
    MixedModelData,
    ParameterRangeError,
    PredcalError,
    RandomStream,
    ValidationError,
)
from .coverage_lab import CoverageReport, ScenarioSpec, Truth, simulate_coverage
from .design import (
    ClusterSizes,
    CountRepeats,
    DesignMatrices,
    ExplicitMatrices,
    ModelSpec,
    RowSubset,
    Unstructured,
    build_design_matrices,
    parse_formula,
)
from .fitting import (
    fit_beta_binomial,
    fit_quasi_binomial,
    fit_quasi_poisson,
    fit_random_intercepts,
)
from .pipeline import (
    ResultTable,
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

__version__ = "0.1.0"

__all__ = [
    "datasets",
    "BootstrapReplicates",
    "CalibrationResult",
    "bisect_delta",
    "calibrate",
    "coverage_at",
    "make_replicates",
    "Alternative",
    "CalibrationSettings",
    "ClusteredBinomial",
    "ClusteredCounts",
    "ConvergenceError",
    "FitError",
    "MixedModelData",
    "ParameterRangeError",
    "PredcalError",
    "RandomStream",
    "ValidationError",
    "CoverageReport",
    "ScenarioSpec",
    "Truth",
    "simulate_coverage",
    "ClusterSizes",
    "CountRepeats",
    "DesignMatrices",
    "ExplicitMatrices",
    "ModelSpec",
    "RowSubset",
    "Unstructured",
    "build_design_matrices",
    "parse_formula",
    "fit_beta_binomial",
    "fit_quasi_binomial",
    "fit_quasi_poisson",
    "fit_random_intercepts",
    "ResultTable",
    "TaskKind",
    "TaskSpec",
    "beta_bin_pi",
    "lmm_pi_matrices",
    "lmm_pi_rows",
    "lmm_pi_unstructured",
    "quasi_bin_pi",
    "quasi_pois_pi",
    "run_task",
]
