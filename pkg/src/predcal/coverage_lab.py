"""Monte Carlo check of simultaneous coverage under a known truth.

Each simulation draws fresh historical and future data from the true
model, runs the full task and records whether every future observation
landed inside its interval.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from scipy.stats import norm

from .core import (
    Alternative,
    CalibrationSettings,
    ClusteredBinomial,
    ClusteredCounts,
    MixedModelData,
    PredcalError,
    RandomStream,
    ValidationError,
)
from .design import (
    ExplicitMatrices,
    Unstructured,
    build_design_matrices,
    parse_formula,
)
from .fitting import (
    BetaBinomialFit,
    QuasiBinomialFit,
    QuasiPoissonFit,
)
from .intervals import (
    beta_binomial_se,
    interval_bounds,
    quasi_binomial_se,
    quasi_poisson_se,
)
from .pipeline import TaskKind, TaskSpec, _fit, run_task
from .sampling import (
    sample_beta_binomial,
    sample_lmm,
    sample_quasi_binomial,
    sample_quasi_poisson,
)

MODES = ("calibrated", "fixed", "naive")


@dataclass(frozen=True)
class Truth:
    """True data-generating model plus the historical layout.

    ``params`` keys: quasi_pois ``lam, phi``; quasi_bin ``prob, phi``;
    beta_bin ``prob, rho``; lmm ``mu, sigma2``. Count families use
    ``n_clusters`` (Poisson) or ``sizes`` (binomial); the mixed model uses
    ``layout`` (factor columns) and ``formula``.
    """

    family: str
    params: dict
    n_clusters: int | None = None
    sizes: tuple | None = None
    layout: pd.DataFrame | None = None
    formula: str | None = None


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    truth: Truth
    kind: TaskKind
    future: object
    n_sim: int = 500
    settings: CalibrationSettings = field(
        default_factory=lambda: CalibrationSettings(nboot=2000)
    )
    seed: int = 1
    mode: str = "calibrated"
    fixed_delta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", TaskKind(self.kind))
        fam = self.truth.family
        ok = (
            (fam == "quasi_pois" and self.kind is TaskKind.QUASI_POIS)
            or (fam == "quasi_bin" and self.kind is TaskKind.QUASI_BIN)
            or (fam == "beta_bin" and self.kind is TaskKind.BETA_BIN)
            or (fam == "lmm" and self.kind.is_lmm)
        )
        if not ok:
            raise ValidationError(f"truth family {fam!r} does not match task {self.kind.value}")
        if self.n_sim < 100:
            raise ValidationError("n_sim must be at least 100")
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}")


@dataclass
class CoverageReport:
    scenario: str
    n_sim: int
    coverage: float
    mc_se: float
    failures: int
    log: pd.DataFrame

    def summary_row(self) -> dict:
        return {
            "scenario": self.scenario,
            "n_sim": self.n_sim,
            "coverage": self.coverage,
            "mc_se": self.mc_se,
            "failures": self.failures,
        }


def _draw(spec: ScenarioSpec, rng):
    """Historical data object plus the future observations for one simulation."""
    t, p = spec.truth, spec.truth.params
    fut = spec.future
    if t.family == "quasi_pois":
        hist = sample_quasi_poisson(t.n_clusters, p["lam"], p["phi"], rng)
        new = sample_quasi_poisson(fut.m, p["lam"], p["phi"], rng)
        return ClusteredCounts(hist), new
    if t.family in ("quasi_bin", "beta_bin"):
        sampler = sample_quasi_binomial if t.family == "quasi_bin" else sample_beta_binomial
        key = "phi" if t.family == "quasi_bin" else "rho"
        hist = sampler(t.sizes, p["prob"], p[key], rng)
        new = sampler(fut.sizes, p["prob"], p[key], rng)
        return ClusteredBinomial.from_sizes(hist, t.sizes), new
    model = parse_formula(t.formula)
    data0 = MixedModelData(np.zeros(len(t.layout)), {c: tuple(t.layout[c]) for c in t.layout})
    dm = build_design_matrices(data0, model)
    y = sample_lmm(p["mu"], p["sigma2"], dm, rng)
    if isinstance(fut, ExplicitMatrices):
        new = sample_lmm(p["mu"], p["sigma2"], fut.design.aligned(model.terms), rng)
    else:
        full = sample_lmm(p["mu"], p["sigma2"], dm, rng)
        if isinstance(fut, Unstructured):
            new = full[rng.choice(full.size, fut.m, replace=False)]
        else:
            new = full[fut.index]
    return MixedModelData(y, data0.factors), new


def _naive_bounds(spec, hist):
    """Uncalibrated z-quantile interval ignoring overdispersion."""
    fit = _fit(TaskSpec(spec.kind, hist, spec.future, model=spec.truth.formula,
                        settings=spec.settings))
    if isinstance(fit, QuasiPoissonFit):
        center = np.full(spec.future.m, fit.lambda_hat)
        se = np.sqrt(fit.lambda_hat * (1 + 1 / fit.H))
        return center, se, 0.0, np.inf
    if isinstance(fit, (QuasiBinomialFit, BetaBinomialFit)):
        n = np.asarray(spec.future.sizes, float)
        se = np.sqrt(n * fit.pi_hat * (1 - fit.pi_hat) * (1 + n / fit.N))
        return n * fit.pi_hat, se, 0.0, n
    return np.full(spec.future.size, fit.mu_hat), fit.pred_se, -np.inf, np.inf


def _one(spec: ScenarioSpec, i: int) -> dict:
    s = RandomStream(spec.seed).derive(i)
    hist, new = _draw(spec, s.derive(0).generator())
    settings = replace(spec.settings, seed=s.derive(1).child_seed(), threads=1)
    alt = settings.alternative
    try:
        if spec.mode == "calibrated":
            task = TaskSpec(spec.kind, hist, spec.future, model=spec.truth.formula, settings=settings)
            res = run_task(task)
            lower = np.array([r.lower for r in res.intervals])
            upper = np.array([r.upper for r in res.intervals])
            delta, conv = res.calibration.delta, res.calibration.converged
        elif spec.mode == "naive":
            center, se, lo, hi = _naive_bounds(spec, hist)
            q = 1 - settings.alpha / 2 if alt is Alternative.BOTH else 1 - settings.alpha
            delta, conv = float(norm.ppf(q)), True
        else:
            center, se, lo, hi = _model_bounds(spec, hist)
            delta, conv = spec.fixed_delta, True
        if spec.mode != "calibrated":
            lower, upper = interval_bounds(center, se, delta, alt, lo, hi)
    except PredcalError as exc:
        return {"sim": i, "covered": np.nan, "delta": np.nan, "converged": False,
                "error": f"{type(exc).__name__}: {exc}"}
    covered = bool(np.all((new >= lower) & (new <= upper)))
    return {"sim": i, "covered": covered, "delta": delta, "converged": conv, "error": ""}


def _model_bounds(spec, hist):
    """Model-based centre and standard error (used with a fixed delta)."""
    fit = _fit(TaskSpec(spec.kind, hist, spec.future, model=spec.truth.formula,
                        settings=spec.settings))
    if isinstance(fit, QuasiPoissonFit):
        se = quasi_poisson_se(fit.lambda_hat, fit.phi_hat, fit.H)
        return np.full(spec.future.m, fit.lambda_hat), se, 0.0, np.inf
    if isinstance(fit, QuasiBinomialFit):
        n = np.asarray(spec.future.sizes, float)
        return n * fit.pi_hat, quasi_binomial_se(fit.pi_hat, fit.phi_hat, fit.N, n), 0.0, n
    if isinstance(fit, BetaBinomialFit):
        n = np.asarray(spec.future.sizes, float)
        return n * fit.pi_hat, beta_binomial_se(fit.pi_hat, fit.rho_hat, fit.N, n), 0.0, n
    return np.full(spec.future.size, fit.mu_hat), fit.pred_se, -np.inf, np.inf


def simulate_coverage(spec: ScenarioSpec, threads: int = 1) -> CoverageReport:
    """Empirical simultaneous coverage with its Monte Carlo standard error.

    Simulations whose task raised an error are excluded and counted in
    ``failures``.
    """
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda i: _one(spec, i), range(spec.n_sim)))
    else:
        rows = [_one(spec, i) for i in range(spec.n_sim)]
    log = pd.DataFrame(rows)
    ok = log["error"] == ""
    hits = log.loc[ok, "covered"].astype(bool)
    n = int(ok.sum())
    p = float(hits.mean()) if n else float("nan")
    se = float(np.sqrt(p * (1 - p) / n)) if n else float("nan")
    return CoverageReport(spec.name, spec.n_sim, p, se, int((~ok).sum()), log)


def write_summary_csv(reports, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, ["scenario", "n_sim", "coverage", "mc_se", "failures"],
                           lineterminator="\n")
        w.writeheader()
        for r in reports:
            w.writerow(r.summary_row())
