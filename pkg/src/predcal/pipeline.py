"""End-to-end tasks: fit, bootstrap, calibrate, build the result table."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .calibration import CalibrationResult, calibrate
from .core import (
    CalibrationSettings,
    ClusteredBinomial,
    ClusteredCounts,
    MixedModelData,
    RandomStream,
    ValidationError,
)
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
from .intervals import (
    beta_binomial_intervals,
    lmm_interval,
    quasi_binomial_intervals,
    quasi_poisson_interval,
)


class TaskKind(str, enum.Enum):
    QUASI_BIN = "quasi_bin"
    BETA_BIN = "beta_bin"
    QUASI_POIS = "quasi_pois"
    LMM_UNSTRUC = "lmm_unstruc"
    LMM_FUTVEC = "lmm_futvec"
    LMM_FUTMAT = "lmm_futmat"

    @property
    def is_lmm(self) -> bool:
        return self.value.startswith("lmm")

    @property
    def is_binomial(self) -> bool:
        return self in (TaskKind.QUASI_BIN, TaskKind.BETA_BIN)


@dataclass(frozen=True)
class TaskSpec:
    kind: TaskKind
    histdat: ClusteredBinomial | ClusteredCounts | MixedModelData
    future: object | None = None
    newdat: pd.DataFrame | None = None
    model: ModelSpec | None = None
    settings: CalibrationSettings = field(default_factory=CalibrationSettings)

    def __post_init__(self):
        object.__setattr__(self, "kind", TaskKind(self.kind))
        if isinstance(self.model, str):
            object.__setattr__(self, "model", parse_formula(self.model))


@dataclass
class ResultTable:
    table: pd.DataFrame
    calibration: CalibrationResult
    fit: object
    intervals: list

    @property
    def quant_calib(self) -> float:
        return self.calibration.delta


def _resolve_future(task: TaskSpec):
    kind, fut, new = task.kind, task.future, task.newdat
    if kind is TaskKind.LMM_FUTVEC:
        if not isinstance(fut, RowSubset):
            raise ValidationError("lmm_futvec needs futvec (a RowSubset)")
        if new is not None and len(new) != fut.size:
            raise ValidationError(
                f"newdat has {len(new)} rows but futvec selects {fut.size}"
            )
        return fut
    if fut is not None and new is not None:
        raise ValidationError("give either the future design or newdat, not both")
    if fut is None and new is None:
        raise ValidationError(f"{kind.value} needs a future design or newdat")
    if kind.is_binomial:
        if new is not None:
            if new.shape[1] < 2:
                raise ValidationError("binomial newdat needs success and failure columns")
            return ClusterSizes(tuple((new.iloc[:, 0] + new.iloc[:, 1]).astype(int)))
        if not isinstance(fut, ClusterSizes):
            raise ValidationError("binomial tasks need future cluster sizes (newsize)")
        return fut
    if kind is TaskKind.QUASI_POIS:
        if new is not None:
            return CountRepeats(len(new))
        if not isinstance(fut, CountRepeats):
            raise ValidationError("quasi_pois needs m (CountRepeats) or newdat")
        return fut
    if kind is TaskKind.LMM_UNSTRUC:
        if new is not None:
            return Unstructured(len(new))
        if not isinstance(fut, Unstructured):
            raise ValidationError("lmm_unstruc needs m (Unstructured) or newdat")
        return fut
    # lmm_futmat
    if new is not None:
        data = MixedModelData(np.zeros(len(new)), {c: tuple(new[c]) for c in _factor_cols(task)})
        return ExplicitMatrices(build_design_matrices(data, task.model))
    if not isinstance(fut, ExplicitMatrices):
        raise ValidationError("lmm_futmat needs design matrices or newdat")
    return ExplicitMatrices(fut.design.aligned(task.model.terms))


def _factor_cols(task):
    cols = []
    for term in task.model.terms:
        for p in term.split(":"):
            if p not in task.newdat.columns:
                raise ValidationError(f"newdat lacks factor column {p!r}")
            if p not in cols:
                cols.append(p)
    return cols


def _fit(task: TaskSpec):
    kind = task.kind
    if kind.is_binomial:
        if not isinstance(task.histdat, ClusteredBinomial):
            raise ValidationError("binomial tasks need ClusteredBinomial history")
        fit_fn = fit_quasi_binomial if kind is TaskKind.QUASI_BIN else fit_beta_binomial
        return fit_fn(task.histdat)
    if kind is TaskKind.QUASI_POIS:
        if not isinstance(task.histdat, ClusteredCounts):
            raise ValidationError("quasi_pois needs ClusteredCounts history")
        return fit_quasi_poisson(task.histdat)
    if not isinstance(task.histdat, MixedModelData) or task.model is None:
        raise ValidationError("mixed-model tasks need MixedModelData and a model formula")
    return fit_random_intercepts(task.histdat, task.model)


def run_task(task: TaskSpec, stream: RandomStream | None = None) -> ResultTable:
    """Fit, calibrate and tabulate one prediction task."""
    future = _resolve_future(task)
    fit = _fit(task)
    settings = task.settings
    cal, _ = calibrate(fit, future, settings, stream)
    delta, alt = cal.delta, settings.alternative
    kind = task.kind
    if kind is TaskKind.QUASI_BIN:
        rows = quasi_binomial_intervals(fit, future.sizes, delta, alt)
    elif kind is TaskKind.BETA_BIN:
        rows = beta_binomial_intervals(fit, future.sizes, delta, alt)
    elif kind is TaskKind.QUASI_POIS:
        rows = quasi_poisson_interval(fit, future.m, delta, alt)
    else:
        rows = lmm_interval(fit, future.size, delta, alt)
    table = _tabulate(task, fit, future, rows, delta)
    return ResultTable(table, cal, fit, rows)


def _tabulate(task, fit, future, rows, delta):
    kind, new = task.kind, task.newdat
    num = pd.DataFrame(
        {
            "quant_calib": delta,
            "pred_se": [r.pred_se for r in rows],
            "lower": [r.lower for r in rows],
            "upper": [r.upper for r in rows],
        }
    )
    if kind.is_binomial:
        head = pd.DataFrame({"total": list(future.sizes), "hist_prob": fit.pi_hat})
        observed = new.iloc[:, 0].to_numpy(float) if new is not None else None
    else:
        est = fit.lambda_hat if kind is TaskKind.QUASI_POIS else fit.mu_hat
        head = pd.DataFrame({"hist_mean": [est] * len(rows)})
        observed = None
        if new is not None:
            if kind is TaskKind.QUASI_POIS:
                observed = new.iloc[:, 0].to_numpy(float)
            elif task.model.response_name in new.columns:
                observed = new[task.model.response_name].to_numpy(float)
        else:
            head.insert(0, "m", future.size)
            head, num = head.iloc[:1], num.iloc[:1]
    table = pd.concat([head.reset_index(drop=True), num.reset_index(drop=True)], axis=1)
    if new is not None:
        table = pd.concat([new.reset_index(drop=True), table], axis=1)
        if observed is not None:
            table["cover"] = (table["lower"] <= observed) & (observed <= table["upper"])
    return table


# convenience wrappers taking plain arrays or data frames ------------------


def _settings(kw):
    return CalibrationSettings(**kw)


def quasi_bin_pi(histdat, newsize=None, newdat=None, **settings) -> ResultTable:
    hist = histdat if isinstance(histdat, ClusteredBinomial) else ClusteredBinomial(
        histdat.iloc[:, 0], histdat.iloc[:, 1]
    )
    fut = ClusterSizes(tuple(np.atleast_1d(newsize))) if newsize is not None else None
    return run_task(TaskSpec(TaskKind.QUASI_BIN, hist, fut, newdat, settings=_settings(settings)))


def beta_bin_pi(histdat, newsize=None, newdat=None, **settings) -> ResultTable:
    hist = histdat if isinstance(histdat, ClusteredBinomial) else ClusteredBinomial(
        histdat.iloc[:, 0], histdat.iloc[:, 1]
    )
    fut = ClusterSizes(tuple(np.atleast_1d(newsize))) if newsize is not None else None
    return run_task(TaskSpec(TaskKind.BETA_BIN, hist, fut, newdat, settings=_settings(settings)))


def quasi_pois_pi(histdat, m=None, newdat=None, **settings) -> ResultTable:
    hist = histdat if isinstance(histdat, ClusteredCounts) else ClusteredCounts(
        np.asarray(histdat).ravel()
    )
    fut = CountRepeats(m) if m is not None else None
    return run_task(TaskSpec(TaskKind.QUASI_POIS, hist, fut, newdat, settings=_settings(settings)))


def _lmm_hist(data, formula):
    spec = parse_formula(formula) if isinstance(formula, str) else formula
    if isinstance(data, pd.DataFrame):
        data = MixedModelData.from_frame(data, spec.response_name)
    return data, spec


def lmm_pi_unstructured(data, formula, m=None, newdat=None, **settings) -> ResultTable:
    hist, spec = _lmm_hist(data, formula)
    fut = Unstructured(m) if m is not None else None
    return run_task(TaskSpec(TaskKind.LMM_UNSTRUC, hist, fut, newdat, spec, _settings(settings)))


def lmm_pi_rows(data, formula, futvec, newdat=None, **settings) -> ResultTable:
    hist, spec = _lmm_hist(data, formula)
    fut = RowSubset(tuple(np.atleast_1d(futvec)))
    return run_task(TaskSpec(TaskKind.LMM_FUTVEC, hist, fut, newdat, spec, _settings(settings)))


def lmm_pi_matrices(data, formula, newdat=None, futmat_list: DesignMatrices | None = None,
                   **settings) -> ResultTable:
    hist, spec = _lmm_hist(data, formula)
    fut = ExplicitMatrices(futmat_list) if futmat_list is not None else None
    return run_task(TaskSpec(TaskKind.LMM_FUTMAT, hist, fut, newdat, spec, _settings(settings)))
