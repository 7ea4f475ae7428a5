"""Bootstrap calibration of the interval coefficient ``delta``.

Replicates are generated once per task and reused for every candidate
``delta``: replicate ``b`` draws a historical-shaped sample, refits the
model to it and pairs the resulting centre and standard error with an
independently drawn future-shaped sample. Replicate ``b`` always consumes
substream ``b`` of the task stream, so the replicate set does not depend on
how the work is split across threads.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    CalibrationSettings,
    FitError,
    RandomStream,
    ValidationError,
)
from .design import ClusterSizes, CountRepeats, ExplicitMatrices, RowSubset, Unstructured
from .fitting import (
    BetaBinomialFit,
    LmmFit,
    QuasiBinomialFit,
    QuasiPoissonFit,
    beta_binomial_batch,
    lmm_refit_batch,
    quasi_binomial_batch,
    quasi_poisson_batch,
)
from .intervals import beta_binomial_se, interval_bounds, quasi_binomial_se, quasi_poisson_se
from .sampling import (
    sample_beta_binomial,
    sample_lmm,
    sample_lmm_single,
    sample_quasi_binomial,
    sample_quasi_poisson,
)

log = logging.getLogger(__name__)

MAX_RETRIES = 100
MIN_NBOOT = 100
CHUNK = 512


@dataclass(frozen=True)
class BootstrapReplicates:
    """``B`` replicates of ``M`` future slots, stored as (B, M) arrays.

    ``lo``/``hi`` give the support of each slot and are used to clamp the
    bootstrap intervals exactly as the final interval is clamped.
    """

    center: np.ndarray
    se: np.ndarray
    y_star: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.center, float))
        s = np.atleast_2d(np.asarray(self.se, float))
        y = np.atleast_2d(np.asarray(self.y_star, float))
        if not (c.shape == s.shape == y.shape):
            raise ValidationError("center, se and y_star must share a (B, M) shape")
        if np.any(s < 0) or np.any(np.isnan(s)):
            raise ValidationError("standard errors must be nonnegative")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "se", s)
        object.__setattr__(self, "y_star", y)
        object.__setattr__(self, "lo", np.broadcast_to(np.asarray(self.lo, float), c.shape[1:]))
        object.__setattr__(self, "hi", np.broadcast_to(np.asarray(self.hi, float), c.shape[1:]))

    @property
    def B(self) -> int:
        return self.center.shape[0]

    @property
    def M(self) -> int:
        return self.center.shape[1]

    def slot(self, m: int) -> "BootstrapReplicates":
        """The replicate set restricted to future slot ``m`` (0-based)."""
        sl = slice(m, m + 1)
        return BootstrapReplicates(
            self.center[:, sl], self.se[:, sl], self.y_star[:, sl], self.lo[sl], self.hi[sl]
        )


@dataclass
class CalibrationResult:
    delta: float
    converged: bool
    psi_at_delta: float
    trace: list = field(default_factory=list)
    warnings: list = field(default_factory=list)


def coverage_at(reps: BootstrapReplicates, delta: float, alternative="both") -> float:
    """Share of replicates whose interval covers every future slot.

    Intervals are closed, so an observation on a bound counts as covered.
    """
    if delta < 0:
        raise ValidationError("delta must be nonnegative")
    lower, upper = interval_bounds(reps.center, reps.se, delta, alternative, reps.lo, reps.hi)
    hit = (reps.y_star >= lower) & (reps.y_star <= upper)
    return float(np.mean(np.all(hit, axis=1)))


def bisect_delta(reps: BootstrapReplicates, settings: CalibrationSettings) -> CalibrationResult:
    """Bisection for the ``delta`` whose bootstrap coverage is ``1 - alpha``.

    The trace starts with the two bracket evaluations (step -1 for
    ``delta_min``, step 0 for ``delta_max``) followed by one entry per
    midpoint.
    """
    target = settings.level
    alt = settings.alternative
    lo, hi = float(settings.delta_min), float(settings.delta_max)
    psi_lo = coverage_at(reps, lo, alt)
    psi_hi = coverage_at(reps, hi, alt)
    trace = [(-1, lo, psi_lo), (0, hi, psi_hi)]
    if psi_hi < target:
        msg = (
            f"coverage at delta_max={hi} is {psi_hi:.4f} < {target}; "
            "increase delta_max"
        )
        log.warning(msg)
        return CalibrationResult(hi, False, psi_hi, trace, [msg])
    if psi_lo > target:
        msg = (
            f"coverage at delta_min={lo} is {psi_lo:.4f} > {target}; "
            "decrease delta_min"
        )
        log.warning(msg)
        return CalibrationResult(lo, False, psi_lo, trace, [msg])
    delta, psi = lo, psi_lo
    for g in range(1, settings.max_bisection_steps + 1):
        delta = 0.5 * (lo + hi)
        psi = coverage_at(reps, delta, alt)
        trace.append((g, delta, psi))
        if abs(target - psi) < settings.tolerance:
            return CalibrationResult(delta, True, psi, trace)
        if psi < target:
            lo = delta
        else:
            hi = delta
    msg = (
        f"bisection did not reach {target} ± {settings.tolerance} in "
        f"{settings.max_bisection_steps} steps (last coverage {psi:.4f}); "
        "consider changing delta_min/delta_max or tolerance"
    )
    log.warning(msg)
    return CalibrationResult(delta, False, psi, trace, [msg])


# replicate generation -------------------------------------------------------


def _family(fit):
    if isinstance(fit, QuasiBinomialFit):
        return "quasi_bin"
    if isinstance(fit, BetaBinomialFit):
        return "beta_bin"
    if isinstance(fit, QuasiPoissonFit):
        return "quasi_pois"
    if isinstance(fit, LmmFit):
        return "lmm"
    raise ValidationError(f"unsupported fit type {type(fit).__name__}")


def _count_draw(family, fit, future, rng):
    if family == "quasi_bin":
        hist = sample_quasi_binomial(fit.sizes, fit.pi_hat, fit.phi_hat, rng, allow_floor=True)
        fut = sample_quasi_binomial(future.sizes, fit.pi_hat, fit.phi_hat, rng, allow_floor=True)
    elif family == "beta_bin":
        hist = sample_beta_binomial(fit.sizes, fit.pi_hat, fit.rho_hat, rng, allow_floor=True)
        fut = sample_beta_binomial(future.sizes, fit.pi_hat, fit.rho_hat, rng, allow_floor=True)
    else:
        hist = sample_quasi_poisson(fit.H, fit.lambda_hat, fit.phi_hat, rng, allow_floor=True)
        fut = sample_quasi_poisson(future.m, fit.lambda_hat, fit.phi_hat, rng, allow_floor=True)
    return hist, fut


def _count_refit(family, fit, future, hist):
    if family == "quasi_bin":
        pi, phi, ok = quasi_binomial_batch(hist, fit.sizes)
        n = np.asarray(future.sizes, float)
        return pi[:, None] * n, quasi_binomial_se(pi[:, None], phi[:, None], fit.N, n), ok
    if family == "beta_bin":
        pi, rho, ok = beta_binomial_batch(hist, fit.sizes)
        n = np.asarray(future.sizes, float)
        return pi[:, None] * n, beta_binomial_se(pi[:, None], rho[:, None], fit.N, n), ok
    lam, phi, ok = quasi_poisson_batch(hist)
    M = future.m
    se = quasi_poisson_se(lam, phi, fit.H)
    return np.repeat(lam[:, None], M, 1), np.repeat(se[:, None], M, 1), ok


def _lmm_future_draw(fit: LmmFit, future, rng):
    mu, s2 = fit.mu_hat, fit.sigma2
    if future.size == 1:
        # every single-row layout gives N(mu, sum of components)
        return np.array([sample_lmm_single(mu, s2, rng)])
    if isinstance(future, Unstructured):
        full = sample_lmm(mu, s2, fit.design, rng)
        return full[rng.choice(fit.design.n_rows, size=future.m, replace=False)]
    if isinstance(future, RowSubset):
        return sample_lmm(mu, s2, fit.design, rng)[future.index]
    return sample_lmm(mu, s2, future.design, rng)


def _lmm_draw(fit, future, rng):
    hist = sample_lmm(fit.mu_hat, fit.sigma2, fit.design, rng)
    return hist, _lmm_future_draw(fit, future, rng)


def _lmm_refit(fit, future, hist):
    mu, var_mu, sig, ok = lmm_refit_batch(hist, fit)
    se = np.sqrt(var_mu + sig.sum(axis=1))
    M = future.size
    return np.repeat(mu[:, None], M, 1), np.repeat(se[:, None], M, 1), ok


def _check_future(family, fit, future):
    if family in ("quasi_bin", "beta_bin"):
        if not isinstance(future, ClusterSizes):
            raise ValidationError("binomial tasks need future cluster sizes")
        return 0.0, np.asarray(future.sizes, float)
    if family == "quasi_pois":
        if not isinstance(future, CountRepeats):
            raise ValidationError("quasi-Poisson tasks need a number of future counts")
        return 0.0, np.inf
    if isinstance(future, Unstructured):
        if future.m > fit.design.n_rows:
            raise ValidationError(
                f"m={future.m} exceeds the {fit.design.n_rows} historical rows"
            )
    elif isinstance(future, RowSubset):
        if max(future.futvec) > fit.design.n_rows:
            raise ValidationError(f"futvec entries must lie in 1..{fit.design.n_rows}")
    elif isinstance(future, ExplicitMatrices):
        if len(future.design.names) != len(fit.design.names):
            raise ValidationError("future design matrices must match the model terms")
    else:
        raise ValidationError("mixed-model tasks need m, futvec or future design matrices")
    return -np.inf, np.inf


def _make_chunk(family, fit, future, stream, b_range):
    draw = _lmm_draw if family == "lmm" else (lambda f, fu, r: _count_draw(family, f, fu, r))
    refit = _lmm_refit if family == "lmm" else (lambda f, fu, h: _count_refit(family, f, fu, h))
    hist, fut = zip(*(draw(fit, future, stream.derive(b).generator()) for b in b_range))
    hist, fut = np.array(hist, dtype=float), np.array(fut, dtype=float)
    center, se, ok = refit(fit, future, hist)
    for i in np.flatnonzero(~ok):
        b = b_range[i]
        for r in range(1, MAX_RETRIES + 1):
            h, y = draw(fit, future, stream.derive(b).derive(r).generator())
            c, s, good = refit(fit, future, np.asarray(h, float)[None])
            if good[0]:
                hist[i], fut[i], center[i], se[i] = h, y, c[0], s[0]
                break
        else:
            raise FitError(
                f"bootstrap replicate {b}: refit failed after {MAX_RETRIES} redraws"
            )
    return center, se, fut


def make_replicates(fit, future, nboot: int, stream: RandomStream, threads: int = 1):
    """Draw ``nboot`` calibration replicates for ``fit`` and the future layout."""
    if nboot < MIN_NBOOT:
        raise ValidationError(f"nboot must be at least {MIN_NBOOT}, got {nboot}")
    family = _family(fit)
    lo, hi = _check_future(family, fit, future)
    chunks = [range(s, min(s + CHUNK, nboot)) for s in range(0, nboot, CHUNK)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda r: _make_chunk(family, fit, future, stream, r), chunks))
    else:
        parts = [_make_chunk(family, fit, future, stream, r) for r in chunks]
    center, se, fut = (np.concatenate(p) for p in zip(*parts))
    return BootstrapReplicates(center, se, fut, lo, hi)


# trace export ---------------------------------------------------------------


def write_trace_csv(result: CalibrationResult, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "delta", "coverage"])
        for step, delta, psi in result.trace:
            w.writerow([step, repr(float(delta)), repr(float(psi))])


def read_trace_csv(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return [(int(r["step"]), float(r["delta"]), float(r["coverage"])) for r in csv.DictReader(fh)]


def trace_svg(result: CalibrationResult, alpha: float, tolerance: float,
              width: int = 480, height: int = 320) -> str:
    """Self-contained SVG of ``coverage - (1 - alpha)`` against ``delta``."""
    pts = [(d, p - (1 - alpha)) for _, d, p in result.trace]
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts] + [tolerance, -tolerance]
    pad = 40
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    x1 = x1 if x1 > x0 else x0 + 1
    y1 = y1 if y1 > y0 else y0 + 1

    def sx(x):
        return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

    def sy(y):
        return height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)

    path = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts)
    dots = "".join(
        f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" fill="black"/>' for x, y in pts
    )
    band = (
        f'<rect x="{pad}" y="{sy(tolerance):.2f}" width="{width - 2 * pad}" '
        f'height="{sy(-tolerance) - sy(tolerance):.2f}" fill="#ddd"/>'
    )
    zero = (
        f'<line x1="{pad}" y1="{sy(0):.2f}" x2="{width - pad}" y2="{sy(0):.2f}" '
        'stroke="grey" stroke-dasharray="4"/>'
    )
    axes = (
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>'
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>'
        f'<text x="{width / 2}" y="{height - 8}" text-anchor="middle" font-size="12">delta</text>'
        f'<text x="12" y="{height / 2}" font-size="12" transform="rotate(-90 12 {height / 2})" '
        'text-anchor="middle">coverage - (1 - alpha)</text>'
        f'<text x="{pad}" y="{height - pad + 14}" font-size="10">{x0:.3g}</text>'
        f'<text x="{width - pad}" y="{height - pad + 14}" font-size="10" text-anchor="end">{x1:.3g}</text>'
    )
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">'
        f"{band}{zero}{axes}"
        f'<polyline points="{path}" fill="none" stroke="black"/>{dots}</svg>\n'
    )


def write_trace_svg(result, path, alpha, tolerance) -> None:
    Path(path).write_text(trace_svg(result, alpha, tolerance), encoding="utf-8")


def calibrate(fit, future, settings: CalibrationSettings, stream: RandomStream | None = None):
    """Replicates plus bisection; returns ``(CalibrationResult, replicates)``."""
    stream = stream if stream is not None else RandomStream(settings.seed)
    reps = make_replicates(fit, future, settings.nboot, stream, settings.threads)
    return bisect_delta(reps, settings), reps
