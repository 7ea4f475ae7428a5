"""Prediction intervals of the form ``y_hat ± delta * pred_se``.

Bounds are clamped to the support of each family: ``[0, n*]`` for binomial
counts, ``[0, inf)`` for Poisson counts, unclamped for Gaussian data. With
a one-sided alternative the omitted side is set to the support limit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Alternative, ValidationError
from .fitting import BetaBinomialFit, LmmFit, QuasiBinomialFit, QuasiPoissonFit


@dataclass(frozen=True)
class IntervalRow:
    m_index: int
    y_hat_star: float
    pred_se: float
    lower: float
    upper: float
    lower_clamped: bool = False
    upper_clamped: bool = False


def interval_bounds(center, se, delta, alternative, lo=-np.inf, hi=np.inf):
    """Vectorised ``(lower, upper)`` after one-sided handling and clamping."""
    alt = Alternative.parse(alternative)
    center = np.asarray(center, dtype=float)
    half = delta * np.asarray(se, dtype=float)
    lower = center - half
    upper = center + half
    if alt is Alternative.UPPER:
        lower = np.full_like(lower, -np.inf)
    elif alt is Alternative.LOWER:
        upper = np.full_like(upper, np.inf)
    return np.maximum(lower, lo), np.minimum(upper, hi)


def _rows(center, se, delta, alt, lo, hi):
    if delta < 0:
        raise ValidationError(f"delta must be nonnegative, got {delta}")
    center, se = np.broadcast_arrays(np.asarray(center, float), np.asarray(se, float))
    lo_b, hi_b = np.broadcast_to(lo, center.shape), np.broadcast_to(hi, center.shape)
    lower, upper = interval_bounds(center, se, delta, alt, lo_b, hi_b)
    raw_lo, raw_hi = center - delta * se, center + delta * se
    alt = Alternative.parse(alt)
    rows = []
    for m in range(center.size):
        rows.append(
            IntervalRow(
                m_index=m + 1,
                y_hat_star=float(center[m]),
                pred_se=float(se[m]),
                lower=float(lower[m]),
                upper=float(upper[m]),
                lower_clamped=bool(alt is Alternative.UPPER or raw_lo[m] < lo_b[m]),
                upper_clamped=bool(alt is Alternative.LOWER or raw_hi[m] > hi_b[m]),
            )
        )
    return rows


def quasi_binomial_se(pi, phi, N, sizes):
    n = np.asarray(sizes, dtype=float)
    return np.sqrt(phi * n * pi * (1 - pi) * (1 + n / N))


def beta_binomial_se(pi, rho, N, sizes):
    n = np.asarray(sizes, dtype=float)
    v = pi * (1 - pi)
    var_y = n * v * (1 + (n - 1) * rho)
    var_hat = n**2 * v / N + (N - 1) / N * n**2 * v * rho
    return np.sqrt(var_y + var_hat)


def quasi_poisson_se(lam, phi, H):
    return np.sqrt(phi * lam * (1 + 1 / H))


def quasi_binomial_intervals(fit: QuasiBinomialFit, sizes, delta, alt="both"):
    n = np.asarray(sizes, dtype=float)
    se = quasi_binomial_se(fit.pi_hat, fit.phi_hat, fit.N, n)
    return _rows(n * fit.pi_hat, se, delta, alt, 0.0, n)


def beta_binomial_intervals(fit: BetaBinomialFit, sizes, delta, alt="both"):
    n = np.asarray(sizes, dtype=float)
    se = beta_binomial_se(fit.pi_hat, fit.rho_hat, fit.N, n)
    return _rows(n * fit.pi_hat, se, delta, alt, 0.0, n)


def quasi_poisson_interval(fit: QuasiPoissonFit, m, delta, alt="both"):
    se = quasi_poisson_se(fit.lambda_hat, fit.phi_hat, fit.H)
    return _rows(np.full(int(m), fit.lambda_hat), se, delta, alt, 0.0, np.inf)


def lmm_interval(fit: LmmFit, m, delta, alt="both"):
    return _rows(np.full(int(m), fit.mu_hat), fit.pred_se, delta, alt, -np.inf, np.inf)
