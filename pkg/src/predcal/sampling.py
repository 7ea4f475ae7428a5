"""Generators for overdispersed binomial, overdispersed Poisson and
random-intercept Gaussian data.

Every sampler takes a :class:`numpy.random.Generator` (usually obtained
from :meth:`predcal.core.RandomStream.generator`). Beta variates are built
from two gamma variates, so only gamma, normal, binomial and Poisson
primitives are drawn from numpy.

Gamma parameters are shape/rate throughout: ``Gamma(a, b)`` has mean
``a / b``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ParameterRangeError, ValidationError
from .design import DesignMatrices

RHO_FLOOR = 1e-9
PHI_FLOOR = 1.0 + 1e-9


@dataclass(frozen=True)
class OverdispersionParams:
    """Mixing-distribution parameters implied by (prob, rho) or (lambda, phi)."""

    a: np.ndarray | float
    b: np.ndarray | float

    @classmethod
    def beta_binomial(cls, prob, rho):
        total = (1.0 - rho) / rho
        a = prob * total
        return cls(a, total - a)

    @classmethod
    def quasi_binomial(cls, prob, phi, sizes):
        total = (phi - np.asarray(sizes, dtype=float)) / (1.0 - phi)
        a = prob * total
        return cls(a, total - a)

    @classmethod
    def quasi_poisson(cls, lam, phi):
        kappa = (phi - 1.0) / lam
        return cls(1.0 / kappa, 1.0 / (kappa * lam))


def _sizes(sizes):
    n = np.asarray(sizes)
    if n.ndim != 1 or n.size < 1:
        raise ValidationError("sizes must be a non-empty vector")
    if not np.all(n == np.round(n)) or np.any(n < 1):
        raise ValidationError("cluster sizes must be integers >= 1")
    return n.astype(np.int64)


def _check_prob(prob):
    if not 0 < prob < 1:
        raise ParameterRangeError(f"prob must lie in (0, 1), got {prob}")


def beta_variates(a, b, rng: np.random.Generator) -> np.ndarray:
    """Beta(a, b) as G1 / (G1 + G2) with independent unit-rate gammas."""
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    g1 = rng.standard_gamma(a)
    g2 = rng.standard_gamma(b)
    tot = g1 + g2
    out = np.empty(a.shape)
    ok = tot > 0
    out[ok] = g1[ok] / tot[ok]
    # both gammas underflow for tiny shapes; the beta then sits on {0, 1}
    if not np.all(ok):
        u = rng.random(a.shape)
        out[~ok] = (u < a / (a + b))[~ok].astype(float)
    return out


def sample_beta_binomial(sizes, prob, rho, rng, allow_floor=False) -> np.ndarray:
    """Beta-binomial counts with mean ``n*prob`` and intraclass correlation ``rho``."""
    n = _sizes(sizes)
    _check_prob(prob)
    if allow_floor:
        rho = min(max(rho, RHO_FLOOR), 1.0 - RHO_FLOOR)
    if not 0 < rho < 1:
        raise ParameterRangeError(f"rho must lie in (0, 1), got {rho}")
    par = OverdispersionParams.beta_binomial(prob, rho)
    pi = beta_variates(np.full(n.size, par.a), np.full(n.size, par.b), rng)
    return rng.binomial(n, pi)


def sample_quasi_binomial(sizes, prob, phi, rng, allow_floor=False) -> np.ndarray:
    """Binomial counts whose variance is ``phi * n * prob * (1 - prob)``.

    Only possible for ``1 < phi < n_i`` in every cluster. With
    ``allow_floor`` the dispersion is pushed into that range per cluster;
    clusters of size 1 are then plain Bernoulli draws.
    """
    n = _sizes(sizes)
    _check_prob(prob)
    if allow_floor:
        phi_i = np.minimum(max(phi, PHI_FLOOR), n * (1.0 - 1e-9))
    else:
        if not phi > 1:
            raise ParameterRangeError(f"phi must exceed 1, got {phi}")
        if np.any(phi >= n):
            raise ParameterRangeError(
                f"phi must be smaller than every cluster size, got phi={phi}, "
                f"min size={n.min()}"
            )
        phi_i = np.full(n.size, float(phi))
    multi = n > 1
    total = np.ones(n.size)
    total[multi] = (phi_i[multi] - n[multi]) / (1.0 - phi_i[multi])
    a = prob * total
    pi = beta_variates(a, total - a, rng)
    pi[~multi] = prob
    return rng.binomial(n, pi)


def sample_quasi_poisson(n_clusters, lam, phi, rng, allow_floor=False) -> np.ndarray:
    """Gamma-Poisson counts with mean ``lam`` and variance ``phi * lam``."""
    if int(n_clusters) != n_clusters or n_clusters < 1:
        raise ValidationError("number of clusters must be a positive integer")
    if not lam > 0:
        raise ParameterRangeError(f"lambda must be positive, got {lam}")
    if allow_floor:
        phi = max(phi, PHI_FLOOR)
    if not phi > 1:
        raise ParameterRangeError(f"phi must exceed 1, got {phi}")
    par = OverdispersionParams.quasi_poisson(lam, phi)
    lam_i = rng.standard_gamma(np.full(int(n_clusters), par.a)) / par.b
    return rng.poisson(lam_i)


def sample_lmm(mu, sigma2, dm: DesignMatrices, rng) -> np.ndarray:
    """One draw of ``1 mu + sum_c Z_c U_c + e`` on the layout ``dm``.

    ``sigma2`` holds one variance per term of ``dm`` followed by the
    residual variance.
    """
    s2 = np.asarray(sigma2, dtype=float)
    if s2.shape != (len(dm.names) + 1,):
        raise ValidationError(
            f"need {len(dm.names) + 1} variance components, got {s2.size}"
        )
    if np.any(s2 < 0) or not np.all(np.isfinite(s2)):
        raise ParameterRangeError("variance components must be nonnegative")
    y = np.full(dm.n_rows, float(mu))
    for z, s in zip(dm.matrices, s2[:-1]):
        u = rng.standard_normal(z.shape[1]) * np.sqrt(s)
        y += z @ u
    y += rng.standard_normal(dm.n_rows) * np.sqrt(s2[-1])
    return y


def sample_lmm_single(mu, sigma2, rng) -> float:
    """One observation from a single-row layout (every term has one level)."""
    s2 = np.asarray(sigma2, dtype=float)
    if np.any(s2 < 0):
        raise ParameterRangeError("variance components must be nonnegative")
    return float(mu + rng.standard_normal(s2.size) @ np.sqrt(s2))
