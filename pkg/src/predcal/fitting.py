"""Parameter estimation for the historical data.

Count models use moment estimators (Pearson dispersion over ``H - 1``
residual degrees of freedom, one-way ANOVA intraclass correlation).
Random-intercept models are fitted by REML. The ``*_batch`` functions
apply the same estimators to a stack of bootstrap samples at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .core import (
    ClusteredBinomial,
    ClusteredCounts,
    ConvergenceError,
    FitError,
    MixedModelData,
)
from .design import DesignMatrices, ModelSpec, build_design_matrices

RHO_BOUNDS = (1e-6, 1.0 - 1e-6)
RESIDUAL_FLOOR = 1e-10


@dataclass(frozen=True)
class QuasiBinomialFit:
    pi_hat: float
    phi_hat: float
    sizes: np.ndarray

    @property
    def N(self) -> int:
        return int(np.sum(self.sizes))

    @property
    def H(self) -> int:
        return int(np.size(self.sizes))


@dataclass(frozen=True)
class BetaBinomialFit:
    pi_hat: float
    rho_hat: float
    sizes: np.ndarray

    @property
    def N(self) -> int:
        return int(np.sum(self.sizes))

    @property
    def H(self) -> int:
        return int(np.size(self.sizes))


@dataclass(frozen=True)
class QuasiPoissonFit:
    lambda_hat: float
    phi_hat: float
    H: int


@dataclass(frozen=True)
class LmmFit:
    mu_hat: float
    var_mu_hat: float
    sigma2: np.ndarray
    reml_value: float
    spec: ModelSpec
    design: DesignMatrices
    converged: bool = True

    @property
    def pred_se(self) -> float:
        return float(np.sqrt(self.var_mu_hat + np.sum(self.sigma2)))

    @property
    def components(self) -> dict:
        names = list(self.spec.terms) + ["Residual"]
        return dict(zip(names, self.sigma2.tolist()))


# binomial ----------------------------------------------------------------


def quasi_binomial_batch(succ, sizes):
    """Row-wise ``(pi_hat, phi_hat, ok)`` for successes of shape (B, H)."""
    succ = np.atleast_2d(np.asarray(succ, dtype=float))
    n = np.asarray(sizes, dtype=float)
    H = n.size
    pi = succ.sum(axis=1) / n.sum()
    ok = (pi > 0) & (pi < 1)
    pis = np.where(ok, pi, 0.5)[:, None]
    pearson = np.sum((succ - n * pis) ** 2 / (n * pis * (1 - pis)), axis=1)
    phi = np.maximum(1.0, pearson / (H - 1))
    return pi, np.where(ok, phi, np.nan), ok


def beta_binomial_batch(succ, sizes):
    """Row-wise ``(pi_hat, rho_hat, ok)`` using the ANOVA intraclass estimator."""
    succ = np.atleast_2d(np.asarray(succ, dtype=float))
    n = np.asarray(sizes, dtype=float)
    H, N = n.size, n.sum()
    pi = succ.sum(axis=1) / N
    ok = (pi > 0) & (pi < 1)
    p = succ / n
    msb = np.sum(n * (p - pi[:, None]) ** 2, axis=1) / (H - 1)
    msw = np.sum(n * p * (1 - p), axis=1) / (N - H) if N > H else np.zeros_like(pi)
    n0 = (N - np.sum(n**2) / N) / (H - 1)
    denom = msb + (n0 - 1) * msw
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = np.where(denom > 0, (msb - msw) / denom, RHO_BOUNDS[0])
    rho = np.clip(rho, *RHO_BOUNDS)
    return pi, np.where(ok, rho, np.nan), ok


def _check_binomial(data: ClusteredBinomial):
    total = data.successes.sum()
    if total == 0 or total == data.N:
        raise FitError("dispersion undefined at boundary: all successes or all failures")


def fit_quasi_binomial(data: ClusteredBinomial) -> QuasiBinomialFit:
    _check_binomial(data)
    pi, phi, _ = quasi_binomial_batch(data.successes, data.sizes)
    return QuasiBinomialFit(float(pi[0]), float(phi[0]), data.sizes.copy())


def fit_beta_binomial(data: ClusteredBinomial) -> BetaBinomialFit:
    _check_binomial(data)
    pi, rho, _ = beta_binomial_batch(data.successes, data.sizes)
    return BetaBinomialFit(float(pi[0]), float(rho[0]), data.sizes.copy())


# Poisson -----------------------------------------------------------------


def quasi_poisson_batch(counts):
    """Row-wise ``(lambda_hat, phi_hat, ok)`` for counts of shape (B, H)."""
    y = np.atleast_2d(np.asarray(counts, dtype=float))
    H = y.shape[1]
    lam = y.mean(axis=1)
    ok = lam > 0
    lams = np.where(ok, lam, 1.0)
    phi = np.sum((y - lams[:, None]) ** 2, axis=1) / lams / (H - 1)
    return lam, np.where(ok, np.maximum(1.0, phi), np.nan), ok


def fit_quasi_poisson(data: ClusteredCounts) -> QuasiPoissonFit:
    if data.counts.sum() == 0:
        raise FitError("all counts are zero, dispersion undefined")
    lam, phi, _ = quasi_poisson_batch(data.counts)
    return QuasiPoissonFit(float(lam[0]), float(phi[0]), data.H)


# REML --------------------------------------------------------------------

_LOG2PI = np.log(2 * np.pi)


def _gls_parts(V, Y):
    """Batched pieces of the restricted likelihood for V (B,N,N), Y (B,N)."""
    L = np.linalg.cholesky(V)
    logdet = 2.0 * np.log(np.diagonal(L, axis1=1, axis2=2)).sum(axis=1)
    Vi = np.linalg.inv(V)
    Vi = 0.5 * (Vi + np.swapaxes(Vi, 1, 2))
    w = Vi.sum(axis=2)
    q = w.sum(axis=1)
    Viy = np.einsum("bij,bj->bi", Vi, Y)
    wy = np.einsum("bi,bi->b", w, Y)
    yPy = np.einsum("bi,bi->b", Y, Viy) - wy**2 / q
    ll = -0.5 * (logdet + np.log(q) + yPy + (Y.shape[1] - 1) * _LOG2PI)
    return ll, Vi, w, q, wy


def reml_loglik(sigma2, y, kernels) -> float:
    """Restricted log-likelihood of the intercept-only model, constants included."""
    s = np.asarray(sigma2, dtype=float)
    V = np.tensordot(s, kernels, axes=1)[None]
    try:
        return float(_gls_parts(V, np.asarray(y, float)[None])[0][0])
    except np.linalg.LinAlgError:
        return -np.inf


def _batch_loglik(S, Y, kernels):
    V = np.einsum("bk,kij->bij", S, kernels)
    out = np.full(S.shape[0], -np.inf)
    try:
        out[:] = _gls_parts(V, Y)[0]
    except np.linalg.LinAlgError:
        for i in range(S.shape[0]):
            try:
                out[i] = _gls_parts(V[i : i + 1], Y[i : i + 1])[0][0]
            except np.linalg.LinAlgError:
                pass
    return out


def reml_scoring_batch(Y, kernels, start, lower, max_iter=200, tol=1e-10):
    """Projected Fisher scoring for REML variance components, one fit per row.

    ``Y`` is (B, N), ``start`` and ``lower`` are (B, K) with the residual
    last. Components sitting on their lower bound with a non-positive score
    are held fixed for that iteration. Every accepted step raises the
    restricted likelihood.

    Returns ``(sigma2, loglik, converged)``.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    B, N = Y.shape
    K = kernels.shape[0]
    S = np.maximum(np.array(start, dtype=float, copy=True), lower)
    ll = _batch_loglik(S, Y, kernels)
    active = np.isfinite(ll)
    done = ~active
    scale = np.maximum(S.sum(axis=1), 1e-300)
    eye = np.eye(K)
    for _ in range(max_iter):
        idx = np.flatnonzero(~done)
        if idx.size == 0:
            break
        Sb, Yb = S[idx], Y[idx]
        V = np.einsum("bk,kij->bij", Sb, kernels)
        _, Vi, w, q, _ = _gls_parts(V, Yb)
        P = Vi - w[:, :, None] * w[:, None, :] / q[:, None, None]
        Py = np.einsum("bij,bj->bi", P, Yb)
        PK = np.stack(
            [(P.reshape(-1, N) @ kernels[k]).reshape(-1, N, N) for k in range(K)], axis=1
        )
        tr = np.trace(PK, axis1=2, axis2=3)
        quad = np.einsum("bi,kij,bj->bk", Py, kernels, Py)
        score = 0.5 * (quad - tr)
        F = 0.5 * np.einsum("bkij,blji->bkl", PK, PK)
        fixed = (Sb <= lower[idx] * (1 + 1e-12)) & (score <= 0)
        F = np.where(fixed[:, :, None] | fixed[:, None, :], 0.0, F)
        F = F + fixed[:, :, None] * eye
        score = np.where(fixed, 0.0, score)
        try:
            step = np.linalg.solve(F, score[..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = score / np.maximum(np.diagonal(F, axis1=1, axis2=2), 1e-300)
        t = np.ones(idx.size)
        accepted = np.zeros(idx.size, dtype=bool)
        S_new = Sb.copy()
        ll_new = ll[idx].copy()
        for _ in range(40):
            todo = ~accepted
            if not todo.any():
                break
            cand = np.maximum(Sb[todo] + t[todo, None] * step[todo], lower[idx][todo])
            cl = _batch_loglik(cand, Yb[todo], kernels)
            good = cl >= ll[idx][todo] - 1e-12 * np.abs(ll[idx][todo])
            sel = np.flatnonzero(todo)[good]
            S_new[sel] = cand[good]
            ll_new[sel] = cl[good]
            accepted[sel] = True
            t[todo] *= 0.5
        moved = np.abs(S_new - Sb).max(axis=1) / scale[idx]
        gain = ll_new - ll[idx]
        S[idx], ll[idx] = S_new, ll_new
        finished = (moved < 1e-9) | ((gain < tol) & (moved < 1e-6)) | ~accepted
        done[idx[finished]] = True
    converged = done & active
    return S, ll, converged


def _moment_start(y, kernels, floor):
    """Quadratic-form moment estimates: solve E[y'MK_cMy] for centred y."""
    N = y.size
    M = np.eye(N) - 1.0 / N
    MK = np.array([M @ k @ M for k in kernels])
    lhs = np.einsum("kij,lji->kl", MK, MK)
    rhs = np.array([y @ mk @ y for mk in MK])
    try:
        s = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
    except np.linalg.LinAlgError:
        s = np.full(len(kernels), y.var() / len(kernels))
    s = np.maximum(s, 0.0)
    s[-1] = max(s[-1], floor)
    return s


def fit_random_intercepts(
    data: MixedModelData, spec: ModelSpec, design: DesignMatrices | None = None
) -> LmmFit:
    """REML fit of ``y = 1 mu + sum_c Z_c U_c + e``.

    Nelder-Mead is started from a moment solution, an equal split of the
    total variance and a residual-only point, over square-root variance
    parameters (so components can reach zero). The best optimum is then
    polished by projected Fisher scoring.
    """
    dm = design if design is not None else build_design_matrices(data, spec)
    y = data.response
    N, C = y.size, len(dm.names)
    if N <= C + 1:
        raise FitError(f"need more than {C + 1} observations to fit {C + 1} components")
    kernels = dm.kernels()
    scale = float(y.var(ddof=1)) if y.var() > 0 else 1.0
    floor = RESIDUAL_FLOOR * scale

    def unpack(x):
        s = scale * np.asarray(x) ** 2
        s[-1] += floor
        return s

    def objective(x):
        val = reml_loglik(unpack(x), y, kernels)
        return -val if np.isfinite(val) else 1e300

    starts = [
        _moment_start(y, kernels, floor),
        np.full(C + 1, scale / (C + 1)),
        np.r_[np.zeros(C), scale],
    ]
    best_x, best_f, nm_ok = None, np.inf, False
    for s0 in starts:
        x0 = np.sqrt(np.maximum(s0 - np.r_[np.zeros(C), floor], 0.0) / scale)
        res = minimize(
            objective,
            x0,
            method="Nelder-Mead",
            options=dict(xatol=1e-8, fatol=1e-10, maxiter=4000 * (C + 1), maxfev=8000 * (C + 1)),
        )
        if res.fun < best_f:
            best_x, best_f = np.abs(res.x), res.fun
        nm_ok = nm_ok or res.success
    s_nm = unpack(best_x)
    lower = np.r_[np.zeros(C), floor][None]
    s_sc, ll_sc, conv = reml_scoring_batch(y[None], kernels, s_nm[None], lower)
    if ll_sc[0] >= -best_f:
        sigma2, ll, converged = s_sc[0], float(ll_sc[0]), bool(conv[0])
    else:
        sigma2, ll, converged = s_nm, -best_f, nm_ok
    if not (converged or nm_ok):
        raise ConvergenceError("REML optimization did not converge", best=sigma2)
    mu, var_mu = _gls_mean(sigma2, y, kernels)
    return LmmFit(mu, var_mu, sigma2, ll, spec, dm, converged or nm_ok)


def _gls_mean(sigma2, y, kernels):
    V = np.tensordot(sigma2, kernels, axes=1)
    Vi1 = np.linalg.solve(V, np.ones(y.size))
    q = Vi1.sum()
    return float(Vi1 @ y / q), float(1.0 / q)


def lmm_refit_batch(Y, fit: LmmFit, chunk=512):
    """Refit the REML model to every row of ``Y`` (B, N).

    Starts from the original estimates and returns ``(mu, var_mu, sigma2, ok)``.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    B = Y.shape[0]
    kernels = fit.design.kernels()
    C = len(fit.design.names)
    s0 = np.asarray(fit.sigma2, float)
    s0 = np.maximum(s0, 0.01 * s0.sum() / s0.size)
    mu = np.empty(B)
    var_mu = np.empty(B)
    sig = np.empty((B, C + 1))
    ok = np.empty(B, dtype=bool)
    for lo in range(0, B, chunk):
        Yc = Y[lo : lo + chunk]
        b = Yc.shape[0]
        v = Yc.var(axis=1, ddof=1)
        floor = RESIDUAL_FLOOR * np.where(v > 0, v, 1.0)
        lower = np.zeros((b, C + 1))
        lower[:, -1] = floor
        S, ll, conv = reml_scoring_batch(Yc, kernels, np.tile(s0, (b, 1)), lower)
        V = np.einsum("bk,kij->bij", S, kernels)
        _, Vi, w, q, wy = _gls_parts(V, Yc)
        mu[lo : lo + b] = wy / q
        var_mu[lo : lo + b] = 1.0 / q
        sig[lo : lo + b] = S
        ok[lo : lo + b] = conv & np.isfinite(ll)
    return mu, var_mu, sig, ok
