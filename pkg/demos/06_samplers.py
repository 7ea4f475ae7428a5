"""
Overdispersed samplers
======================

The generators used by the bootstrap, checked against their variance
formulas.
"""

# %%
import numpy as np

from predcal import datasets
from predcal.design import build_design_matrices, parse_formula
from predcal.sampling import (
    sample_beta_binomial,
    sample_lmm,
    sample_quasi_binomial,
    sample_quasi_poisson,
)

rng = np.random.default_rng(2024)

# %%
y = sample_quasi_poisson(50_000, 5.0, 3.0, rng)
print("quasi-Poisson var/mean:", round(y.var() / y.mean(), 3))

# %%
y = sample_quasi_binomial(np.full(50_000, 50), 0.1, 3.0, rng)
print("quasi-binomial dispersion:", round(y.var() / (50 * 0.1 * 0.9), 3))

# %%
y = sample_beta_binomial(np.full(50_000, 50), 0.1, 0.06, rng)
print("beta-binomial variance:", round(y.var(), 2), "expected", 50 * 0.1 * 0.9 * (1 + 49 * 0.06))

# %%
# The quasi-binomial construction needs 1 < phi < n for every cluster.
try:
    sample_quasi_binomial([10, 2], 0.1, 3.0, rng)
except ValueError as err:
    print("rejected:", err)

# %%
dm = build_design_matrices(datasets.as_mixed(datasets.c2_dat1()),
                           parse_formula(datasets.C2_FORMULA))
Y = np.array([sample_lmm(100.0, [4, 0, 0, 1], dm, rng) for _ in range(5000)])
print("same level of a, different b:", round(np.cov(Y[:, 0], Y[:, 9])[0, 1], 2))
