"""
Crossed random effects and future layouts
=========================================

A two-way crossed layout with interaction, fitted by REML. The future
can be described in three ways: just a number of observations, a subset
of historical rows, or explicit design matrices.
"""

# %%
import numpy as np

import predcal
from predcal import datasets

formula = datasets.C2_FORMULA
hist = datasets.c2_dat1()
fit = predcal.fit_random_intercepts(datasets.as_mixed(hist), predcal.parse_formula(formula))
print("components:", {k: round(v, 4) for k, v in fit.components.items()})
print(f"mu_hat={fit.mu_hat:.4f}  pred_se={fit.pred_se:.4f}")

# %%
# Factor a gets a zero variance here: the optimum sits on the boundary.
print("boundary:", np.isclose(fit.components["a"], 0.0, atol=1e-8))

# %%
# m future observations with no structure.
s = dict(nboot=1000, seed=1234)
print(predcal.lmm_pi_unstructured(hist, formula, m=3, **s).table.to_string(index=False))

# %%
# Future observations laid out like rows 1, 2, 4, 5, 10, 11, 13, 14.
print(predcal.lmm_pi_rows(hist, formula, futvec=list(datasets.C2_FUTVEC), **s).table)

# %%
# Explicit matrices allow layouts the historical data cannot express,
# e.g. a factor level observed once.
fm = datasets.c2_dat4_futmat()
for name in fm.names:
    print(name, fm[name].tolist())
print(predcal.lmm_pi_matrices(hist, formula, futmat_list=fm, **s).table)

# %%
# Small historical data and a new data frame with observed values.
res = predcal.lmm_pi_matrices(datasets.c2_dat3(), formula, newdat=datasets.c2_dat4(), **s)
print(res.table.to_string(index=False))
