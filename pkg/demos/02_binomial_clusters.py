"""
Clustered binomial proportions
==============================

Historical success/failure counts from ten clusters of 50 units. Two
overdispersion models are available: a multiplicative dispersion factor
and a beta-binomial intraclass correlation.
"""

# %%
import predcal
from predcal import datasets

hist = datasets.qb_dat1()
data = datasets.as_binomial(hist)
qb = predcal.fit_quasi_binomial(data)
bb = predcal.fit_beta_binomial(data)
print(f"pi_hat={qb.pi_hat}  phi_hat={qb.phi_hat:.4f}  rho_hat={bb.rho_hat:.4f}")

# %%
# Future clusters of different sizes get their own rows, sharing one
# calibrated coefficient.
res = predcal.quasi_bin_pi(hist, newsize=[40, 50, 60], nboot=2000, seed=1234)
print(res.table.to_string(index=False))

# %%
# Beta-binomial version, checked against observed future clusters.
res = predcal.beta_bin_pi(hist, newdat=datasets.bb_dat2(), nboot=2000, seed=1234)
print(res.table.to_string(index=False))

# %%
# A one-sided upper limit: the lower bound sits at the support limit 0.
res = predcal.quasi_bin_pi(hist, newsize=50, alternative="upper", nboot=2000, seed=1234)
print(res.table[["total", "lower", "upper"]].to_string(index=False))

# %%
# Bounds never leave [0, n*].
for row in res.intervals:
    print(row.m_index, row.lower_clamped, row.upper_clamped)
