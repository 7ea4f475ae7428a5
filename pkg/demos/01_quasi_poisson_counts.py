"""
Prediction intervals for overdispersed counts
=============================================

Ten historical clusters of counts, one or three new clusters to come.
The calibrated coefficient replaces a normal quantile and grows with the
number of future counts the interval must cover at once.
"""

# %%
import pandas as pd

import predcal
from predcal import datasets

hist = datasets.qp_dat1()
print(hist.T)

# %%
# The fitted mean and dispersion are plain moment estimates.
fit = predcal.fit_quasi_poisson(datasets.as_counts(hist))
print(f"lambda_hat = {fit.lambda_hat}, phi_hat = {fit.phi_hat:.4f}")

# %%
# One future count. nboot is reduced to keep the demo quick.
one = predcal.quasi_pois_pi(hist, m=1, nboot=2000, seed=1234)
print(one.table.to_string(index=False))

# %%
# Three future counts covered simultaneously need a wider interval.
three = predcal.quasi_pois_pi(hist, m=3, nboot=2000, seed=1234)
print(three.table.to_string(index=False))
print("coefficient ratio:", round(three.quant_calib / one.quant_calib, 3))

# %%
# With observed future counts the table gets a cover column.
checked = predcal.quasi_pois_pi(hist, newdat=datasets.qp_dat2(), nboot=2000, seed=1234)
print(checked.table.to_string(index=False))

# %%
# Compare against the uncalibrated normal quantile.
z = 1.959964
se = one.table["pred_se"].iloc[0]
print(pd.DataFrame({"method": ["normal", "calibrated"],
                    "half_width": [z * se, one.quant_calib * se]}))
