"""
Looking inside the calibration
==============================

The coefficient is found by bisection on the bootstrap coverage. The
trace shows every evaluation, starting with the two bracket ends.
"""

# %%
from pathlib import Path

import numpy as np

import predcal
from predcal import datasets
from predcal.calibration import write_trace_csv, write_trace_svg

fit = predcal.fit_quasi_poisson(datasets.as_counts(datasets.qp_dat1()))
settings = predcal.CalibrationSettings(nboot=3000, seed=1234)
result, reps = predcal.calibrate(fit, predcal.CountRepeats(1), settings)
for step, delta, cov in result.trace:
    print(f"{step:3d}  delta={delta:8.5f}  coverage={cov:.4f}")

# %%
# Coverage is a step function of delta, so many deltas give the same
# coverage. Bisection stops at the first midpoint inside the band.
grid = np.linspace(1.5, 3.0, 7)
print([round(predcal.coverage_at(reps, d), 4) for d in grid])

# %%
# Too narrow a bracket: the upper end is returned, flagged as not converged.
tight = predcal.bisect_delta(reps, predcal.CalibrationSettings(delta_max=1.0))
print(tight.delta, tight.converged, tight.warnings)

# %%
out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)
write_trace_csv(result, out / "trace.csv")
write_trace_svg(result, out / "trace.svg", settings.alpha, settings.tolerance)
print((out / "trace.csv").read_text())
