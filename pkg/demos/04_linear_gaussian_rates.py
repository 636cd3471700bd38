"""Closed-form rates on linear objectives, and the critical step size.

With isotropic Gaussians on a linear objective the flow has an exact
solution: log sigma grows linearly at rate alpha (positive only when fewer
than half the samples are selected) and the mean drifts at sigma * beta per
unit time.  ML-blend updates with a finite step size lose the variance
growth above a critical dt, which has a closed form; plain CEM (j = inf)
always contracts, and the additive covariance rule (j = 0) never does.
"""

import math

import numpy as np

from igopt import experiment
from igopt.families import FullGaussianFamily
from igopt.flow import critical_dt, gaussian_linear_constants

# Rates and their simulated counterparts.
lc = gaussian_linear_constants(0.25, d=2)
print(f"q0 = 0.25, d = 2: alpha = {lc.alpha:.5f}, beta = {lc.beta:.5f}")
print(f"predicted sigma(t=1)/sigma(0) = {lc.sigma_at(1.0, 1.0):.4f}")

cfg = experiment.parse_config(
    "family = gaussian_iso:d=2,m0=0,sigma0=1\n"
    "objective = linear:d=2,alpha=-1,c=0\n"
    "scheme = truncation:q0=0.25\nalgorithm = igo\n"
    "n = 20000\ndt = 0.01\nsteps = 100\nseed = 31\n")
rec = experiment.run_experiment(cfg)[0]
thetas = np.array(rec.thetas)
alpha_hat = np.diff(thetas[:, 2]).mean() / cfg.dt
print(f"simulated log-sigma slope        = {alpha_hat:.5f}")

# The critical step size versus the selection quantile.
print("\ncritical dt by selection quantile (j = 1 is the ML blend):")
for q in (0.1, 0.25, 0.4, 0.5, 0.6):
    row = [critical_dt(q, j) for j in (0, 1, 2, math.inf)]
    print(f"  q = {q:4.2f}: j=0 -> {row[0]:7.3f}, j=1 -> {row[1]:.4f}, "
          f"j=2 -> {row[2]:.4f}, j=inf -> {row[3]:.1f}")

# Demonstrate the phase change around the critical value.
dtc = critical_dt(0.25, 1)
fam = FullGaussianFamily(1)
print(f"\nML blend on f(x) = x, 20 steps, N = 10000 (dt_crit = {dtc:.4f}):")
for factor in (0.9, 1.1):
    cfg = experiment.parse_config(
        "family = gaussian:d=1,m0=0,sigma0=1\n"
        "objective = linear:d=1,alpha=-1,c=0\n"
        "scheme = truncation:q0=0.25\nalgorithm = igo_ml\n"
        f"n = 10000\ndt = {factor * dtc}\nsteps = 20\nseed = 8\nrepeats = 5\n")
    finals = [fam.unpack(r.thetas[-1]).C[0, 0] for r in experiment.run_experiment(cfg)]
    print(f"  dt = {factor:.1f} x dt_crit: final variances {np.round(finals, 3)}")
