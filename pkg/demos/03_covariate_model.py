"""
Entrance-driven switching rates
===============================

In the covariate model the rate of switching from state i to j at time
t is exp(mu_ij + beta_ij f(w_t)), where w_t is the time since the most
recent entrance and f(w) = 1 / (w**alpha + 1). On data generated without
any entrance effect, the posterior for beta should straddle zero.
"""

import numpy as np

from penalized_hmm import ModelSpec, run_chain
from penalized_hmm.chain import covariate_series, covariate_transform, ptm_matrix
from penalized_hmm.core import EmissionParams, SwitchRates
from penalized_hmm.simulate import simulate_entrances, simulate_series

# %%
# Entrances arrive as a Poisson process, roughly one every ten minutes.
T = 14400
entrances = simulate_entrances(1 / 600, T, seed=11)
kernel = ptm_matrix(SwitchRates.two_state(0.00142, 0.00422).gamma)
data, truth = simulate_series(EmissionParams.from_totals([0.0057, 0.0501]), kernel, [0.5, 0.5], T, 11, entrance_times=entrances)
print("entrances:", entrances.size)

# %%
# The covariate series and its transform. Before the first entrance the
# elapsed time starts from a large offset, so f is close to zero there.
w = covariate_series(entrances, T)
f = covariate_transform(w, 1.0)
print("w at the first entrance:", w[entrances[0] - 1], " f there:", f[entrances[0] - 1])
print("f one minute later:", round(float(f[entrances[0] + 59]), 4))

# %%
# A short chain; the acceptance runs use 20,000 iterations.
sample = run_chain(ModelSpec(kind="covariate"), data, 3000, seed=3)
for key in ("exp_mu_LH", "exp_mu_HL", "beta_LH", "beta_HL", "alpha"):
    iv = sample.summaries[key]
    print(f"{key:>9}: {iv['mean']:9.4f} ({iv['lower']:.4f}, {iv['upper']:.4f})")
print("acceptance rate:", round(sample.accept_rate, 3))
