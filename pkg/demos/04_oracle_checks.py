"""
Checking the sampler against brute force
========================================

On short series the posterior over latent paths can be enumerated
exactly. The forward filter must reproduce the log-evidence, and
backward-sampled paths must reproduce the exact state marginals.
"""

import numpy as np

from penalized_hmm.core import EmissionParams
from penalized_hmm.sampler import backward_sample, forward_filter
from penalized_hmm.simulate import enumerate_path_posterior, grid_posterior_1d, run_oracle_checks

rng = np.random.default_rng(0)

# %%
# One instance by hand: 10 steps, 1024 paths.
P = np.array([[0.85, 0.15], [0.25, 0.75]])
em = EmissionParams(0.3, [1.7])
counts = rng.poisson(0.9, 10)
exact, log_ev = enumerate_path_posterior(counts, em, P, [0.5, 0.5])
fwd = forward_filter(counts, em, P, [0.5, 0.5])
print("log-evidence  enumeration:", log_ev, " forward:", fwd.loglik)

draws = np.array([backward_sample(fwd, P, rng) for _ in range(50000)])
print("P(high) exact  :", exact[:, 1].round(3))
print("P(high) sampled:", draws.mean(axis=0).round(3))

# %%
# Continuous full conditionals are checked against a fine grid. A
# half-normal with variance parameter tau has variance tau (1 - 2/pi).
tau = np.exp(-6)
post = grid_posterior_1d(lambda g: -g**2 / (2 * tau), np.linspace(0, 0.5, 200001), bounded_below=True)
print("half-normal variance  grid:", post.var(), " closed form:", tau * (1 - 2 / np.pi))

# %%
# The bundled self-test, also available as ``penalized-hmm oracle-check``.
for name, ok, detail in run_oracle_checks(seed=0):
    print("PASS" if ok else "FAIL", name, "-", detail)
