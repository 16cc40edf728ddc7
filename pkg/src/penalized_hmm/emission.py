"""Poisson emissions, the count split, and conjugate rate updates."""

from __future__ import annotations

import numpy as np
from scipy.special import gammaln

from .core import EmissionParams, Hyperparams

RATE_FLOOR = 1e-300


def log_emission(count: int, state: int, emission: EmissionParams) -> float:
    """Log Poisson pmf of ``count`` at the total rate of 0-based ``state``."""
    lam = max(emission.totals()[state], RATE_FLOOR)
    return float(count * np.log(lam) - lam - gammaln(count + 1.0))


def log_emission_matrix(counts: np.ndarray, emission: EmissionParams) -> np.ndarray:
    """T x n matrix of log Poisson pmfs for every time step and state.

    Counts are small integers, so the pmf is tabulated once per distinct
    count value and gathered.
    """
    counts = np.asarray(counts, dtype=np.int64)
    lam = np.maximum(emission.totals(), RATE_FLOOR)
    k = np.arange(counts.max() + 1, dtype=float)[:, None]
    table = k * np.log(lam)[None, :] - lam[None, :] - gammaln(k + 1.0)
    return table[counts]


def split_counts(count: int, state: int, emission: EmissionParams, rng: np.random.Generator) -> np.ndarray:
    """Multinomial split of one count over the rate components active in ``state``.

    Component ``j <= state`` receives events with probability proportional
    to its rate (baseline for ``j = 0``, increment ``j`` otherwise); the
    remaining components are zero.
    """
    comps = np.concatenate(([emission.lambda_base], emission.lambda_incr))
    out = np.zeros(emission.n_states, dtype=np.int64)
    w = comps[: state + 1]
    out[: state + 1] = rng.multinomial(int(count), w / w.sum())
    return out


def split_all(counts: np.ndarray, path: np.ndarray, emission: EmissionParams, rng: np.random.Generator) -> np.ndarray:
    """Vectorised :func:`split_counts` over a whole series; returns n x T.

    The multinomial is drawn as a chain of conditional binomials peeled
    from the highest active component down to the baseline.
    """
    counts = np.asarray(counts, dtype=np.int64)
    path = np.asarray(path)
    n = emission.n_states
    T = counts.size
    aug = np.zeros((n, T), dtype=np.int64)
    nz = np.flatnonzero(counts)
    if nz.size == 0:
        return aug
    comps = np.concatenate(([emission.lambda_base], emission.lambda_incr))
    cum = np.cumsum(comps)
    remaining = counts[nz].copy()
    states = path[nz]
    for k in range(n - 1, 0, -1):
        active = states >= k
        p = np.where(active, comps[k] / cum[np.minimum(states, k)], 0.0)
        draw = rng.binomial(remaining, p)
        aug[k, nz] = draw
        remaining -= draw
    aug[0, nz] = remaining
    return aug


def emission_posterior(augmented_counts: np.ndarray, path: np.ndarray, hyper: Hyperparams):
    """Shape and rate vectors of the Gamma full conditionals.

    Entry 0 is the baseline: Gamma(a + sum_t N_1t, b + T). Entry k is the
    k-th increment, exposed only while the path sits in state k or above:
    Gamma(shape_k + sum_{t: X_t >= k} N_kt, rate_k + #{t: X_t >= k}).
    """
    aug = np.asarray(augmented_counts)
    path = np.asarray(path)
    n = hyper.n_states
    occupancy = np.bincount(path, minlength=n)
    exposure = occupancy[::-1].cumsum()[::-1]
    shape = np.concatenate(([hyper.a], hyper.incr_shape)) + aug.sum(axis=1)
    rate = np.concatenate(([hyper.b], hyper.incr_rate)) + exposure
    return shape.astype(float), rate.astype(float)


def update_emission_rates(
    augmented_counts: np.ndarray, path: np.ndarray, hyper: Hyperparams, rng: np.random.Generator
) -> EmissionParams:
    """Gibbs draw of the baseline rate and increments given the split counts."""
    n = hyper.n_states
    path = np.asarray(path, dtype=np.int64)
    if path.size == 0:
        aug = np.zeros((n, 0), dtype=np.int64)
    else:
        aug = augmented_counts
    shape, rate = emission_posterior(aug, path, hyper)
    draws = rng.gamma(shape, 1.0 / rate)
    # a Gamma draw can underflow to exactly 0 for tiny shapes
    draws[0] = max(draws[0], RATE_FLOOR)
    return EmissionParams(draws[0], draws[1:])
