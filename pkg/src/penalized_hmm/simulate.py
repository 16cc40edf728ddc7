"""Synthetic data and brute-force oracles used to verify the sampler."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import gammaln, logsumexp

from .core import CountSeries, EmissionParams, ProbabilityRows

ENUMERATION_CAP = 5_000_000


class TooLarge(ValueError):
    """Path enumeration would exceed the configured cap."""


class SupportNotCovered(ValueError):
    """Grid misses part of the target's mass."""


def simulate_series(
    emission: EmissionParams,
    kernel,
    pi0,
    T: int,
    seed=None,
    dt: float = 1.0,
    entrance_times=None,
):
    """Draw a latent path and Poisson counts from the generative model.

    ``kernel`` is one n x n matrix or a stack whose entry ``t`` moves
    X_t to X_{t+1}. Returns ``(CountSeries, path)`` with a 0-based path.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    rng = np.random.default_rng(seed)
    K = np.asarray(kernel.P if isinstance(kernel, ProbabilityRows) else kernel, dtype=float)
    pi0 = np.asarray(pi0, dtype=float)
    n = pi0.size
    cdfs = np.cumsum(K, axis=-1)
    u = rng.random(T)
    path = np.empty(T, dtype=np.int64)
    path[0] = min(np.searchsorted(np.cumsum(pi0), u[0], side="right"), n - 1)
    if K.ndim == 2:
        for t in range(1, T):
            path[t] = min(np.searchsorted(cdfs[path[t - 1]], u[t], side="right"), n - 1)
    else:
        for t in range(1, T):
            path[t] = min(np.searchsorted(cdfs[t - 1, path[t - 1]], u[t], side="right"), n - 1)
    counts = rng.poisson(emission.totals()[path])
    return CountSeries(counts, dt, entrance_times), path


def simulate_entrances(rate: float, T: int, seed=None) -> np.ndarray:
    """1-based bins of a homogeneous Poisson process of entrances (rate per bin)."""
    rng = np.random.default_rng(seed)
    hits = rng.random(T) < -np.expm1(-rate)
    return np.flatnonzero(hits) + 1


def enumerate_path_posterior(counts, emission: EmissionParams, kernel, pi0, cap: int = ENUMERATION_CAP):
    """Exact state marginals (T x n) and log-evidence by summing over all n**T paths."""
    counts = np.asarray(counts, dtype=np.int64)
    pi0 = np.asarray(pi0, dtype=float)
    K = np.asarray(kernel.P if isinstance(kernel, ProbabilityRows) else kernel, dtype=float)
    n, T = pi0.size, counts.size
    if n**T > cap:
        raise TooLarge(f"{n}**{T} paths exceed the cap of {cap}")
    lam = emission.totals()
    paths = np.array(list(itertools.product(range(n), repeat=T)), dtype=np.int64)
    with np.errstate(divide="ignore"):
        log_pi = np.log(pi0)
        log_K = np.log(K)
        log_pmf = counts[None, :] * np.log(lam)[:, None] - lam[:, None] - gammaln(counts + 1.0)[None, :]
    lj = log_pi[paths[:, 0]] + log_pmf[paths, np.arange(T)].sum(axis=1)
    for t in range(T - 1):
        Kt = log_K if K.ndim == 2 else log_K[t]
        lj = lj + Kt[paths[:, t], paths[:, t + 1]]
    log_ev = logsumexp(lj)
    w = np.exp(lj - log_ev)
    marg = np.zeros((T, n))
    for k in range(n):
        marg[:, k] = (w[:, None] * (paths == k)).sum(axis=0)
    return marg, float(log_ev)


@dataclass(frozen=True, eq=False)
class GridPosterior:
    grid: np.ndarray
    density: np.ndarray

    def mean(self) -> float:
        return float(trapezoid(self.grid * self.density, self.grid))

    def var(self) -> float:
        m = self.mean()
        return float(trapezoid((self.grid - m) ** 2 * self.density, self.grid))

    def cdf(self, x) -> np.ndarray:
        """Piecewise-linear-density CDF evaluated by trapezoid accumulation."""
        seg = 0.5 * (self.density[1:] + self.density[:-1]) * np.diff(self.grid)
        F = np.concatenate(([0.0], np.cumsum(seg)))
        return np.interp(x, self.grid, F)


def grid_posterior_1d(
    log_target: Callable[[np.ndarray], np.ndarray],
    grid,
    bounded_below: bool = False,
    bounded_above: bool = False,
    tol: float = 1e-6,
) -> GridPosterior:
    """Trapezoid-normalised density of ``exp(log_target)`` on ``grid``.

    The mass of the outermost grid cells must be below ``tol`` unless that
    end is declared a hard support boundary.
    """
    grid = np.asarray(grid, dtype=float)
    lp = np.asarray(log_target(grid), dtype=float)
    lp = np.where(np.isfinite(lp), lp, -np.inf)
    dens = np.exp(lp - lp.max())
    z = trapezoid(dens, grid)
    dens = dens / z
    seg = 0.5 * (dens[1:] + dens[:-1]) * np.diff(grid)
    if not bounded_below and seg[0] > tol:
        raise SupportNotCovered(f"lower edge cell holds mass {seg[0]:.3g}")
    if not bounded_above and seg[-1] > tol:
        raise SupportNotCovered(f"upper edge cell holds mass {seg[-1]:.3g}")
    return GridPosterior(grid, dens)


def write_events_csv(series: CountSeries, events_path, entries_path: Optional[str] = None) -> None:
    """Write counts in the ingest schema: one ``start_s`` row per event.

    An event in bin ``t`` (1-based) is written at second ``t * dt``.
    """
    t = np.repeat(np.arange(1, series.T + 1), series.counts)
    with open(events_path, "w", newline="") as fh:
        fh.write("start_s\n")
        for s in t * series.dt:
            fh.write(f"{_fmt_seconds(s)}\n")
    if entries_path is not None:
        ent = [] if series.entrance_times is None else series.entrance_times
        with open(entries_path, "w", newline="") as fh:
            fh.write("entry_s\n")
            for s in np.asarray(ent) * series.dt:
                fh.write(f"{_fmt_seconds(s)}\n")


def _fmt_seconds(s: float) -> str:
    return str(int(s)) if float(s).is_integer() else repr(float(s))


# reported transition matrices used as fixed reference inputs
REFERENCE_P = {
    "standard_2state": np.array([[0.9857, 0.0145], [0.0145, 0.9857]]),
    "penalized_2state": np.array([[0.9986, 0.0014], [0.0042, 0.9958]]),
    "penalized_3state": np.array(
        [[0.9975, 0.0010, 0.0015], [0.0063, 0.7611, 0.2327], [0.0046, 0.2243, 0.7711]]
    ),
}


def run_oracle_checks(seed=0, n_instances: int = 5, n_draws: int = 20000) -> list:
    """Quick self-test of the samplers against their independent oracles.

    Returns ``(name, passed, detail)`` triples.
    """
    from .chain import is_valid_ptm_regime, ptm_matrix, stationary_distribution
    from .core import Hyperparams, SwitchRates
    from .emission import emission_posterior, update_emission_rates
    from .sampler import backward_sample, forward_filter

    rng = np.random.default_rng(seed)
    results = []

    worst_ev, worst_z = 0.0, 0.0
    for _ in range(n_instances):
        T = int(rng.integers(3, 9))
        P = rng.dirichlet([2.0, 2.0], size=2)
        em = EmissionParams.from_totals(np.sort(rng.uniform(0.2, 3.0, 2)))
        pi0 = rng.dirichlet([1.0, 1.0])
        counts = rng.poisson(1.0, T)
        exact, log_ev = enumerate_path_posterior(counts, em, P, pi0)
        fwd = forward_filter(counts, em, P, pi0)
        worst_ev = max(worst_ev, abs(fwd.loglik - log_ev))
        freq = np.zeros(T)
        for _ in range(n_draws):
            freq += backward_sample(fwd, P, rng)
        freq /= n_draws
        p = exact[:, 1]
        se = np.sqrt(np.maximum(p * (1 - p), 1e-12) / n_draws)
        worst_z = max(worst_z, float(np.max(np.abs(freq - p) / se)))
    results.append(("ffbs log-evidence", worst_ev < 1e-8, f"max |diff| = {worst_ev:.2e}"))
    results.append(("ffbs marginals", worst_z < 4.5, f"max z = {worst_z:.2f}"))

    ok = True
    for _ in range(2000):
        n = int(rng.integers(2, 4))
        g = rng.exponential(rng.choice([0.01, 1.0, 100.0]), (n, n))
        Pm = ptm_matrix(g, 1.0)
        ok &= bool(np.all(Pm >= 0) and np.allclose(Pm.sum(axis=1), 1.0, atol=1e-12))
    bad = SwitchRates(np.array([[0.0, 5.0], [5.0, 0.0]]))
    ok_small = not is_valid_ptm_regime(bad, 0.2)
    results.append(("ptm validity (dt=1 always, dt=0.2 rejects)", ok and ok_small, f"dt=1 ok={ok}, dt=0.2 rejected={ok_small}"))

    targets = {
        "standard_2state": (0.5, 0.5),
        "penalized_2state": (0.75, 0.25),
        "penalized_3state": (0.684, 0.153, 0.163),
    }
    for name, want in targets.items():
        got = stationary_distribution(REFERENCE_P[name])
        results.append((f"stationary {name}", bool(np.max(np.abs(got - want)) < 0.01), np.array2string(got, precision=4)))

    hyper = Hyperparams.default(2)
    path = np.r_[np.zeros(50, dtype=np.int64), np.ones(50, dtype=np.int64)]
    aug = np.zeros((2, 100), dtype=np.int64)
    aug[0, :10] = 1
    aug[1, 60:70] = 2
    shape, rate = emission_posterior(aug, path, hyper)
    draws = np.array([update_emission_rates(aug, path, hyper, rng).totals() for _ in range(4000)])
    base = draws[:, 0]
    want = shape[0] / rate[0]
    z = abs(base.mean() - want) / (np.sqrt(shape[0]) / rate[0] / np.sqrt(base.size))
    results.append(("conjugate baseline rate", z < 4.5, f"z = {z:.2f}"))
    return results
