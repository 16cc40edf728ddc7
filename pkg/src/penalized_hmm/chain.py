"""Transition kernels: Dirichlet rows, rate-derived matrices, covariate kernels."""

from __future__ import annotations

import numpy as np
from scipy.sparse.csgraph import connected_components

from .core import CovariateParams, NumericalError, ProbabilityRows, SwitchRates

INV_E = float(np.exp(-1.0))


class InvalidRegime(NumericalError):
    """Off-diagonal row sum of a rate-derived kernel exceeds one."""


class Reducible(NumericalError):
    """The chain has no unique stationary distribution."""


def transition_counts(path: np.ndarray, n: int) -> np.ndarray:
    """n x n matrix of observed i -> j transitions along a 0-based path."""
    path = np.asarray(path, dtype=np.int64)
    idx = path[:-1] * n + path[1:]
    return np.bincount(idx, minlength=n * n).reshape(n, n)


def update_dirichlet_rows(path: np.ndarray, theta: np.ndarray, rng: np.random.Generator) -> ProbabilityRows:
    """Conjugate draw of each row from Dirichlet(theta_row + transition counts)."""
    theta = np.asarray(theta, dtype=float)
    n = theta.shape[0]
    post = theta + transition_counts(path, n)
    g = rng.gamma(post)
    P = g / g.sum(axis=1, keepdims=True)
    return ProbabilityRows(P)


def is_valid_ptm_regime(rates: SwitchRates, dt: float = 1.0) -> bool:
    """True iff every row satisfies gamma_i. * exp(-gamma_i. * dt) <= 1.

    The left side peaks at gamma_i. = 1/dt with value 1/(e dt), so any
    rates are admissible once dt >= 1/e.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if dt >= INV_E:
        return True
    g = np.array(rates.gamma if isinstance(rates, SwitchRates) else rates, dtype=float)
    n = g.shape[-1]
    g[..., np.eye(n, dtype=bool)] = 0.0
    exit_rates = g.sum(axis=-1)
    return bool(np.all(exit_rates * np.exp(-exit_rates * dt) <= 1.0))


def ptm_matrix(gamma: np.ndarray, dt: float = 1.0) -> np.ndarray:
    """Array-level kernel: p_ij = gamma_ij exp(-gamma_i. dt), diagonal fills the row.

    Accepts a single n x n rate matrix or a stack (..., n, n); the
    diagonal of ``gamma`` is ignored.
    """
    g = np.array(gamma, dtype=float)
    n = g.shape[-1]
    eye = np.eye(n, dtype=bool)
    g[..., eye] = 0.0
    exit_rates = g.sum(axis=-1, keepdims=True)
    P = g * np.exp(-exit_rates * dt)
    off = P.sum(axis=-1)
    if np.any(off > 1.0):
        raise InvalidRegime("off-diagonal row sum exceeds 1; dt too small for these rates")
    P[..., eye] = 1.0 - off
    return P


def ptm_from_rates(rates: SwitchRates, dt: float = 1.0) -> ProbabilityRows:
    """One-jump discretisation of the CTMC with the given switching rates."""
    if not is_valid_ptm_regime(rates, dt):
        raise InvalidRegime("off-diagonal row sum exceeds 1; dt too small for these rates")
    return ProbabilityRows(ptm_matrix(rates.gamma, dt))


def covariate_transform(w, alpha: float) -> np.ndarray:
    """f(w) = 1 / (w**alpha + 1), with f(0) = 1 for every alpha."""
    w = np.maximum(np.asarray(w, dtype=float), 0.0)
    with np.errstate(divide="ignore", over="ignore"):
        f = 1.0 / (np.power(w, alpha) + 1.0)
    return np.where(w == 0.0, 1.0, f)


def covariate_rates(params: CovariateParams, w) -> np.ndarray:
    """Time-varying rate matrices exp(mu + beta f(w_t)), shape (T, n, n) or (n, n)."""
    f = covariate_transform(w, params.alpha)
    with np.errstate(over="ignore"):
        g = np.exp(params.mu + params.beta * f[..., None, None])
    n = params.n_states
    g[..., np.eye(n, dtype=bool)] = 0.0
    return g


def ptm_from_covariates(params: CovariateParams, w_t: float, dt: float = 1.0) -> ProbabilityRows:
    """Kernel at a single covariate value."""
    if w_t < 0:
        raise ValueError("covariate value must be non-negative")
    return ptm_from_rates(SwitchRates(covariate_rates(params, w_t)), dt)


def covariate_kernels(params: CovariateParams, w: np.ndarray, dt: float = 1.0) -> np.ndarray:
    """Stack of kernels, one per covariate value; shape (len(w), n, n)."""
    return ptm_matrix(covariate_rates(params, np.asarray(w, dtype=float)), dt)


def stationary_distribution(P) -> np.ndarray:
    """Unique delta with delta P = delta and sum(delta) = 1.

    Raises :class:`Reducible` when the positive-entry graph of ``P`` is not
    strongly connected. Rows that miss unit sum by less than 1e-3 (e.g.
    matrices reported to four decimals) are renormalised first.
    """
    P = np.array(P.P if isinstance(P, ProbabilityRows) else P, dtype=float)
    n = P.shape[0]
    row_err = np.max(np.abs(P.sum(axis=1) - 1.0))
    if row_err > 1e-3 or np.any(P < 0):
        raise ValueError(f"not a transition matrix (row sums off by {row_err:.3g})")
    P /= P.sum(axis=1, keepdims=True)
    n_comp, _ = connected_components(P > 0, directed=True, connection="strong")
    if n_comp != 1:
        raise Reducible(f"transition graph has {n_comp} strongly connected components")
    A = P.T - np.eye(n)
    A[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    delta = np.linalg.solve(A, rhs)
    resid = np.max(np.abs(delta @ P - delta))
    if resid >= 1e-10:
        # one step of iterative refinement
        delta = delta + np.linalg.solve(A, rhs - A @ delta)
        resid = np.max(np.abs(delta @ P - delta))
        if resid >= 1e-10:
            raise NumericalError(f"stationary residual {resid:.3g} too large")
    return delta


def covariate_series(
    entrance_times, T: int, dt: float = 1.0, initial_offset: float = 1e6, transform: str = "elapsed"
) -> np.ndarray:
    """Covariate w_1..w_T from 1-based entrance bins.

    ``transform="elapsed"``: seconds since the most recent entrance (0 at
    an entrance); before the first entrance ``(t - 1) dt + initial_offset``.
    ``transform="inverse"``: the reciprocal of that elapsed time (infinite
    at an entrance).
    """
    t = np.arange(1, T + 1)
    ent = np.asarray([] if entrance_times is None else entrance_times, dtype=np.int64)
    if ent.size and (np.any(np.diff(ent) <= 0) or ent[0] < 1 or ent[-1] > T):
        raise ValueError("entrance_times must be strictly increasing within [1, T]")
    last = np.zeros(T, dtype=np.int64)
    if ent.size:
        last[ent - 1] = ent
    last = np.maximum.accumulate(last)
    w = np.where(last > 0, (t - last) * dt, (t - 1) * dt + initial_offset)
    if transform == "elapsed":
        return w.astype(float)
    if transform == "inverse":
        with np.errstate(divide="ignore"):
            return 1.0 / w.astype(float)
    raise ValueError(f"unknown covariate transform {transform!r}")


def c_normalizer(beta_ij: float, w: np.ndarray, alpha: float) -> float:
    """Mean of exp(beta_ij f(w_t)) over the series."""
    return float(np.mean(np.exp(beta_ij * covariate_transform(w, alpha))))
