"""Tuning-parameter selection by one-step-ahead predictive error."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .chain import covariate_transform, ptm_matrix
from .core import (
    ConfigError,
    CountSeries,
    ModelSpec,
    NumericalError,
    ParamState,
    PosteriorSample,
    ProbabilityRows,
    SwitchRates,
)

logger = logging.getLogger(__name__)


def _next_state_probs(transitions, states: np.ndarray, w: Optional[np.ndarray], dt: float) -> np.ndarray:
    """Rows P_t[X_t, :] for each t in ``states`` (len(states) x n)."""
    if isinstance(transitions, ProbabilityRows):
        return transitions.P[states]
    if isinstance(transitions, SwitchRates):
        return ptm_matrix(transitions.gamma, dt)[states]
    if w is None:
        raise ConfigError("covariate draws need the covariate series w")
    f = covariate_transform(w[: states.size], transitions.alpha)
    with np.errstate(over="ignore"):
        g = np.exp(transitions.mu[states] + transitions.beta[states] * f[:, None])
    idx = np.arange(states.size)
    g[idx, states] = 0.0
    rows = g * np.exp(-g.sum(axis=1, keepdims=True) * dt)
    rows[idx, states] = 1.0 - rows.sum(axis=1)
    return rows


def one_step_means(draw: ParamState, w: Optional[np.ndarray] = None, dt: float = 1.0) -> np.ndarray:
    """Predicted N_{t+1} for t = 0..T-2 given the draw's own path state at t."""
    states = np.asarray(draw.path[:-1], dtype=np.int64)
    rows = _next_state_probs(draw.transitions, states, w, dt)
    return rows @ draw.emission.totals()


def one_step_mean(draw: ParamState, t: int, w: Optional[np.ndarray] = None, dt: float = 1.0) -> float:
    """E[N_{t+1} | X_t] = sum_k lambda_k P[X_t, k] for 0-based ``t``.

    For the covariate model ``w`` is the covariate series and the kernel
    at time ``t`` is used.
    """
    T = draw.path.size
    if not 0 <= t < T - 1:
        raise IndexError(f"t must lie in [0, {T - 2}]")
    state = np.array([draw.path[t]], dtype=np.int64)
    w_t = None if w is None else np.asarray(w, dtype=float)[t : t + 1]
    rows = _next_state_probs(draw.transitions, state, w_t, dt)
    return float(rows[0] @ draw.emission.totals())


def _prediction_errors(sample: PosteriorSample, data: CountSeries) -> np.ndarray:
    """(n_draws, T-1) matrix of N-hat_{t+1} - N_{t+1}."""
    if sample.n_draws == 0:
        raise ValueError("empty posterior sample")
    target = np.asarray(data.counts[1:], dtype=float)
    dt = sample.spec.dt
    out = np.empty((sample.n_draws, target.size))
    if sample.spec.kind == "covariate":
        for i in range(sample.n_draws):
            out[i] = one_step_means(sample.draw(i), sample.w, dt) - target
        return out
    # constant kernel per draw: prediction depends on X_t only
    pred_by_state = np.einsum("dij,dj->di", sample.P, sample.lambda_totals)
    states = sample.paths[:, :-1].astype(np.int64)
    out[:] = np.take_along_axis(pred_by_state, states, axis=1) - target
    return out


def mspe(sample: PosteriorSample, data: CountSeries, squared: bool = True, average: bool = True) -> float:
    """Posterior mean of the one-step-ahead prediction error over t = 2..T.

    By default errors are squared and averaged over the T - 1 predicted
    steps. ``squared=False`` sums raw (signed) errors and ``average=False``
    reports the sum over time instead of the mean.
    """
    err = _prediction_errors(sample, data)
    per_draw = (err**2 if squared else err).sum(axis=1)
    if average:
        per_draw = per_draw / err.shape[1]
    return float(per_draw.mean())


def mspe_variants(sample: PosteriorSample, data: CountSeries) -> dict:
    err = _prediction_errors(sample, data)
    sq = (err**2).sum(axis=1)
    raw = err.sum(axis=1)
    m = err.shape[1]
    return {
        "squared_mean": float(sq.mean() / m),
        "squared_sum": float(sq.mean()),
        "raw_mean": float(raw.mean() / m),
        "raw_sum": float(raw.mean()),
    }


@dataclass
class SweepRow:
    tau: float
    mspe: float
    mean_switches: float
    accept_rate: float
    mspe_raw: float = float("nan")
    error: Optional[str] = None
    is_argmin: bool = False

    @property
    def log_tau(self) -> float:
        return float(np.log(self.tau))


@dataclass
class SweepTable:
    rows: list = field(default_factory=list)

    @property
    def argmin(self) -> Optional[SweepRow]:
        ok = [r for r in self.rows if np.isfinite(r.mspe)]
        return min(ok, key=lambda r: r.mspe) if ok else None

    def write(self, path) -> None:
        """Comma-delimited table sorted by tau."""
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["tau", "log_tau", "mspe", "mean_switches", "accept_rate", "mspe_raw", "is_argmin", "error"])
            for r in self.rows:
                wr.writerow(
                    [
                        repr(r.tau),
                        repr(r.log_tau),
                        repr(r.mspe),
                        repr(r.mean_switches),
                        repr(r.accept_rate),
                        repr(r.mspe_raw),
                        int(r.is_argmin),
                        r.error or "",
                    ]
                )


def _sweep_job(args):
    from .sampler import run_chains

    spec, data, tau, iters, burn_in, thin, seed, chains = args
    try:
        sample = run_chains(spec.with_tau(tau), data, iters, burn_in, thin, seed, n_chains=chains)
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        logger.warning("tau=%g failed: %s", tau, exc)
        return SweepRow(tau, float("nan"), float("nan"), float("nan"), error=str(exc))
    variants = mspe_variants(sample, data)
    return SweepRow(
        tau=tau,
        mspe=variants["squared_mean"],
        mean_switches=float(sample.switch_counts().mean()),
        accept_rate=float("nan") if sample.accept_rate is None else sample.accept_rate,
        mspe_raw=variants["raw_mean"],
    )


def tau_sweep(
    spec: ModelSpec,
    data: CountSeries,
    tau_grid: Sequence[float],
    iters: int,
    burn_in: Optional[int] = None,
    thin: int = 1,
    seed: int = 0,
    chains: int = 1,
    workers: int = 1,
) -> SweepTable:
    """Fit one model per tau and tabulate MSPE and switch counts.

    Every grid point reuses the same seed, so fits at neighbouring tau
    share their random inputs and differ only through the penalty.
    """
    grid = sorted(float(t) for t in tau_grid)
    if not grid or any(t <= 0 for t in grid):
        raise ConfigError("tau grid must be non-empty and positive")
    if spec.kind == "standard":
        raise ConfigError("tau sweep needs a penalized or covariate model")
    jobs = [(spec, data, tau, iters, burn_in, thin, seed, chains) for tau in grid]
    if workers > 1 and len(jobs) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_sweep_job, jobs))
    else:
        rows = [_sweep_job(j) for j in jobs]
    table = SweepTable(rows)
    best = table.argmin
    if best is not None:
        best.is_argmin = True
    return table
