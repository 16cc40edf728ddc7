"""MCMC engine: FFBS path draws, Gibbs updates and adaptive random-walk MH.

One iteration of :func:`run_chain` updates, in order, the transition
parameters, the latent path (forward filtering, backward sampling), the
split of each count over the rate components, and the emission rates.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, replace
from typing import Optional

import numba
import numpy as np

from .chain import (
    covariate_rates,
    covariate_transform,
    is_valid_ptm_regime,
    ptm_matrix,
    stationary_distribution,
    transition_counts,
    update_dirichlet_rows,
    covariate_series,
)
from .core import (
    ConfigError,
    CountSeries,
    CovariateParams,
    EmissionParams,
    Hyperparams,
    ModelSpec,
    NumericalError,
    PenaltySpec,
    PosteriorSample,
    ProbabilityRows,
    SwitchRates,
    state_labels,
)
from .emission import log_emission_matrix, split_all, update_emission_rates

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# forward filtering / backward sampling


@numba.njit(cache=True)
def _forward(emis, kernels, pi0):
    T, n = emis.shape
    K = kernels.shape[0]
    alpha = np.empty((T, n))
    log_c = np.empty(T)
    s = 0.0
    for i in range(n):
        alpha[0, i] = pi0[i] * emis[0, i]
        s += alpha[0, i]
    for i in range(n):
        alpha[0, i] /= s
    log_c[0] = np.log(s)
    for t in range(1, T):
        P = kernels[min(t - 1, K - 1)]
        s = 0.0
        for j in range(n):
            acc = 0.0
            for i in range(n):
                acc += alpha[t - 1, i] * P[i, j]
            acc *= emis[t, j]
            alpha[t, j] = acc
            s += acc
        for j in range(n):
            alpha[t, j] /= s
        log_c[t] = np.log(s)
    return alpha, log_c


@numba.njit(cache=True)
def _backward(alpha, kernels, u):
    T, n = alpha.shape
    K = kernels.shape[0]
    path = np.empty(T, dtype=np.int64)
    w = np.empty(n)
    # X_T from alpha_T
    total = 0.0
    for i in range(n):
        total += alpha[T - 1, i]
    target = u[T - 1] * total
    acc = 0.0
    k = n - 1
    for i in range(n):
        acc += alpha[T - 1, i]
        if target < acc:
            k = i
            break
    path[T - 1] = k
    for t in range(T - 2, -1, -1):
        P = kernels[min(t, K - 1)]
        nxt = path[t + 1]
        total = 0.0
        for i in range(n):
            w[i] = alpha[t, i] * P[i, nxt]
            total += w[i]
        target = u[t] * total
        acc = 0.0
        k = n - 1
        for i in range(n):
            acc += w[i]
            if target < acc:
                k = i
                break
        path[t] = k
    return path


@dataclass(frozen=True, eq=False)
class ForwardMatrix:
    """Row-normalised forward probabilities and their log scaling constants.

    ``alpha[t]`` is the filtered distribution of X_t given N_1..N_t; the
    log-evidence is ``log_scale.sum()``.
    """

    alpha: np.ndarray
    log_scale: np.ndarray

    @property
    def loglik(self) -> float:
        return float(self.log_scale.sum())


def _as_kernel_stack(kernel) -> np.ndarray:
    if isinstance(kernel, ProbabilityRows):
        kernel = kernel.P
    K = np.asarray(kernel, dtype=float)
    if K.ndim == 2:
        K = K[None]
    return np.ascontiguousarray(K)


def forward_filter(counts, emission: EmissionParams, kernel, pi0) -> ForwardMatrix:
    """Scaled forward recursion.

    ``kernel`` is one transition matrix or a stack whose entry ``t``
    (0-based) governs the move from X_t to X_{t+1}.
    """
    log_e = log_emission_matrix(counts, emission)
    m = log_e.max(axis=1)
    emis = np.exp(log_e - m[:, None])
    kernels = _as_kernel_stack(kernel)
    alpha, log_c = _forward(emis, kernels, np.asarray(pi0, dtype=float))
    return ForwardMatrix(alpha, log_c + m)


def backward_sample(forward: ForwardMatrix, kernel, rng: np.random.Generator) -> np.ndarray:
    """Draw X_1..X_T (0-based) from their joint full conditional."""
    u = rng.random(forward.alpha.shape[0])
    return _backward(forward.alpha, _as_kernel_stack(kernel), u)


def ffbs(counts, emission: EmissionParams, kernel, pi0, rng: np.random.Generator):
    """Forward filter then backward sample; returns (path, log-likelihood)."""
    fwd = forward_filter(counts, emission, kernel, pi0)
    return backward_sample(fwd, kernel, rng), fwd.loglik


# ---------------------------------------------------------------------------
# adaptive random-walk Metropolis-Hastings


@dataclass(frozen=True)
class MhAdapter:
    """Batch-wise log-scale tuning of a random-walk proposal.

    Every ``batch`` iterations ``log_step`` moves by
    ``sign(rate - target_accept) * min(0.5, k**-0.5)`` where ``k`` counts
    completed batches, so the adjustments shrink over time.
    """

    log_step: float = float(np.log(0.5))
    target_accept: float = 0.44
    batch: int = 50
    accept_count: int = 0
    n_batches: int = 0
    frozen: bool = False
    total_accepted: int = 0
    total_proposed: int = 0

    @property
    def step(self) -> float:
        return float(np.exp(self.log_step))

    def freeze(self) -> "MhAdapter":
        return replace(self, frozen=True, total_accepted=0, total_proposed=0)


def adapt(adapter: MhAdapter, accepted: bool, iteration: int) -> MhAdapter:
    """Record one MH outcome; adjust the step at the end of each batch."""
    if iteration < 1:
        raise ValueError("iteration counts from 1")
    acc = adapter.accept_count + int(accepted)
    tallies = dict(
        total_accepted=adapter.total_accepted + int(accepted),
        total_proposed=adapter.total_proposed + 1,
    )
    if adapter.frozen:
        return replace(adapter, **tallies)
    if iteration % adapter.batch:
        return replace(adapter, accept_count=acc, **tallies)
    k = adapter.n_batches + 1
    rate = acc / adapter.batch
    delta = np.sign(rate - adapter.target_accept) * min(0.5, k**-0.5)
    return replace(
        adapter, log_step=adapter.log_step + float(delta), accept_count=0, n_batches=k, **tallies
    )


def _offdiag(n: int) -> np.ndarray:
    return ~np.eye(n, dtype=bool)


def rates_log_target(log_gamma: np.ndarray, counts: np.ndarray, penalty: PenaltySpec, dt: float) -> float:
    """Log full conditional of the off-diagonal log rates.

    Path likelihood sum_ij n_ij log p_ij(gamma) plus the shrinkage log
    prior on gamma plus the log-Jacobian sum(log gamma).
    """
    n = counts.shape[0]
    g = np.zeros((n, n))
    g[_offdiag(n)] = np.exp(log_gamma)
    if not np.all(np.isfinite(g)) or not is_valid_ptm_regime(g, dt):
        return -np.inf
    P = ptm_matrix(g, dt)
    with np.errstate(divide="ignore"):
        ll = (counts * np.log(np.where(counts > 0, P, 1.0))).sum()
    return float(ll + penalty.log_prior(np.exp(log_gamma)).sum() + log_gamma.sum())


def update_rates_mh(
    current: SwitchRates,
    path: np.ndarray,
    penalty: PenaltySpec,
    adapter: MhAdapter,
    rng: np.random.Generator,
    dt: float = 1.0,
):
    """Joint normal random walk on log switching rates.

    Returns ``(rates, accepted)``. Proposals outside the valid kernel
    regime have zero target density and are rejected.
    """
    n = current.n_states
    mask = _offdiag(n)
    counts = transition_counts(path, n)
    with np.errstate(divide="ignore"):
        cur = np.log(current.gamma[mask])
    prop = cur + adapter.step * rng.standard_normal(cur.size)
    log_u = np.log(rng.random())
    if adapter.step == 0.0:
        return current, True
    lp_prop = rates_log_target(prop, counts, penalty, dt)
    lp_cur = rates_log_target(cur, counts, penalty, dt)
    if log_u < lp_prop - lp_cur:
        g = np.zeros((n, n))
        g[mask] = np.exp(prop)
        return SwitchRates(g), True
    return current, False


# covariate block: theta = (mu offdiag, beta offdiag, alpha)


def _cov_unpack(theta: np.ndarray, n: int):
    m = n * (n - 1)
    mask = _offdiag(n)
    mu = np.zeros((n, n))
    beta = np.zeros((n, n))
    mu[mask] = theta[:m]
    beta[mask] = theta[m : 2 * m]
    return mu, beta, float(theta[-1])


def _cov_pack(params: CovariateParams) -> np.ndarray:
    mask = _offdiag(params.n_states)
    return np.concatenate((params.mu[mask], params.beta[mask], [params.alpha]))


def covariate_path_loglik(params: CovariateParams, path: np.ndarray, w: np.ndarray, dt: float = 1.0) -> float:
    """sum_t log P_t[X_t, X_{t+1}] with P_t built from w_t."""
    path = np.asarray(path, dtype=np.int64)
    f = covariate_transform(w[: path.size - 1], params.alpha)
    src = path[:-1]
    dst = path[1:]
    # rates out of the occupied state only: (T-1, n)
    with np.errstate(over="ignore"):
        g = np.exp(params.mu[src] + params.beta[src] * f[:, None])
    g[np.arange(src.size), src] = 0.0
    if not np.all(np.isfinite(g)):
        return -np.inf
    exit_rates = g.sum(axis=1)
    decay = np.exp(-exit_rates * dt)
    stay_p = 1.0 - exit_rates * decay
    if np.any(stay_p < 0):
        return -np.inf
    moved = src != dst
    with np.errstate(divide="ignore"):
        ll_move = np.log(g[np.flatnonzero(moved), dst[moved]]) - exit_rates[moved] * dt
        ll_stay = np.log(stay_p[~moved])
    return float(ll_move.sum() + ll_stay.sum())


def covariate_log_prior(params: CovariateParams, w: np.ndarray, penalty: PenaltySpec, hyper: Hyperparams) -> float:
    """Log prior of (mu, beta, alpha) on the mu scale.

    The baseline rate exp(mu_ij) gets the shrinkage prior with its scale
    divided by c(beta_ij), normalising constant included since it depends
    on beta; the term mu_ij is the Jacobian of exp.
    """
    n = params.n_states
    mask = _offdiag(n)
    mu = params.mu[mask]
    beta = params.beta[mask]
    f = covariate_transform(w, params.alpha)
    with np.errstate(over="ignore"):
        c = np.exp(beta[:, None] * f[None, :]).mean(axis=1)
        base = np.exp(mu)
    if not (np.all(np.isfinite(c)) and np.all(np.isfinite(base))):
        return -np.inf
    tau = penalty.tau
    if penalty.family == "ridge":
        lp = np.log(c) - (base * c) ** 2 / (2.0 * tau) + mu
    elif penalty.family == "lasso":
        lp = np.log(c) - base * c / tau + mu
    else:
        raise ConfigError("covariate model needs a ridge or lasso penalty")
    b_mean, b_var = hyper.beta_prior
    a_mean, a_var = hyper.alpha_prior
    lp_beta = -((beta - b_mean) ** 2) / (2.0 * b_var)
    lp_alpha = -((params.alpha - a_mean) ** 2) / (2.0 * a_var)
    return float(lp.sum() + lp_beta.sum() + lp_alpha)


def covariate_log_target(theta, n, path, w, penalty, hyper, dt) -> float:
    mu, beta, alpha = _cov_unpack(theta, n)
    if not np.all(np.isfinite(theta)):
        return -np.inf
    params = CovariateParams(mu, beta, alpha)
    lp = covariate_log_prior(params, w, penalty, hyper)
    if not np.isfinite(lp):
        return -np.inf
    return lp + covariate_path_loglik(params, path, w, dt)


def update_covariate_params_mh(
    current: CovariateParams,
    path: np.ndarray,
    w: np.ndarray,
    penalty: PenaltySpec,
    hyper: Hyperparams,
    adapter: MhAdapter,
    rng: np.random.Generator,
    dt: float = 1.0,
    n_steps: int = 1,
    proposal_chol: Optional[np.ndarray] = None,
    fixed: Optional[np.ndarray] = None,
):
    """Joint random-walk MH on (mu_ij, beta_ij, alpha).

    The parameter vector is the off-diagonal ``mu`` (row-major), then the
    off-diagonal ``beta``, then ``alpha``. The proposal is
    ``theta + step * L z`` with ``L = proposal_chol`` (identity by
    default); components flagged in the boolean mask ``fixed`` are held
    at their current values. Returns ``(params, accepted)`` where
    ``accepted`` reports the last step; ``n_steps=0`` returns the input.
    """
    n = current.n_states
    theta = _cov_pack(current)
    L = np.eye(theta.size) if proposal_chol is None else proposal_chol
    free = np.ones(theta.size) if fixed is None else (~np.asarray(fixed, dtype=bool)).astype(float)
    accepted = False
    lp_cur = None
    for _ in range(n_steps):
        if lp_cur is None:
            lp_cur = covariate_log_target(theta, n, path, w, penalty, hyper, dt)
        prop = theta + free * (adapter.step * (L @ rng.standard_normal(theta.size)))
        lp_prop = covariate_log_target(prop, n, path, w, penalty, hyper, dt)
        accepted = bool(np.log(rng.random()) < lp_prop - lp_cur)
        if accepted:
            theta, lp_cur = prop, lp_prop
    if n_steps == 0:
        return current, False
    return CovariateParams(*_cov_unpack(theta, n)), accepted


# ---------------------------------------------------------------------------
# chain orchestration


class IterationStreams:
    """Counter-based random streams, one per (iteration, update step).

    Each update draws from its own Philox substream, so a variable number
    of draws in one update never shifts the randomness of any other.
    Chains that share a seed therefore share every random input, which
    couples runs across nearby model settings (e.g. a grid of tau).
    """

    def __init__(self, seed=None):
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        self.key = ss.generate_state(2, np.uint64)

    def __call__(self, iteration: int, step: int) -> np.random.Generator:
        counter = np.array([0, 0, step, iteration], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=self.key, counter=counter))


_STEP_TRANSITIONS, _STEP_PATH, _STEP_SPLIT, _STEP_EMISSION = range(4)


def _default_target(spec: ModelSpec) -> float:
    if spec.target_accept is not None:
        return spec.target_accept
    n = spec.n_states
    d = n * (n - 1) if spec.kind == "penalized" else 2 * n * (n - 1) + 1
    return 0.44 if d <= 2 else 0.234


def _initial_transitions(spec: ModelSpec):
    n = spec.n_states
    mask = _offdiag(n)
    if spec.kind == "standard":
        P = np.full((n, n), spec.init_offdiag_prob)
        np.fill_diagonal(P, 1.0 - spec.init_offdiag_prob * (n - 1))
        return ProbabilityRows(P)
    if spec.kind == "penalized":
        g = np.where(mask, spec.init_gamma / (n - 1), 0.0)
        return SwitchRates(g)
    mu = np.where(mask, spec.init_mu, 0.0)
    beta = np.where(mask, spec.init_beta, 0.0)
    return CovariateParams(mu, beta, spec.init_alpha)


def ess(x: np.ndarray) -> float:
    """Effective sample size from the initial positive sequence of autocorrelations."""
    x = np.asarray(x, dtype=float)
    m = x.size
    if m < 4 or np.var(x) == 0:
        return float(m)
    xc = x - x.mean()
    nfft = 1 << (2 * m - 1).bit_length()
    f = np.fft.rfft(xc, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:m] / m
    rho = acov / acov[0]
    s = 0.0
    for k in range(0, m - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair <= 0:
            break
        s += pair
    tau = max(2.0 * s - 1.0, 1.0)
    return float(m / tau)


def _interval(x: np.ndarray) -> dict:
    lo, hi = np.quantile(x, [0.025, 0.975])
    return {"mean": float(np.mean(x)), "lower": float(lo), "upper": float(hi), "ess": ess(x)}


def summarize(sample: PosteriorSample) -> dict:
    """Posterior mean, equal-tailed 95% interval and ESS per scalar parameter."""
    n = sample.n_states
    lab = state_labels(n)
    out = {}
    tot = sample.lambda_totals
    out[f"lambda_{lab[0]}"] = _interval(tot[:, 0])
    for k in range(1, n):
        out[f"lambda_{lab[k]}_incr"] = _interval(tot[:, k] - tot[:, k - 1])
        out[f"lambda_{lab[k]}_total"] = _interval(tot[:, k])
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
    if sample.gamma is not None:
        for i, j in pairs:
            out[f"gamma_{lab[i]}{lab[j]}"] = _interval(sample.gamma[:, i, j])
    if sample.mu is not None:
        for i, j in pairs:
            out[f"mu_{lab[i]}{lab[j]}"] = _interval(sample.mu[:, i, j])
            out[f"exp_mu_{lab[i]}{lab[j]}"] = _interval(np.exp(sample.mu[:, i, j]))
        for i, j in pairs:
            out[f"beta_{lab[i]}{lab[j]}"] = _interval(sample.beta[:, i, j])
        out["alpha"] = _interval(sample.alpha)
    for i in range(n):
        for j in range(n):
            out[f"p_{lab[i]}{lab[j]}"] = _interval(sample.P[:, i, j])
    out["switches"] = _interval(sample.switch_counts().astype(float))
    return out


def _check_inputs(spec: ModelSpec, data: CountSeries, iters: int, burn_in: int, thin: int):
    if not iters > burn_in >= 0:
        raise ConfigError("need iters > burn_in >= 0")
    if thin < 1:
        raise ConfigError("thin must be >= 1")
    if spec.kind == "covariate" and data.entrance_times is None:
        raise ConfigError("covariate model needs entrance_times in the data")
    if spec.dt != data.dt:
        raise ConfigError(f"model dt={spec.dt} disagrees with data dt={data.dt}")


def run_chain(
    spec: ModelSpec,
    data: CountSeries,
    iters: int,
    burn_in: Optional[int] = None,
    thin: int = 1,
    seed=None,
    progress: bool = False,
) -> PosteriorSample:
    """Run one MCMC chain; deterministic given ``seed``.

    ``burn_in`` defaults to ``iters // 2``. Iterations are numbered from
    1 and iteration ``it`` is retained when ``it > burn_in`` and
    ``(it - burn_in) % thin == 0``. Proposal adaptation stops at the end
    of burn-in.
    """
    if burn_in is None:
        burn_in = iters // 2
    _check_inputs(spec, data, iters, burn_in, thin)
    streams = IterationStreams(seed)
    n, T, dt = spec.n_states, data.T, spec.dt
    counts = np.asarray(data.counts)
    hyper = spec.hyper
    pi0 = np.asarray(hyper.pi0)

    w = None
    if spec.kind == "covariate":
        w = covariate_series(
            data.entrance_times, T, dt, spec.covariate_offset, spec.covariate_transform
        )

    def kernels_of(tr):
        if spec.kind == "standard":
            return tr.P
        if spec.kind == "penalized":
            return ptm_matrix(tr.gamma, dt)
        return ptm_matrix(covariate_rates(tr, w[: T - 1]), dt)

    emission = EmissionParams.from_totals(spec.init_lambda)
    transitions = _initial_transitions(spec)
    path, _ = ffbs(counts, emission, kernels_of(transitions), pi0, streams(0, _STEP_PATH))

    target = _default_target(spec)
    if spec.init_log_step is not None:
        log_step0 = spec.init_log_step
    else:
        log_step0 = float(np.log(0.5 if spec.kind == "penalized" else 0.1))
    adapter = MhAdapter(log_step=log_step0, target_accept=target, batch=spec.adapt_batch)
    d_cov = 2 * n * (n - 1) + 1
    chol = np.eye(d_cov)
    cov_hist = []

    n_keep = (iters - burn_in) // thin
    keep_tot = np.empty((n_keep, n))
    keep_P = np.empty((n_keep, n, n))
    keep_paths = np.empty((n_keep, T), dtype=np.int8)
    keep_ll = np.empty(n_keep)
    keep_gamma = np.empty((n_keep, n, n)) if spec.kind == "penalized" else None
    keep_mu = np.empty((n_keep, n, n)) if spec.kind == "covariate" else None
    keep_beta = np.empty((n_keep, n, n)) if spec.kind == "covariate" else None
    keep_alpha = np.empty(n_keep) if spec.kind == "covariate" else None
    marg = np.zeros((T, n))
    rows = np.arange(T)
    j = 0
    t0 = time.perf_counter()

    for it in range(1, iters + 1):
        if it == burn_in + 1 and spec.kind != "standard":
            adapter = adapter.freeze()
        # (1) transition parameters
        rng = streams(it, _STEP_TRANSITIONS)
        if spec.kind == "standard":
            transitions = update_dirichlet_rows(path, hyper.theta, rng)
        elif spec.kind == "penalized":
            transitions, acc = update_rates_mh(transitions, path, spec.penalty, adapter, rng, dt)
            adapter = adapt(adapter, acc, it)
        else:
            transitions, acc = update_covariate_params_mh(
                transitions, path, w, spec.penalty, hyper, adapter, rng, dt, proposal_chol=chol
            )
            adapter = adapt(adapter, acc, it)
            if it <= burn_in:
                cov_hist.append(_cov_pack(transitions))
                chol = _maybe_update_chol(chol, cov_hist, it, burn_in, spec.adapt_batch)
        # (2) latent path
        kern = kernels_of(transitions)
        path, loglik = ffbs(counts, emission, kern, pi0, streams(it, _STEP_PATH))
        # (3) augmentation split, (4) emission rates
        aug = split_all(counts, path, emission, streams(it, _STEP_SPLIT))
        emission = update_emission_rates(aug, path, hyper, streams(it, _STEP_EMISSION))

        if it > burn_in:
            marg[rows, path] += 1.0
            if (it - burn_in) % thin == 0:
                keep_tot[j] = emission.totals()
                keep_paths[j] = path
                keep_ll[j] = loglik
                if spec.kind == "covariate":
                    keep_P[j] = kern.mean(axis=0)
                    keep_mu[j] = transitions.mu
                    keep_beta[j] = transitions.beta
                    keep_alpha[j] = transitions.alpha
                else:
                    keep_P[j] = kern
                    if keep_gamma is not None:
                        keep_gamma[j] = transitions.gamma
                j += 1
        if progress and it % 1000 == 0:
            logger.info("iteration %d/%d (%.1fs)", it, iters, time.perf_counter() - t0)

    marg /= iters - burn_in
    sample = PosteriorSample(
        spec=spec,
        lambda_totals=keep_tot,
        P=keep_P,
        paths=keep_paths,
        state_marginals=marg,
        loglik=keep_ll,
        gamma=keep_gamma,
        mu=keep_mu,
        beta=keep_beta,
        alpha=keep_alpha,
        w=w,
        accept_rate=None
        if spec.kind == "standard"
        else adapter.total_accepted / max(adapter.total_proposed, 1),
    )
    sample.summaries = summarize(sample)
    sample.diagnostics = {
        "iters": iters,
        "burn_in": burn_in,
        "thin": thin,
        "wall_time_s": time.perf_counter() - t0,
        "final_log_step": adapter.log_step if spec.kind != "standard" else None,
    }
    return sample


def _maybe_update_chol(chol, hist, it, burn_in, batch):
    """Learn the covariate proposal shape from the first part of burn-in.

    Every ten batches, after at least 500 burn-in draws, the shape becomes
    the Cholesky factor of the empirical covariance of the latter half of
    the history, normalised to unit geometric-mean scale so that the
    adapted log step keeps its meaning.
    """
    if it % (10 * batch) or it < 500 or it > 0.8 * burn_in:
        return chol
    H = np.asarray(hist[len(hist) // 2 :])
    C = np.cov(H, rowvar=False) + 1e-8 * np.eye(H.shape[1])
    sign, logdet = np.linalg.slogdet(C)
    if sign <= 0:
        return chol
    C /= np.exp(logdet / C.shape[0])
    try:
        return np.linalg.cholesky(C)
    except np.linalg.LinAlgError:
        return chol


def merge_samples(samples: list) -> PosteriorSample:
    """Pool draws from independent chains of the same spec."""
    first = samples[0]

    def cat(attr):
        vals = [getattr(s, attr) for s in samples]
        return None if vals[0] is None else np.concatenate(vals)

    sizes = np.array([s.n_draws for s in samples], dtype=float)
    marg = sum(s.state_marginals for s in samples) / len(samples)
    accs = [s.accept_rate for s in samples]
    merged = PosteriorSample(
        spec=first.spec,
        lambda_totals=cat("lambda_totals"),
        P=cat("P"),
        paths=cat("paths"),
        state_marginals=marg,
        loglik=cat("loglik"),
        gamma=cat("gamma"),
        mu=cat("mu"),
        beta=cat("beta"),
        alpha=cat("alpha"),
        w=first.w,
        accept_rate=None if accs[0] is None else float(np.average(accs, weights=sizes)),
    )
    merged.summaries = summarize(merged)
    merged.diagnostics = {"chains": [s.diagnostics for s in samples]}
    return merged


def _chain_job(args):
    spec, data, iters, burn_in, thin, seed = args
    return run_chain(spec, data, iters, burn_in, thin, seed)


def run_chains(
    spec: ModelSpec,
    data: CountSeries,
    iters: int,
    burn_in: Optional[int] = None,
    thin: int = 1,
    seed: int = 0,
    n_chains: int = 1,
    workers: int = 1,
) -> PosteriorSample:
    """Independent chains seeded from spawned streams of ``seed``, pooled.

    Results do not depend on ``workers``.
    """
    seeds = np.random.SeedSequence(seed).spawn(n_chains)
    jobs = [(spec, data, iters, burn_in, thin, s) for s in seeds]
    if workers > 1 and n_chains > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as ex:
            samples = list(ex.map(_chain_job, jobs))
    else:
        samples = [_chain_job(j) for j in jobs]
    return samples[0] if n_chains == 1 else merge_samples(samples)


def posterior_P_hat(sample: PosteriorSample) -> np.ndarray:
    """Posterior mean transition matrix."""
    return sample.P.mean(axis=0)


def posterior_delta_hat(sample: PosteriorSample) -> Optional[np.ndarray]:
    try:
        return stationary_distribution(posterior_P_hat(sample))
    except NumericalError:
        return None
