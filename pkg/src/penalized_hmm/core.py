"""Shared value types for the penalized Poisson HMM.

States are stored 0-based in every array (state ``k`` in the 1..n
numbering used in output files is index ``k - 1`` here). For two states
index 0 is the low state ``L`` and index 1 is the high state ``H``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np


class ConfigError(ValueError):
    """Inconsistent model or run configuration."""


class DataError(ValueError):
    """Input data violates the CountSeries contract."""


class NumericalError(ArithmeticError):
    """Numerical failure (invalid kernel, reducible chain, ...)."""


def state_labels(n: int) -> list[str]:
    """Human-readable state labels: L/H for two states, L/M/H for three."""
    if n == 2:
        return ["L", "H"]
    if n == 3:
        return ["L", "M", "H"]
    return [str(k + 1) for k in range(n)]


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class CountSeries:
    """Per-bin event counts N_1..N_T.

    Parameters
    ----------
    counts : array of int
        Non-negative event counts, one per bin.
    dt : float
        Bin width in seconds.
    entrance_times : array of int, optional
        Strictly increasing 1-based bin indices at which a forager
        enters the chamber.
    """

    counts: np.ndarray
    dt: float = 1.0
    entrance_times: Optional[np.ndarray] = None

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 1 or counts.size < 2:
            raise DataError("counts must be a 1-d series with T >= 2")
        if not np.all(np.equal(np.mod(counts, 1), 0)):
            raise DataError("counts must be integers")
        if np.any(counts < 0):
            raise DataError("counts must be non-negative")
        if not self.dt > 0:
            raise DataError("dt must be positive")
        object.__setattr__(self, "counts", _frozen(counts, np.int64))
        object.__setattr__(self, "dt", float(self.dt))
        if self.entrance_times is not None:
            ent = np.asarray(self.entrance_times, dtype=np.int64)
            if ent.ndim != 1:
                raise DataError("entrance_times must be 1-d")
            if np.any(np.diff(ent) <= 0):
                raise DataError("entrance_times must be strictly increasing")
            if ent.size and (ent[0] < 1 or ent[-1] > counts.size):
                raise DataError("entrance_times must lie in [1, T]")
            object.__setattr__(self, "entrance_times", _frozen(ent, np.int64))

    @property
    def T(self) -> int:
        return int(self.counts.size)


@dataclass(frozen=True, eq=False)
class EmissionParams:
    """Baseline rate plus non-negative per-state increments.

    The total rate of state ``k`` (0-based) is
    ``lambda_base + sum(lambda_incr[:k])``, so totals never decrease
    with the state index.
    """

    lambda_base: float
    lambda_incr: np.ndarray

    def __post_init__(self):
        incr = np.atleast_1d(np.asarray(self.lambda_incr, dtype=float))
        if not self.lambda_base > 0:
            raise ValueError("lambda_base must be positive")
        if np.any(incr < 0):
            raise ValueError("rate increments must be non-negative")
        object.__setattr__(self, "lambda_base", float(self.lambda_base))
        object.__setattr__(self, "lambda_incr", _frozen(incr))

    @property
    def n_states(self) -> int:
        return self.lambda_incr.size + 1

    def totals(self) -> np.ndarray:
        return self.lambda_base + np.concatenate(([0.0], np.cumsum(self.lambda_incr)))

    @classmethod
    def from_totals(cls, totals: Sequence[float]) -> "EmissionParams":
        totals = np.asarray(totals, dtype=float)
        return cls(totals[0], np.diff(totals))


@dataclass(frozen=True, eq=False)
class SwitchRates:
    """CTMC switching rates; ``gamma[i, j]`` is the i -> j rate per second."""

    gamma: np.ndarray

    def __post_init__(self):
        g = np.array(self.gamma, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1] or g.shape[0] < 2:
            raise ValueError("gamma must be a square matrix with n >= 2")
        np.fill_diagonal(g, 0.0)
        if np.any(g < 0) or not np.all(np.isfinite(g)):
            raise ValueError("switching rates must be finite and non-negative")
        object.__setattr__(self, "gamma", _frozen(g))

    @property
    def n_states(self) -> int:
        return self.gamma.shape[0]

    def exit_rates(self) -> np.ndarray:
        return self.gamma.sum(axis=1)

    @classmethod
    def two_state(cls, gamma_lh: float, gamma_hl: float) -> "SwitchRates":
        return cls(np.array([[0.0, gamma_lh], [gamma_hl, 0.0]]))


@dataclass(frozen=True, eq=False)
class CovariateParams:
    """Covariate-driven switching: gamma_ijt = exp(mu_ij + beta_ij f(w_t)).

    ``f(w) = 1 / (w**alpha + 1)``. Diagonals of ``mu`` and ``beta`` are
    unused and stored as zero.
    """

    mu: np.ndarray
    beta: np.ndarray
    alpha: float

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float)
        beta = np.array(self.beta, dtype=float)
        if mu.shape != beta.shape or mu.ndim != 2 or mu.shape[0] != mu.shape[1]:
            raise ValueError("mu and beta must be square matrices of equal shape")
        np.fill_diagonal(mu, 0.0)
        np.fill_diagonal(beta, 0.0)
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(beta)) and np.isfinite(self.alpha)):
            raise ValueError("covariate parameters must be finite")
        object.__setattr__(self, "mu", _frozen(mu))
        object.__setattr__(self, "beta", _frozen(beta))
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def n_states(self) -> int:
        return self.mu.shape[0]


PENALTY_FAMILIES = ("none", "ridge", "lasso")


@dataclass(frozen=True)
class PenaltySpec:
    """Shrinkage prior on switching rates.

    ``tau`` is the half-normal *variance* for ridge (density
    proportional to exp(-gamma**2 / (2 tau))) and the exponential *mean*
    for lasso.
    """

    family: str = "ridge"
    tau: float = float(np.exp(-6))

    def __post_init__(self):
        if self.family not in PENALTY_FAMILIES:
            raise ConfigError(f"unknown penalty family {self.family!r}")
        if self.family != "none" and not self.tau > 0:
            raise ConfigError("tau must be positive")
        object.__setattr__(self, "tau", float(self.tau))

    def log_prior(self, rate):
        """Unnormalized log prior density of rate(s) > 0."""
        rate = np.asarray(rate, dtype=float)
        if self.family == "ridge":
            return -(rate**2) / (2.0 * self.tau)
        if self.family == "lasso":
            return -rate / self.tau
        return np.zeros_like(rate)


@dataclass(frozen=True, eq=False)
class Hyperparams:
    """Prior hyperparameters.

    Gamma priors are shape/rate. ``incr_shape``/``incr_rate`` hold
    (c, d) for the second state, (e, f) for the third, and so on.
    ``beta_prior`` and ``alpha_prior`` are (mean, variance) pairs.
    """

    a: float = 1.0
    b: float = 1.0
    incr_shape: np.ndarray = field(default_factory=lambda: np.ones(1))
    incr_rate: np.ndarray = field(default_factory=lambda: np.ones(1))
    theta: np.ndarray = field(default_factory=lambda: np.array([[120000.0, 1.0], [1.0, 120000.0]]))
    pi0: np.ndarray = field(default_factory=lambda: np.array([0.5, 0.5]))
    beta_prior: tuple = (1.0, 100.0)
    alpha_prior: tuple = (1.0, 10.0)

    def __post_init__(self):
        shape = np.atleast_1d(np.asarray(self.incr_shape, dtype=float))
        rate = np.atleast_1d(np.asarray(self.incr_rate, dtype=float))
        theta = np.asarray(self.theta, dtype=float)
        pi0 = np.asarray(self.pi0, dtype=float)
        n = pi0.size
        if shape.size != n - 1 or rate.size != n - 1:
            raise ConfigError("need one increment (shape, rate) pair per non-baseline state")
        if theta.shape != (n, n):
            raise ConfigError("theta must be n x n")
        if min(self.a, self.b) <= 0 or np.any(shape <= 0) or np.any(rate <= 0):
            raise ConfigError("Gamma shape/rate hyperparameters must be positive")
        if np.any(theta <= 0):
            raise ConfigError("Dirichlet weights must be strictly positive")
        if np.any(pi0 < 0) or abs(pi0.sum() - 1.0) > 1e-12:
            raise ConfigError("pi0 must be a probability vector")
        if self.beta_prior[1] <= 0 or self.alpha_prior[1] <= 0:
            raise ConfigError("prior variances must be positive")
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "incr_shape", _frozen(shape))
        object.__setattr__(self, "incr_rate", _frozen(rate))
        object.__setattr__(self, "theta", _frozen(theta))
        object.__setattr__(self, "pi0", _frozen(pi0))
        object.__setattr__(self, "beta_prior", tuple(map(float, self.beta_prior)))
        object.__setattr__(self, "alpha_prior", tuple(map(float, self.alpha_prior)))

    @property
    def n_states(self) -> int:
        return self.pi0.size

    @classmethod
    def default(cls, n: int = 2, sticky: float = 120000.0) -> "Hyperparams":
        """All Gamma(1, 1), Dirichlet rows (sticky, 1, ..., 1) and uniform pi0."""
        theta = np.ones((n, n))
        np.fill_diagonal(theta, sticky)
        return cls(
            incr_shape=np.ones(n - 1),
            incr_rate=np.ones(n - 1),
            theta=theta,
            pi0=np.full(n, 1.0 / n),
        )


@dataclass(frozen=True, eq=False)
class ProbabilityRows:
    """Row-stochastic n x n transition matrix."""

    P: np.ndarray

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ValueError("P must be square")
        if np.any(P < 0) or np.any(P > 1):
            raise ValueError("transition probabilities must lie in [0, 1]")
        if np.max(np.abs(P.sum(axis=1) - 1.0)) > 1e-12:
            raise ValueError("rows of P must sum to 1")
        object.__setattr__(self, "P", _frozen(P))

    @property
    def n_states(self) -> int:
        return self.P.shape[0]


Transitions = Union[ProbabilityRows, SwitchRates, CovariateParams]


def _arr_to_json(a: np.ndarray) -> dict:
    # float.hex keeps the round-trip exact regardless of the JSON encoder
    if a.dtype.kind == "f":
        return {"dtype": "f8", "shape": list(a.shape), "hex": [float(x).hex() for x in a.ravel()]}
    return {"dtype": "i8", "shape": list(a.shape), "data": [int(x) for x in a.ravel()]}


def _arr_from_json(d: dict) -> np.ndarray:
    if d["dtype"] == "f8":
        return np.array([float.fromhex(x) for x in d["hex"]], dtype=float).reshape(d["shape"])
    return np.array(d["data"], dtype=np.int64).reshape(d["shape"])


@dataclass(frozen=True, eq=False)
class ParamState:
    """One MCMC draw.

    ``path`` holds 0-based states. ``augmented_counts`` (n x T) is the
    split of each count over the active rate components; it may be
    omitted for draws retained only for summaries.
    """

    emission: EmissionParams
    transitions: Transitions
    path: np.ndarray
    augmented_counts: Optional[np.ndarray] = None

    def __post_init__(self):
        n = self.emission.n_states
        if self.transitions.n_states != n:
            raise ValueError("emission and transitions disagree on the number of states")
        path = np.asarray(self.path)
        if path.size and (path.min() < 0 or path.max() >= n):
            raise ValueError("path values must lie in 0..n-1")
        object.__setattr__(self, "path", _frozen(path, np.int64))
        if self.augmented_counts is not None:
            aug = np.asarray(self.augmented_counts)
            if aug.shape != (n, path.size):
                raise ValueError("augmented_counts must be n x T")
            inactive = np.arange(n)[:, None] > path[None, :]
            if np.any(aug[inactive] != 0):
                raise ValueError("augmented counts above the active state must be zero")
            object.__setattr__(self, "augmented_counts", _frozen(aug, np.int64))

    @property
    def n_states(self) -> int:
        return self.emission.n_states

    def to_dict(self) -> dict:
        tr = self.transitions
        if isinstance(tr, ProbabilityRows):
            trd = {"kind": "probability_rows", "P": _arr_to_json(tr.P)}
        elif isinstance(tr, SwitchRates):
            trd = {"kind": "switch_rates", "gamma": _arr_to_json(tr.gamma)}
        else:
            trd = {
                "kind": "covariate",
                "mu": _arr_to_json(tr.mu),
                "beta": _arr_to_json(tr.beta),
                "alpha": tr.alpha.hex(),
            }
        return {
            "emission": {
                "lambda_base": self.emission.lambda_base.hex(),
                "lambda_incr": _arr_to_json(self.emission.lambda_incr),
            },
            "transitions": trd,
            "path": _arr_to_json(self.path),
            "augmented_counts": None
            if self.augmented_counts is None
            else _arr_to_json(self.augmented_counts),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ParamState":
        em = EmissionParams(
            float.fromhex(d["emission"]["lambda_base"]),
            _arr_from_json(d["emission"]["lambda_incr"]),
        )
        trd = d["transitions"]
        if trd["kind"] == "probability_rows":
            tr = ProbabilityRows(_arr_from_json(trd["P"]))
        elif trd["kind"] == "switch_rates":
            tr = SwitchRates(_arr_from_json(trd["gamma"]))
        elif trd["kind"] == "covariate":
            tr = CovariateParams(
                _arr_from_json(trd["mu"]), _arr_from_json(trd["beta"]), float.fromhex(trd["alpha"])
            )
        else:
            raise ValueError(f"unknown transitions kind {trd['kind']!r}")
        aug = d.get("augmented_counts")
        return cls(em, tr, _arr_from_json(d["path"]), None if aug is None else _arr_from_json(aug))


MODEL_KINDS = ("standard", "penalized", "covariate")


def _default_init_totals(n: int) -> tuple:
    if n == 2:
        return (0.007, 0.05)
    return tuple(float(x) for x in np.geomspace(0.004, 0.05, n))


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Everything that defines one model fit apart from data and seed.

    ``kind`` selects the transition model: ``"standard"`` (Dirichlet rows),
    ``"penalized"`` (shrinkage prior on CTMC rates) or ``"covariate"``
    (rates driven by time since the last chamber entrance).
    """

    n_states: int = 2
    kind: str = "penalized"
    penalty: PenaltySpec = field(default_factory=PenaltySpec)
    hyper: Optional[Hyperparams] = None
    dt: float = 1.0
    init_lambda: Optional[tuple] = None
    init_offdiag_prob: float = 0.003
    init_gamma: float = 0.003
    init_mu: float = float(np.log(0.003))
    init_beta: float = 0.0
    init_alpha: float = 1.0
    covariate_offset: float = 1e6
    covariate_transform: str = "elapsed"
    target_accept: Optional[float] = None
    adapt_batch: int = 50
    init_log_step: Optional[float] = None

    def __post_init__(self):
        if self.n_states < 2:
            raise ConfigError("need at least two states")
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}")
        if self.kind != "standard" and self.penalty.family == "none":
            raise ConfigError(f"{self.kind} model needs a ridge or lasso penalty")
        if self.hyper is None:
            object.__setattr__(self, "hyper", Hyperparams.default(self.n_states))
        if self.hyper.n_states != self.n_states:
            raise ConfigError("hyperparameters sized for a different number of states")
        if self.init_lambda is None:
            object.__setattr__(self, "init_lambda", _default_init_totals(self.n_states))
        init = np.asarray(self.init_lambda, dtype=float)
        if init.size != self.n_states or init[0] <= 0 or np.any(np.diff(init) < 0):
            raise ConfigError("init_lambda must hold n positive non-decreasing totals")
        if not 0 < self.init_offdiag_prob * (self.n_states - 1) < 1:
            raise ConfigError("init_offdiag_prob out of range")
        if self.init_gamma <= 0:
            raise ConfigError("init_gamma must be positive")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.adapt_batch < 1:
            raise ConfigError("adapt_batch must be >= 1")
        if self.target_accept is not None and not 0 < self.target_accept < 1:
            raise ConfigError("target_accept must lie in (0, 1)")
        if self.covariate_transform not in ("elapsed", "inverse"):
            raise ConfigError(f"unknown covariate transform {self.covariate_transform!r}")

    def with_tau(self, tau: float) -> "ModelSpec":
        from dataclasses import replace

        return replace(self, penalty=PenaltySpec(self.penalty.family, tau))


class _DrawView(Sequence):
    def __init__(self, sample: "PosteriorSample"):
        self._s = sample

    def __len__(self):
        return self._s.n_draws

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        return self._s.draw(i)


@dataclass(eq=False)
class PosteriorSample:
    """Retained draws of one or more chains, stored column-wise.

    ``P`` holds one transition matrix per draw (for the covariate model,
    the kernel averaged over the observed covariate series). ``paths`` are
    0-based. ``state_marginals`` is estimated from every post-burn-in
    iteration, not only the retained ones.
    """

    spec: ModelSpec
    lambda_totals: np.ndarray
    P: np.ndarray
    paths: np.ndarray
    state_marginals: np.ndarray
    loglik: np.ndarray
    gamma: Optional[np.ndarray] = None
    mu: Optional[np.ndarray] = None
    beta: Optional[np.ndarray] = None
    alpha: Optional[np.ndarray] = None
    w: Optional[np.ndarray] = None
    accept_rate: Optional[float] = None
    summaries: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return int(self.lambda_totals.shape[0])

    @property
    def n_states(self) -> int:
        return self.spec.n_states

    @property
    def draws(self) -> Sequence:
        return _DrawView(self)

    def switch_counts(self) -> np.ndarray:
        """Number of t with X_t != X_{t+1}, per retained draw."""
        return np.count_nonzero(np.diff(self.paths, axis=1), axis=1)

    def draw(self, i: int) -> ParamState:
        if i < 0:
            i += self.n_draws
        em = EmissionParams.from_totals(self.lambda_totals[i])
        if self.spec.kind == "standard":
            tr = ProbabilityRows(self.P[i])
        elif self.spec.kind == "penalized":
            tr = SwitchRates(self.gamma[i])
        else:
            tr = CovariateParams(self.mu[i], self.beta[i], self.alpha[i])
        return ParamState(em, tr, self.paths[i])
