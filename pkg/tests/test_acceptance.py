"""Acceptance criteria, each at its stated tolerance.

Every criterion prints one ``[criterion N] PASS|FAIL`` line. Run with
``pytest tests/test_acceptance.py -v -s`` to see the lines inline (they
are also repeated in the terminal summary), or directly with
``python3 tests/test_acceptance.py``.
"""

import sys
import time
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import GAMMA, LAMBDA_TOTALS, n_switches, synthetic_series  # noqa: E402

from penalized_hmm.chain import (  # noqa: E402
    InvalidRegime,
    is_valid_ptm_regime,
    ptm_from_rates,
    stationary_distribution,
    transition_counts,
    update_dirichlet_rows,
)
from penalized_hmm.core import EmissionParams, Hyperparams, ModelSpec, PenaltySpec, SwitchRates  # noqa: E402
from penalized_hmm.emission import emission_posterior, update_emission_rates  # noqa: E402
from penalized_hmm.sampler import MhAdapter, adapt, backward_sample, forward_filter, run_chain, update_rates_mh  # noqa: E402
from penalized_hmm.selection import tau_sweep  # noqa: E402
from penalized_hmm.simulate import (  # noqa: E402
    REFERENCE_P,
    enumerate_path_posterior,
    grid_posterior_1d,
    simulate_entrances,
)

RESULTS = {}


def report(n: int, ok: bool, detail: str) -> bool:
    line = f"[criterion {n}] {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print(line, flush=True)
    return ok


@lru_cache(maxsize=None)
def overfit_dataset():
    """T = 14400 series from the penalized model at the reported posterior means."""
    return synthetic_series(T=14400, seed=2024)


def modal_switches(sample) -> int:
    return n_switches(sample.state_marginals.argmax(axis=1))


# 1 ------------------------------------------------------------------------


def criterion_1():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    n_inst, n_draws = 20, 100000
    worst_ev, worst_z = 0.0, 0.0
    for _ in range(n_inst):
        T = int(rng.integers(2, 13))
        P = rng.dirichlet([2.0, 2.0], size=2)
        em = EmissionParams.from_totals(np.sort(rng.uniform(0.1, 3.0, 2)))
        pi0 = rng.dirichlet([2.0, 2.0])
        counts = rng.poisson(1.0, T)
        exact, log_ev = enumerate_path_posterior(counts, em, P, pi0)
        fwd = forward_filter(counts, em, P, pi0)
        worst_ev = max(worst_ev, abs(fwd.loglik - log_ev))
        freq = np.zeros(T)
        for _ in range(n_draws):
            freq += backward_sample(fwd, P, rng)
        p = exact[:, 1]
        se = np.sqrt(p * (1 - p) / n_draws)
        z = np.abs(freq / n_draws - p) / np.maximum(se, 1e-300)
        worst_z = max(worst_z, float(np.max(np.where(se > 0, z, 0.0))))
    wall = time.perf_counter() - t0
    ok = worst_ev < 1e-8 and worst_z <= 3.0 and wall < 60
    return report(1, ok, f"max |log-evidence diff| = {worst_ev:.1e}, max marginal z = {worst_z:.2f} (<= 3), {wall:.0f}s")


# 2 ------------------------------------------------------------------------


def criterion_2():
    t0 = time.perf_counter()
    rng = np.random.default_rng(202)
    n = 100000
    hyper = Hyperparams.default(2)
    path = np.r_[np.zeros(60, dtype=int), np.ones(40, dtype=int)]
    aug = np.zeros((2, 100), dtype=int)
    aug[0, [3, 70]] = 1
    aug[1, 80:85] = 2
    shape, rate = emission_posterior(aug, path, hyper)
    draws = np.array([update_emission_rates(aug, path, hyper, rng).totals() for _ in range(n)])
    comps = [draws[:, 0], draws[:, 1] - draws[:, 0]]
    z_em = []
    for x, k, r in zip(comps, shape, rate):
        mean, var = k / r, k / r**2
        z_em.append(abs(x.mean() - mean) / np.sqrt(var / n))
        z_em.append(abs(x.var() - var) / (var * np.sqrt((2 + 6 / k) / n)))

    theta = np.array([[3.0, 1.0], [2.0, 5.0]])
    dpath = np.array([0, 0, 1, 1, 0, 1, 1, 1, 0, 0, 0])
    alpha = theta + transition_counts(dpath, 2)
    P = np.array([update_dirichlet_rows(dpath, theta, rng).P for _ in range(n)])
    z_dir = []
    for i in range(2):
        a0 = alpha[i].sum()
        m = alpha[i] / a0
        v = m * (1 - m) / (a0 + 1)
        z_dir.extend(np.abs(P[:, i, :].mean(axis=0) - m) / np.sqrt(v / n))

    mh_path = np.r_[np.zeros(40), np.ones(30), np.zeros(50), np.ones(20)].astype(int)
    tau = float(np.exp(-3))
    counts = transition_counts(mh_path, 2)
    cur = SwitchRates.two_state(0.01, 0.01)
    ad = MhAdapter(log_step=np.log(0.5), target_accept=0.44)
    burn, iters = 2000, 200000
    g = np.empty((iters, 2))
    for it in range(1, burn + iters + 1):
        if it == burn + 1:
            ad = ad.freeze()
        cur, acc = update_rates_mh(cur, mh_path, PenaltySpec("ridge", tau), ad, rng)
        ad = adapt(ad, acc, it)
        if it > burn:
            g[it - burn - 1] = cur.gamma[0, 1], cur.gamma[1, 0]
    grid = np.linspace(1e-12, 0.6, 60001)
    ks = []
    for j, (stay, move) in enumerate([(counts[0, 0], counts[0, 1]), (counts[1, 1], counts[1, 0])]):

        def log_target(x, stay=stay, move=move):
            p = x * np.exp(-x)
            return move * np.log(p) + stay * np.log1p(-p) - x**2 / (2 * tau)

        post = grid_posterior_1d(log_target, grid, bounded_below=True)
        xs = np.sort(g[:, j])
        ks.append(float(np.max(np.abs(np.arange(1, xs.size + 1) / xs.size - post.cdf(xs)))))
    wall = time.perf_counter() - t0
    ok = max(z_em) <= 3 and max(z_dir) <= 3 and max(ks) < 0.02 and wall < 120
    return report(
        2,
        ok,
        f"gamma moments max z = {max(z_em):.2f}, dirichlet max z = {max(z_dir):.2f}, "
        f"ridge-MH Kolmogorov = {max(ks):.4f} (< 0.02), {wall:.0f}s",
    )


# 3 ------------------------------------------------------------------------


def criterion_3():
    t0 = time.perf_counter()
    rng = np.random.default_rng(303)
    bad_unit = 0
    for _ in range(10000):
        n = int(rng.choice([2, 3]))
        g = np.exp(rng.uniform(-12, 8, (n, n))) * (rng.random((n, n)) > 0.2)
        try:
            P = ptm_from_rates(SwitchRates(g), 1.0).P
        except InvalidRegime:
            bad_unit += 1
            continue
        if not (np.all(P >= 0) and np.allclose(P.sum(axis=1), 1.0, atol=1e-12)):
            bad_unit += 1
    found = missed = 0
    for _ in range(10000):
        n = int(rng.choice([2, 3]))
        g = np.exp(rng.uniform(-3, 4, (n, n)))
        np.fill_diagonal(g, 0.0)
        exit_rates = g.sum(axis=1)
        if np.any(exit_rates * np.exp(-0.2 * exit_rates) > 1):
            found += 1
            if is_valid_ptm_regime(SwitchRates(g), 0.2):
                missed += 1
    wall = time.perf_counter() - t0
    ok = bad_unit == 0 and found > 0 and missed == 0 and wall < 10
    return report(3, ok, f"dt=1 invalid kernels: {bad_unit}/10000; dt=0.2 violators found {found}, accepted {missed}; {wall:.1f}s")


# 4 ------------------------------------------------------------------------


def criterion_4():
    t0 = time.perf_counter()
    data, path = overfit_dataset()
    true_sw = n_switches(path)
    std = run_chain(ModelSpec(kind="standard"), data, 20000, thin=10, seed=41)
    pen = run_chain(ModelSpec(kind="penalized"), data, 20000, thin=10, seed=42)
    s_std, s_pen = modal_switches(std), modal_switches(pen)
    wall = time.perf_counter() - t0
    ok = s_std >= 5 * true_sw and s_pen <= 2 * true_sw and wall <= 900
    return report(
        4,
        ok,
        f"generating switches {true_sw}; standard HMM {s_std} (need >= {5 * true_sw}); "
        f"penalized {s_pen} (need <= {2 * true_sw}); {wall:.0f}s",
    )


# 5 ------------------------------------------------------------------------

TRUTH = {
    "lambda_L": LAMBDA_TOTALS[0],
    "lambda_H_total": LAMBDA_TOTALS[1],
    "gamma_LH": GAMMA[0],
    "gamma_HL": GAMMA[1],
}


def _recovery_fit(seed):
    data, _ = synthetic_series(T=14400, seed=500 + seed)
    s = run_chain(ModelSpec(kind="penalized"), data, 10000, thin=5, seed=seed)
    return {k: s.summaries[k]["lower"] <= v <= s.summaries[k]["upper"] for k, v in TRUTH.items()}


def criterion_5():
    t0 = time.perf_counter()
    from concurrent.futures import ProcessPoolExecutor
    import os

    workers = min(10, os.cpu_count() or 1)
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            fits = list(ex.map(_recovery_fit, range(10)))
    else:
        fits = [_recovery_fit(s) for s in range(10)]
    covered = {k: sum(f[k] for f in fits) for k in TRUTH}
    wall = time.perf_counter() - t0
    ok = all(c >= 8 for c in covered.values()) and wall <= 3600
    return report(5, ok, ", ".join(f"{k} {c}/10" for k, c in covered.items()) + f" (need >= 8); {wall:.0f}s")


# 6 ------------------------------------------------------------------------


def criterion_6():
    t0 = time.perf_counter()
    data, _ = overfit_dataset()
    grid = np.exp([-9.0, -6.0, -3.0, 0.0])
    table = tau_sweep(ModelSpec(kind="penalized"), data, grid, iters=20000, thin=10, seed=6)
    rows = table.rows
    finite = all(np.isfinite(r.mspe) for r in rows)
    sw = [r.mean_switches for r in rows]
    monotone = all(a <= b for a, b in zip(sw, sw[1:]))
    best = table.argmin
    fewer = best is not None and best.mean_switches < rows[-1].mean_switches
    wall = time.perf_counter() - t0
    ok = finite and monotone and fewer and wall <= 3600
    desc = "; ".join(f"log tau {r.log_tau:+.0f}: mspe {r.mspe:.6f}, switches {r.mean_switches:.1f}" for r in rows)
    return report(
        6,
        ok,
        f"{desc}; argmin log tau {best.log_tau:+.0f}; finite={finite}, non-increasing={monotone}, "
        f"argmin fewer than tau=1: {fewer}; {wall:.0f}s",
    )


# 7 ------------------------------------------------------------------------


def criterion_7():
    t0 = time.perf_counter()
    entrances = simulate_entrances(1 / 600, 14400, seed=700)
    data, path = synthetic_series(T=14400, seed=701, entrance_times=entrances)
    true_sw = n_switches(path)
    s = run_chain(ModelSpec(kind="covariate"), data, 20000, thin=10, seed=7)
    iv = {k: s.summaries[k] for k in ("beta_LH", "beta_HL")}
    contains = all(v["lower"] <= 0 <= v["upper"] for v in iv.values())
    fit_sw = modal_switches(s)
    wall = time.perf_counter() - t0
    ok = contains and fit_sw <= 2 * true_sw and wall <= 1800
    ivs = ", ".join(f"{k} ({v['lower']:.2f}, {v['upper']:.2f})" for k, v in iv.items())
    return report(7, ok, f"{ivs}; switches {fit_sw} vs generating {true_sw} (need <= {2 * true_sw}); {wall:.0f}s")


# 8 ------------------------------------------------------------------------


def criterion_8():
    t0 = time.perf_counter()
    want = {
        "standard_2state": (0.5, 0.5),
        "penalized_2state": (0.75, 0.25),
        "penalized_3state": (0.684, 0.153, 0.163),
    }
    errs = {k: float(np.max(np.abs(stationary_distribution(REFERENCE_P[k]) - v))) for k, v in want.items()}
    wall = time.perf_counter() - t0
    ok = all(e <= 0.01 for e in errs.values()) and wall < 1
    return report(8, ok, ", ".join(f"{k} max err {e:.4f}" for k, e in errs.items()) + f" (<= 0.01); {wall * 1e3:.0f} ms")


# 9 ------------------------------------------------------------------------


def criterion_9():
    data, _ = overfit_dataset()
    t0 = time.perf_counter()
    run_chain(ModelSpec(kind="penalized"), data, 50000, thin=10, seed=9)
    wall = time.perf_counter() - t0
    ok = wall <= 1800
    return report(9, ok, f"50,000 penalized iterations on T=14400 in {wall:.0f}s (CI bound 1800s; desktop target 600s)")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7, criterion_8, criterion_9]


def test_criterion_1_ffbs_exactness():
    assert criterion_1(), RESULTS[1]


@pytest.mark.slow
def test_criterion_2_conjugate_updates():
    assert criterion_2(), RESULTS[2]


def test_criterion_3_ptm_validity():
    assert criterion_3(), RESULTS[3]


@pytest.mark.slow
def test_criterion_4_overfitting_contrast():
    assert criterion_4(), RESULTS[4]


@pytest.mark.slow
def test_criterion_5_parameter_recovery():
    assert criterion_5(), RESULTS[5]


@pytest.mark.slow
def test_criterion_6_mspe_sweep_shape():
    assert criterion_6(), RESULTS[6]


@pytest.mark.slow
def test_criterion_7_covariate_null():
    assert criterion_7(), RESULTS[7]


def test_criterion_8_stationary_distributions():
    assert criterion_8(), RESULTS[8]


@pytest.mark.slow
def test_criterion_9_performance():
    assert criterion_9(), RESULTS[9]


if __name__ == "__main__":
    selected = {int(a) for a in sys.argv[1:]} or set(range(1, 10))
    outcomes = [fn() for i, fn in enumerate(CRITERIA, start=1) if i in selected]
    sys.exit(0 if all(outcomes) else 1)
