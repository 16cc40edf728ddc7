"""Command-line driver: config handling, data ingestion, runs and outputs.

Verbs: ``fit``, ``sweep``, ``simulate``, ``oracle-check``. Exit codes:
0 success, 2 configuration error, 3 data/IO error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import math
import os
import platform
import sys
import tempfile
import time
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .chain import covariate_kernels, covariate_series, ptm_matrix
from .core import (
    ConfigError,
    CountSeries,
    CovariateParams,
    DataError,
    EmissionParams,
    Hyperparams,
    ModelSpec,
    NumericalError,
    PenaltySpec,
    PosteriorSample,
    state_labels,
)

logger = logging.getLogger("penalized_hmm")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4


class ParseError(DataError):
    pass


class OutOfRange(DataError):
    pass


# ---------------------------------------------------------------------------
# configuration

DEFAULTS = {
    "mode": "fit",
    "seed": 0,
    "data": {
        "events": None,
        "entries": None,
        "T": None,
        "dt": 1.0,
        "simulate": None,
    },
    "model": {
        "n_states": 2,
        "kind": "penalized",
        "a": 1.0,
        "b": 1.0,
        "incr_shape": None,
        "incr_rate": None,
        "theta": None,
        "sticky_weight": 120000.0,
        "pi0": None,
        "init_lambda": None,
        "init_offdiag_prob": 0.003,
        "init_gamma": 0.003,
    },
    "penalty": {
        "family": "ridge",
        "tau": None,
        "log_tau": -6.0,
        "grid_log_tau": [-9.0, -6.0, -3.0, 0.0],
    },
    "covariate": {
        "beta_prior": [1.0, 100.0],
        "alpha_prior": [1.0, 10.0],
        "init_mu": math.log(0.003),
        "init_beta": 0.0,
        "init_alpha": 1.0,
        "offset": 1e6,
        "transform": "elapsed",
    },
    "mcmc": {
        "iters": 50000,
        "burn_in": None,
        "thin": 10,
        "chains": 1,
        "target_accept": None,
        "adapt_batch": 50,
        "init_log_step": None,
    },
    "output": {"dir": "out"},
}

SIMULATE_KEYS = {"T", "lambda_totals", "gamma", "P", "pi0", "entrance_rate", "covariate"}
MODES = ("fit", "sweep", "simulate")


def _merge(defaults: dict, user: dict, where: str) -> dict:
    out = copy.deepcopy(defaults)
    for key, val in user.items():
        if key not in defaults:
            raise ConfigError(f"unknown config key {where}{key!r}")
        if isinstance(defaults[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"config section {where}{key!r} must be a mapping")
            out[key] = _merge(defaults[key], val, f"{where}{key}.")
        else:
            out[key] = val
    return out


def resolve_config(user: Optional[dict]) -> dict:
    """Merge a user config over the defaults, rejecting unknown keys."""
    user = user or {}
    if not isinstance(user, dict):
        raise ConfigError("config must be a mapping")
    cfg = _merge(DEFAULTS, user, "")
    sim = cfg["data"]["simulate"]
    if sim is not None:
        if not isinstance(sim, dict):
            raise ConfigError("data.simulate must be a mapping")
        unknown = set(sim) - SIMULATE_KEYS
        if unknown:
            raise ConfigError(f"unknown config key data.simulate.{sorted(unknown)[0]!r}")
    if cfg["mode"] not in MODES:
        raise ConfigError(f"mode must be one of {MODES}")
    return cfg


def load_config(path) -> dict:
    """Read a YAML (or JSON) config; a run manifest is accepted too."""
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if isinstance(raw, dict) and "manifest_version" in raw:
        raw = raw["config"]
    return resolve_config(raw)


def _tau(cfg: dict) -> float:
    pen = cfg["penalty"]
    return float(pen["tau"]) if pen["tau"] is not None else math.exp(float(pen["log_tau"]))


def build_spec(cfg: dict) -> ModelSpec:
    m, cov, mc = cfg["model"], cfg["covariate"], cfg["mcmc"]
    n = int(m["n_states"])
    theta = m["theta"]
    if theta is None:
        theta = np.ones((n, n))
        np.fill_diagonal(theta, m["sticky_weight"])
    try:
        hyper = Hyperparams(
            a=m["a"],
            b=m["b"],
            incr_shape=np.ones(n - 1) if m["incr_shape"] is None else m["incr_shape"],
            incr_rate=np.ones(n - 1) if m["incr_rate"] is None else m["incr_rate"],
            theta=theta,
            pi0=np.full(n, 1.0 / n) if m["pi0"] is None else m["pi0"],
            beta_prior=tuple(cov["beta_prior"]),
            alpha_prior=tuple(cov["alpha_prior"]),
        )
        family = cfg["penalty"]["family"] if m["kind"] != "standard" else "none"
        return ModelSpec(
            n_states=n,
            kind=m["kind"],
            penalty=PenaltySpec(family, _tau(cfg)),
            hyper=hyper,
            dt=float(cfg["data"]["dt"]),
            init_lambda=None if m["init_lambda"] is None else tuple(m["init_lambda"]),
            init_offdiag_prob=m["init_offdiag_prob"],
            init_gamma=m["init_gamma"],
            init_mu=cov["init_mu"],
            init_beta=cov["init_beta"],
            init_alpha=cov["init_alpha"],
            covariate_offset=cov["offset"],
            covariate_transform=cov["transform"],
            target_accept=mc["target_accept"],
            adapt_batch=mc["adapt_batch"],
            init_log_step=mc["init_log_step"],
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# data ingestion


def _read_column(path, header: str) -> list:
    values = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise ParseError(f"{path}:1: missing header {header!r}")
        if [c.strip() for c in first] != [header]:
            raise ParseError(f"{path}:1: expected header {header!r}, got {first!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 1:
                raise ParseError(f"{path}:{lineno}: expected one column, got {len(row)}")
            try:
                v = float(row[0])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: cannot parse {row[0]!r} as seconds") from None
            if not math.isfinite(v):
                raise ParseError(f"{path}:{lineno}: non-finite value")
            values.append((lineno, v))
    return values


def _bin(values, T: int, dt: float, path) -> np.ndarray:
    bins = []
    for lineno, s in values:
        if s < 1 or s > T * dt:
            raise OutOfRange(f"{path}:{lineno}: {s} s outside [1, {T * dt}]")
        bins.append(max(1, min(T, int(math.floor(s / dt)))))
    return np.asarray(bins, dtype=np.int64)


def ingest_events(path, T: int, dt: float = 1.0, entries_path=None) -> CountSeries:
    """Bin event start times (``start_s`` column) into T per-bin counts.

    Second ``s`` falls in 1-based bin ``floor(s / dt)`` (clamped to >= 1).
    Entrance times (``entry_s`` column) are binned the same way and
    de-duplicated.
    """
    if T is None or int(T) < 2:
        raise ConfigError("data.T must be an integer >= 2")
    T = int(T)
    path = _resolve_data_path(path)
    bins = _bin(_read_column(path, "start_s"), T, dt, path)
    counts = np.bincount(bins - 1, minlength=T) if bins.size else np.zeros(T, dtype=np.int64)
    entrances = None
    if entries_path is not None:
        entries_path = _resolve_data_path(entries_path)
        entrances = np.unique(_bin(_read_column(entries_path, "entry_s"), T, dt, entries_path))
    return CountSeries(counts, dt, entrances)


def _resolve_data_path(path):
    if str(path).startswith("bundled:"):
        name = str(path).split(":", 1)[1]
        suffix = "entries" if name.endswith("entries") else "events"
        stem = name.rsplit("_", 1)[0] if name.endswith(("_events", "_entries")) else name
        return resources.files("penalized_hmm") / "data" / f"{stem}_{suffix}.csv"
    return Path(path)


def _simulate_from_config(cfg: dict, seed):
    from .simulate import simulate_entrances, simulate_series

    sim = cfg["data"]["simulate"]
    dt = float(cfg["data"]["dt"])
    T = int(sim.get("T") or cfg["data"]["T"] or 0)
    if T < 2:
        raise ConfigError("data.simulate.T must be >= 2")
    if "lambda_totals" not in sim:
        raise ConfigError("data.simulate.lambda_totals is required")
    emission = EmissionParams.from_totals(sim["lambda_totals"])
    n = emission.n_states
    ss = np.random.SeedSequence(seed)
    ent_seed, series_seed = ss.spawn(2)
    entrances = None
    if sim.get("entrance_rate"):
        entrances = simulate_entrances(float(sim["entrance_rate"]), T, ent_seed)
    if sim.get("covariate") is not None:
        if entrances is None:
            raise ConfigError("covariate simulation needs data.simulate.entrance_rate")
        c = sim["covariate"]
        params = CovariateParams(c["mu"], c["beta"], c["alpha"])
        w = covariate_series(entrances, T, dt, cfg["covariate"]["offset"], cfg["covariate"]["transform"])
        kernel = covariate_kernels(params, w[: T - 1], dt)
    elif sim.get("gamma") is not None:
        kernel = ptm_matrix(np.asarray(sim["gamma"], dtype=float), dt)
    elif sim.get("P") is not None:
        kernel = np.asarray(sim["P"], dtype=float)
    else:
        raise ConfigError("data.simulate needs gamma, P or covariate")
    pi0 = sim.get("pi0") or cfg["model"]["pi0"] or [1.0 / n] * n
    return simulate_series(emission, kernel, pi0, T, series_seed, dt, entrances)


def load_data(cfg: dict, seed) -> CountSeries:
    d = cfg["data"]
    if d["events"] is not None:
        return ingest_events(d["events"], d["T"], float(d["dt"]), d["entries"])
    if d["simulate"] is not None:
        series, _ = _simulate_from_config(cfg, seed)
        return series
    raise ConfigError("data needs either events or simulate")


# ---------------------------------------------------------------------------
# outputs


def _atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(_fmt(v) for v in r))
    return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _draw_columns(sample: PosteriorSample):
    n = sample.n_states
    lab = state_labels(n)
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
    cols = {f"lambda_{lab[0]}": sample.lambda_totals[:, 0]}
    for k in range(1, n):
        cols[f"lambda_{lab[k]}_incr"] = sample.lambda_totals[:, k] - sample.lambda_totals[:, k - 1]
        cols[f"lambda_{lab[k]}_total"] = sample.lambda_totals[:, k]
    if sample.gamma is not None:
        for i, j in pairs:
            cols[f"gamma_{lab[i]}{lab[j]}"] = sample.gamma[:, i, j]
    if sample.mu is not None:
        for i, j in pairs:
            cols[f"mu_{lab[i]}{lab[j]}"] = sample.mu[:, i, j]
        for i, j in pairs:
            cols[f"beta_{lab[i]}{lab[j]}"] = sample.beta[:, i, j]
        cols["alpha"] = sample.alpha
    for i in range(n):
        for j in range(n):
            cols[f"p_{lab[i]}{lab[j]}"] = sample.P[:, i, j]
    cols["switches"] = sample.switch_counts()
    cols["loglik"] = sample.loglik
    return cols


def build_summary(sample: PosteriorSample, data: Optional[CountSeries] = None) -> dict:
    from .sampler import posterior_P_hat, posterior_delta_hat
    from .selection import mspe_variants

    n = sample.n_states
    summary = {
        "model": {
            "kind": sample.spec.kind,
            "n_states": n,
            "states": state_labels(n),
            "penalty": sample.spec.penalty.family,
            "tau": sample.spec.penalty.tau if sample.spec.kind != "standard" else None,
        },
        "n_draws": sample.n_draws,
        "accept_rate": sample.accept_rate,
    }
    for name, stats in sample.summaries.items():
        if name != "switches":
            summary[name] = stats
    P_hat = posterior_P_hat(sample)
    delta = posterior_delta_hat(sample)
    summary["P_hat"] = P_hat.tolist()
    summary["delta_hat"] = None if delta is None else delta.tolist()
    sw = sample.switch_counts()
    summary["switches"] = {
        **sample.summaries["switches"],
        "median": float(np.median(sw)),
        "per_minute": float(sw.mean() / (sample.paths.shape[1] * sample.spec.dt / 60.0)),
    }
    if data is not None:
        variants = mspe_variants(sample, data)
        summary["mspe"] = variants["squared_mean"]
        summary["mspe_variants"] = variants
    return summary


def emit_outputs(sample: PosteriorSample, out_dir, data: Optional[CountSeries] = None) -> list:
    """Write draws.csv, state_probs.csv, path_mean.csv and summary.json."""
    if sample.n_draws == 0:
        raise ValueError("empty posterior sample")
    out = Path(out_dir)
    lab = state_labels(sample.n_states)
    cols = _draw_columns(sample)
    rows = zip(range(1, sample.n_draws + 1), *cols.values())
    written = []

    def put(name, text):
        _atomic_write(out / name, text)
        written.append(str(out / name))

    put("draws.csv", _csv_text(["draw", *cols.keys()], rows))
    marg = sample.state_marginals
    t = np.arange(1, marg.shape[0] + 1)
    put(
        "state_probs.csv",
        _csv_text(["t", *[f"p_{l}" for l in lab]], ((ti, *row) for ti, row in zip(t, marg))),
    )
    modal = marg.argmax(axis=1)
    path_rows = ((ti, int(k) + 1) for ti, k in zip(t, modal))
    put("path_mean.csv", _csv_text(["t", "state"], path_rows))
    put("summary.json", json.dumps(build_summary(sample, data), indent=2, sort_keys=False) + "\n")
    return written


def _versions() -> dict:
    import numba
    import scipy

    from . import __version__

    return {
        "penalized_hmm": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }


def write_manifest(out_dir, cfg: dict, mode: str, wall: float, outputs: list) -> None:
    manifest = {
        "manifest_version": 1,
        "mode": mode,
        "seed": cfg["seed"],
        "config": {**cfg, "mode": mode},
        "versions": _versions(),
        "wall_time_s": wall,
        "outputs": sorted(os.path.basename(p) for p in outputs),
    }
    _atomic_write(Path(out_dir) / "manifest.json", json.dumps(manifest, indent=2) + "\n")


# ---------------------------------------------------------------------------
# verbs


def do_fit(cfg: dict, workers: int = 1) -> list:
    from .sampler import run_chains

    spec = build_spec(cfg)
    data = load_data(cfg, cfg["seed"])
    mc = cfg["mcmc"]
    sample = run_chains(
        spec, data, int(mc["iters"]), mc["burn_in"], int(mc["thin"]), cfg["seed"], int(mc["chains"]), workers
    )
    return emit_outputs(sample, cfg["output"]["dir"], data)


def do_sweep(cfg: dict, workers: int = 1) -> list:
    from .selection import tau_sweep

    spec = build_spec(cfg)
    data = load_data(cfg, cfg["seed"])
    mc = cfg["mcmc"]
    grid = [math.exp(float(x)) for x in cfg["penalty"]["grid_log_tau"]]
    table = tau_sweep(
        spec, data, grid, int(mc["iters"]), mc["burn_in"], int(mc["thin"]), cfg["seed"], int(mc["chains"]), workers
    )
    out = Path(cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=out, suffix=".tmp")
    os.close(fd)
    try:
        table.write(tmp)
        os.replace(tmp, out / "sweep.csv")
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)
    return [str(out / "sweep.csv")]


def do_simulate(cfg: dict) -> list:
    from .simulate import write_events_csv

    if cfg["data"]["simulate"] is None:
        raise ConfigError("simulate mode needs a data.simulate section")
    series, path = _simulate_from_config(cfg, cfg["seed"])
    out = Path(cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name in ("events.csv", "entries.csv"):
        fd, tmp = tempfile.mkstemp(dir=out, suffix=".tmp")
        os.close(fd)
        written.append((tmp, out / name))
    write_events_csv(series, written[0][0], written[1][0])
    for tmp, final in written:
        os.replace(tmp, final)
    truth_rows = ((t, c, int(k) + 1) for t, c, k in zip(range(1, series.T + 1), series.counts, path))
    _atomic_write(out / "truth.csv", _csv_text(["t", "count", "state"], truth_rows))
    return [str(f) for _, f in written] + [str(out / "truth.csv")]


def do_oracle_check(cfg: dict) -> bool:
    from .simulate import run_oracle_checks

    results = run_oracle_checks(cfg["seed"])
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return all(ok for _, ok, _ in results)


def run(config_path=None, mode: Optional[str] = None, seed=None, threads: int = 1, out=None) -> int:
    """Execute one verb from a config file; returns the process exit code."""
    t0 = time.perf_counter()
    try:
        cfg = load_config(config_path) if config_path else resolve_config({})
        if seed is not None:
            cfg["seed"] = int(seed)
        if out is not None:
            cfg["output"]["dir"] = str(out)
        mode = mode or cfg["mode"]
        if mode == "oracle-check":
            return EXIT_OK if do_oracle_check(cfg) else EXIT_NUMERICAL
        if mode not in MODES:
            raise ConfigError(f"unknown mode {mode!r}")
        if mode == "fit":
            outputs = do_fit(cfg, threads)
        elif mode == "sweep":
            outputs = do_sweep(cfg, threads)
        else:
            outputs = do_simulate(cfg)
        write_manifest(cfg["output"]["dir"], cfg, mode, time.perf_counter() - t0, outputs)
    except ConfigError as exc:
        logger.error("config error: %s", exc)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        logger.error("data error: %s", exc)
        return EXIT_DATA
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        logger.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="penalized-hmm", description=__doc__.splitlines()[0])
    parser.add_argument("verb", choices=["fit", "sweep", "simulate", "oracle-check"])
    parser.add_argument("--config", help="YAML config file (or a previous run's manifest.json)")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--threads", type=int, default=1, help="worker processes for chains / tau grid")
    parser.add_argument("--out", help="override output.dir")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return run(args.config, args.verb, args.seed, max(1, args.threads), args.out)


if __name__ == "__main__":
    sys.exit(main())
