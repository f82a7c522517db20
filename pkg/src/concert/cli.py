"""``concert`` command-line interface.

One YAML document drives every command. Top-level keys::

    family: gaussian | logistic
    seed: 0
    simulation: {regime, n0, nk, K, p, s, A_size, h, w, rho, U_size, sigma_y, signal, demo_case}
    priors:     {q0, eta, qk, tauk, a0, b0}        # qk/tauk: scalar or one per source
    fit:        {max_sweeps, rel_tol, init, sweep_order, intercept, threshold,
                 known_noise, irls_steps, standardize}
    benchmark:  {grid, methods, reps, test_size, lasso_folds, plots}
    oracle:     {p, K, n, sigma, signal, instances, gamma_bound, beta_bound}

Unknown keys are errors. Exit codes: 0 success, 1 input or configuration
error, 2 fit did not converge (results are still written), 3 oracle
deviations above the configured bounds.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import itertools
import json
import logging
import os
import sys
import tempfile
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .baselines import fit_lasso_cd, fit_naive_vb
from .errors import ConcertError, ConfigParse, DidNotConverge, IoFailure, SchemaError, TooLarge
from .fitting import elbo, fit, fit_options
from .metrics import estimation_error, prediction_error, selection_metrics
from .model import (
    Dataset,
    GlmFamily,
    PriorSpec,
    VariationalState,
    standardize,
    validate_problem,
)
from .oracle import MAX_ENUMERATION_BITS, enumerate_posterior
from .simgen import REGIMES, SimConfig, gen_test_set, gen_tiny, generate

log = logging.getLogger("concert")

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED, EXIT_ORACLE = 0, 1, 2, 3
METHODS = ("concert", "naive_vb", "lasso")
METRICS = ("est_error", "pred_error", "tpr", "fdr", "mcc")

_SIM_KEYS = [f.name for f in fields(SimConfig) if f.name not in ("family", "seed")]
DEFAULTS = {
    "family": "gaussian",
    "seed": 0,
    "simulation": {k: v for k, v in SimConfig().to_dict().items() if k not in ("family", "seed")},
    "priors": {"q0": None, "eta": 10.0, "qk": None, "tauk": 10.0, "a0": 2.0, "b0": 1.0},
    "fit": {
        "max_sweeps": 500, "rel_tol": 1e-6, "init": "ridge", "sweep_order": "fixed",
        "intercept": False, "threshold": 0.5, "known_noise": None, "irls_steps": 5,
        "standardize": False,
    },
    "benchmark": {
        "grid": {}, "methods": list(METHODS), "reps": 20, "test_size": 500,
        "lasso_folds": 5, "plots": False,
    },
    "oracle": {
        "p": 2, "K": 1, "n": 50, "sigma": 0.5, "signal": 1.0, "instances": 1,
        "gamma_bound": 0.15, "beta_bound": None,
    },
}
# the simulation default for ``signal`` depends on the family
DEFAULTS["simulation"]["signal"] = None


# ---------------------------------------------------------------- config


def _merge(defaults: dict, raw: dict, where: str) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in raw.items():
        name = f"{where}.{key}" if where else str(key)
        if key not in defaults:
            raise ConfigParse(f"unknown config key {name!r}")
        if isinstance(defaults[key], dict) and key != "grid":
            if not isinstance(value, dict):
                raise ConfigParse(f"config key {name!r} must be a mapping")
            out[key] = _merge(defaults[key], value, name)
        else:
            out[key] = value
    return out


def resolve_config(raw: dict | None) -> dict:
    """Fill defaults and check keys and enumerated values."""
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigParse("config document must be a mapping")
    cfg = _merge(DEFAULTS, raw, "")
    try:
        cfg["family"] = GlmFamily.parse(cfg["family"]).value
    except ValueError:
        raise ConfigParse(f"config key 'family' has invalid value {cfg['family']!r}") from None
    if cfg["simulation"]["regime"] not in REGIMES:
        raise ConfigParse(
            f"config key 'simulation.regime' has invalid value {cfg['simulation']['regime']!r}; "
            f"expected one of {REGIMES}"
        )
    if cfg["fit"]["init"] not in ("ridge", "prior"):
        raise ConfigParse(f"config key 'fit.init' has invalid value {cfg['fit']['init']!r}")
    if cfg["fit"]["sweep_order"] not in ("fixed", "permuted"):
        raise ConfigParse(f"config key 'fit.sweep_order' has invalid value {cfg['fit']['sweep_order']!r}")
    bench = cfg["benchmark"]
    if not isinstance(bench["grid"], dict):
        raise ConfigParse("config key 'benchmark.grid' must map simulation keys to lists")
    for key, values in bench["grid"].items():
        if key not in _SIM_KEYS:
            raise ConfigParse(f"unknown config key 'benchmark.grid.{key}'")
        if not isinstance(values, list) or not values:
            raise ConfigParse(f"config key 'benchmark.grid.{key}' must be a nonempty list")
    for m in bench["methods"]:
        if m not in METHODS:
            raise ConfigParse(f"config key 'benchmark.methods' has invalid entry {m!r}")
    seed = cfg["seed"]
    if not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigParse("config key 'seed' must be an unsigned 64-bit integer")
    return cfg


def load_config(path) -> dict:
    if path is None:
        return resolve_config({})
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise IoFailure(f"cannot read config {path}: {e}") from e
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigParse(f"config {path} is not valid YAML: {e}") from e
    return resolve_config(raw)


def config_digest(cfg: dict) -> str:
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def sim_config(cfg: dict, **overrides) -> SimConfig:
    sim = dict(cfg["simulation"])
    sim.update(overrides)
    sim.setdefault("seed", cfg["seed"])
    try:
        return SimConfig(family=cfg["family"], **sim)
    except (TypeError, ValueError) as e:
        raise ConfigParse(f"simulation: {e}") from e


def _per_source(value, K: int, name: str):
    if isinstance(value, (list, tuple)):
        if len(value) != K:
            raise ConfigParse(f"config key 'priors.{name}' needs {K} entries, got {len(value)}")
        return tuple(value)
    return (value,) * K


def build_priors(cfg: dict, p: int, K: int) -> PriorSpec:
    pr = cfg["priors"]
    q = min(1.0 / p, 0.5)
    try:
        return PriorSpec(
            q0=q if pr["q0"] is None else pr["q0"],
            eta=pr["eta"],
            qk=_per_source(q if pr["qk"] is None else pr["qk"], K, "qk"),
            tauk=_per_source(pr["tauk"], K, "tauk"),
            a0=pr["a0"],
            b0=pr["b0"],
        )
    except (TypeError, ValueError) as e:
        raise ConfigParse(f"priors: {e}") from e


def build_options(cfg: dict, K: int, **overrides):
    f = dict(cfg["fit"])
    f.pop("standardize")
    f.update(overrides)
    family = GlmFamily.parse(cfg["family"])
    if family is GlmFamily.GAUSSIAN:
        f.pop("irls_steps")
        if f["known_noise"] is not None:
            f["known_noise"] = tuple(float(v) for v in _per_source(f["known_noise"], K + 1, "known_noise"))
    else:
        if f.pop("known_noise") is not None:
            raise ConfigParse("config key 'fit.known_noise' applies to the gaussian family only")
    f.setdefault("seed", cfg["seed"])
    try:
        return fit_options(family, **f)
    except (TypeError, ValueError) as e:
        raise ConfigParse(f"fit: {e}") from e


# ---------------------------------------------------------------- files


def atomic_write(path, data: str) -> None:
    """Write ``data`` to a temporary sibling, then rename over ``path``."""
    path = Path(path)
    tmp = None
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError as e:
        if tmp is not None and os.path.exists(tmp):
            os.unlink(tmp)
        raise IoFailure(f"cannot write {path}: {e}") from e


def _num(x) -> str:
    return repr(float(x))


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def dataset_csv(d: Dataset) -> str:
    header = ["y"] + [f"x{j}" for j in range(1, d.p + 1)]
    rows = ([_num(y)] + [_num(v) for v in x] for y, x in zip(d.y, d.X))
    return _csv_text(header, rows)


def read_dataset(path, family) -> Dataset:
    """Parse a ``y,x1,...,xp`` CSV; errors name the offending line."""
    family = GlmFamily.parse(family)
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            lines = list(csv.reader(fh))
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e
    except UnicodeDecodeError as e:
        raise SchemaError(f"{path}: not UTF-8 text") from e
    if not lines:
        raise SchemaError(f"{path}: empty file, expected header 'y,x1,...,xp'")
    header = [h.strip() for h in lines[0]]
    p = len(header) - 1
    if p < 1 or header != ["y"] + [f"x{j}" for j in range(1, p + 1)]:
        raise SchemaError(f"{path}: header must be 'y,x1,...,xp', got {','.join(header)!r}")
    values = []
    for lineno, row in enumerate(lines[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != p + 1:
            raise SchemaError(f"{path}: row {lineno} has {len(row)} fields, expected {p + 1}")
        try:
            vals = [float(c) for c in row]
        except ValueError:
            raise SchemaError(f"{path}: row {lineno} has a non-numeric field") from None
        if not all(np.isfinite(vals)):
            raise SchemaError(f"{path}: row {lineno} has a non-finite value")
        if family is GlmFamily.LOGISTIC and vals[0] not in (0.0, 1.0):
            raise SchemaError(f"{path}: row {lineno} has y={row[0]}, logistic responses must be 0 or 1")
        values.append(vals)
    arr = np.array(values, dtype=float).reshape(-1, p + 1)
    return Dataset(arr[:, 1:], arr[:, 0])


def write_json(path, obj) -> None:
    atomic_write(path, json.dumps(obj, indent=2) + "\n")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_manifest(out_dir, command: str, cfg: dict, started: str) -> None:
    write_json(Path(out_dir) / "manifest.json", {
        "command": command,
        "config_digest": config_digest(cfg),
        "seed": cfg["seed"],
        "tool_version": __version__,
        "started": started,
        "finished": _now(),
        "config": cfg,
    })


# ---------------------------------------------------------------- fit.json


def _listify(x):
    if x is None:
        return None
    if isinstance(x, list):
        return [np.asarray(v).tolist() for v in x]
    return np.asarray(x).tolist()


def fit_record(result, priors: PriorSpec, standardized: bool) -> dict:
    st = result.state
    return {
        "family": result.family.value,
        "p": st.p,
        "K": st.K,
        "standardized": standardized,
        "threshold": result.threshold,
        "beta_hat": result.beta_hat.tolist(),
        "coef": result.coef().tolist(),
        "selected_signals": sorted(result.selected_signals),
        "transferable": [sorted(t) for t in result.transferable],
        "non_transferable": [sorted(t) for t in result.non_transferable],
        "elbo_trace": result.elbo_trace.tolist(),
        "elbo": result.elbo,
        "converged": result.converged,
        "sweeps": result.sweeps,
        "priors": {"q0": priors.q0, "eta": priors.eta, "qk": list(priors.qk),
                   "tauk": list(priors.tauk), "a0": priors.a0, "b0": priors.b0},
        "state": {
            "gamma": _listify(st.gamma),
            "mu": _listify(st.mu),
            "sigma": _listify(st.sigma),
            "a": _listify(st.a),
            "b": _listify(st.b),
            "c": _listify(st.c),
            "known_noise": _listify(st.known_noise),
            "intercept_mean": _listify(st.intercept_mean),
            "intercept_var": _listify(st.intercept_var),
        },
    }


def load_fit(path):
    """Read a fit.json back into ``(state, priors, record)``."""
    try:
        rec = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e

    def arr(x):
        return None if x is None else np.array(x, dtype=float)

    s = rec["state"]
    state = VariationalState(
        gamma=arr(s["gamma"]), mu=arr(s["mu"]), sigma=arr(s["sigma"]),
        a=arr(s["a"]), b=arr(s["b"]),
        c=None if s["c"] is None else [np.array(v, dtype=float) for v in s["c"]],
        known_noise=arr(s["known_noise"]),
        intercept_mean=arr(s["intercept_mean"]), intercept_var=arr(s["intercept_var"]),
    )
    pr = rec["priors"]
    priors = PriorSpec(q0=pr["q0"], eta=pr["eta"], qk=tuple(pr["qk"]), tauk=tuple(pr["tauk"]),
                       a0=pr["a0"], b0=pr["b0"])
    return state, priors, rec


def recompute_elbo(fit_json, target_csv, source_csvs=()) -> float:
    """ELBO of a stored fit, evaluated afresh on its input files."""
    state, priors, rec = load_fit(fit_json)
    family = GlmFamily.parse(rec["family"])
    problem = validate_problem(
        read_dataset(target_csv, family), [read_dataset(s, family) for s in source_csvs], family
    )
    if rec["standardized"]:
        problem, _ = standardize(problem)
    return elbo(state, problem, priors)


# ---------------------------------------------------------------- commands


def cmd_simulate(cfg: dict, out_dir) -> int:
    started = _now()
    out = Path(out_dir)
    problem, truth = generate(sim_config(cfg))
    atomic_write(out / "target.csv", dataset_csv(problem.target))
    for k, src in enumerate(problem.sources, start=1):
        atomic_write(out / f"source_{k}.csv", dataset_csv(src))
    write_json(out / "truth.json", truth.to_dict())
    write_manifest(out, "simulate", cfg, started)
    log.info("wrote %d datasets to %s", problem.K + 1, out)
    return EXIT_OK


def cmd_fit(cfg: dict, target_csv, source_csvs, out_dir) -> int:
    started = _now()
    family = GlmFamily.parse(cfg["family"])
    target = read_dataset(target_csv, family)
    sources = [read_dataset(s, family) for s in source_csvs]
    for path, d in zip(source_csvs, sources):
        if d.p != target.p:
            raise SchemaError(f"{path}: has {d.p} covariates, target has {target.p}")
    problem = validate_problem(target, sources, family)
    scaling = None
    if cfg["fit"]["standardize"]:
        problem, scaling = standardize(problem)
    priors = build_priors(cfg, problem.p, problem.K)
    options = build_options(cfg, problem.K)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DidNotConverge)
        result = fit(problem, priors, options, scaling=scaling)
    write_json(Path(out_dir) / "fit.json", fit_record(result, priors, scaling is not None))
    write_manifest(out_dir, "fit", cfg, started)
    if not result.converged:
        log.warning("fit stopped after %d sweeps without converging", result.sweeps)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def grid_points(grid: dict) -> list:
    """Cartesian product of the grid lists, first key varying slowest."""
    keys = list(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def replication_seed(master: int, grid_index: int, rep: int) -> int:
    ss = np.random.SeedSequence(master, spawn_key=(grid_index, rep))
    return int(ss.generate_state(1, np.uint64)[0])


def run_replication(cfg: dict, grid_index: int, point: dict, rep: int):
    """One simulated dataset scored under every configured method.

    Returns ``(rows, timings)``; rows hold only deterministic quantities.
    """
    seed = replication_seed(cfg["seed"], grid_index, rep)
    sc = sim_config(cfg, **point, seed=seed)
    problem, truth = generate(sc)
    test = gen_test_set(sc, truth, cfg["benchmark"]["test_size"])
    family = problem.family
    rows, timings = [], []
    for method in cfg["benchmark"]["methods"]:
        t0 = time.perf_counter()
        sweeps, converged = "NA", "NA"
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DidNotConverge)
            if method == "lasso":
                beta, _ = fit_lasso_cd(problem.target, family, cv_folds=cfg["benchmark"]["lasso_folds"], seed=seed)
                selected = np.flatnonzero(beta)
            else:
                K = problem.K if method == "concert" else 0
                priors = build_priors(cfg, problem.p, problem.K)
                options = build_options(cfg, K, seed=seed)
                if method == "concert":
                    res = fit(problem, priors, options)
                else:
                    res = fit_naive_vb(problem.target, family, priors, options)
                beta, selected = res.beta_hat, res.selected_signals
                sweeps, converged = res.sweeps, int(res.converged)
        elapsed = time.perf_counter() - t0
        sel = selection_metrics(selected, truth.S_true, problem.p)
        rows.append([
            grid_index, rep, seed, *(point[k] for k in point), method,
            _num(estimation_error(beta, truth.beta0)),
            _num(prediction_error(beta, test, family)),
            _num(sel.tpr), _num(sel.fdr), _num(sel.mcc), sweeps, converged,
        ])
        timings.append([grid_index, rep, method, f"{elapsed:.6f}"])
    return rows, timings


def _replication_task(args):
    return run_replication(*args)


def summarize(rows, grid_keys, methods) -> list:
    """Mean and standard error of each metric per grid point and method."""
    nk = len(grid_keys)
    first = 3 + nk + 1
    cells = {}
    for row in rows:
        cells.setdefault((row[0], row[3 + nk]), []).append(row)
    out = []
    for (g, method), group in sorted(cells.items(), key=lambda kv: (kv[0][0], methods.index(kv[0][1]))):
        vals = np.array([[float(r[first + i]) for i in range(len(METRICS))] for r in group])
        n = vals.shape[0]
        mean = vals.mean(axis=0)
        se = vals.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(len(METRICS))
        stats = [_num(v) for pair in zip(mean, se) for v in pair]
        out.append([g, *group[0][3:3 + nk], method, n, *stats])
    return out


def cmd_benchmark(cfg: dict, out_dir, jobs: int = 1) -> int:
    started = _now()
    out = Path(out_dir)
    bench = cfg["benchmark"]
    points = grid_points(bench["grid"])
    grid_keys = list(bench["grid"])
    tasks = [(cfg, g, pt, r) for g, pt in enumerate(points) for r in range(bench["reps"])]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_replication_task, tasks))
    else:
        results = [_replication_task(t) for t in tasks]
    # task order, not completion order, fixes the row order
    rows = [r for rs, _ in results for r in rs]
    timings = [t for _, ts in results for t in ts]
    header = ["grid_index", "rep", "seed", *grid_keys, "method", *METRICS, "sweeps", "converged"]
    atomic_write(out / "results.csv", _csv_text(header, rows))
    stat_cols = [f"{m}_{s}" for m in METRICS for s in ("mean", "se")]
    summary = summarize(rows, grid_keys, list(bench["methods"]))
    atomic_write(out / "summary.csv", _csv_text(["grid_index", *grid_keys, "method", "n", *stat_cols], summary))
    atomic_write(out / "timings.csv", _csv_text(["grid_index", "rep", "method", "seconds"], timings))
    if bench["plots"]:
        plot_summary(summary, points, grid_keys, list(bench["methods"]), out)
    write_manifest(out, "benchmark", cfg, started)
    return EXIT_OK


def plot_summary(summary, points, grid_keys, methods, out_dir) -> None:
    """Error-vs-grid curves (mean +- 1 se), one PNG per error metric."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    nk = len(grid_keys)
    labels = [", ".join(f"{k}={v}" for k, v in pt.items()) or "default" for pt in points]
    for metric in ("est_error", "pred_error"):
        col = 2 + nk + 2 * METRICS.index(metric) + 1
        fig, ax = plt.subplots(figsize=(6, 4))
        for method in methods:
            rows = [r for r in summary if r[1 + nk] == method]
            x = [r[0] for r in rows]
            y = [float(r[col]) for r in rows]
            err = [float(r[col + 1]) for r in rows]
            ax.errorbar(x, y, yerr=err, marker="o", capsize=3, label=method)
        ax.set_xticks(range(len(points)))
        ax.set_xticklabels(labels, rotation=30, ha="right")
        ax.set_ylabel(metric)
        ax.legend()
        fig.tight_layout()
        path = Path(out_dir) / f"{metric}.png"
        try:
            fig.savefig(path, dpi=100)
        except OSError as e:
            raise IoFailure(f"cannot write {path}: {e}") from e
        finally:
            plt.close(fig)


def cmd_oracle_check(cfg: dict, stream=None) -> int:
    """Compare VB with the enumeration oracle on tiny Gaussian instances."""
    stream = stream or sys.stdout
    oc = cfg["oracle"]
    p, K = oc["p"], oc["K"]
    if (K + 1) * p > MAX_ENUMERATION_BITS:
        raise TooLarge(f"(K+1)p = {(K + 1) * p} exceeds {MAX_ENUMERATION_BITS}")
    if GlmFamily.parse(cfg["family"]) is not GlmFamily.GAUSSIAN:
        raise ConfigParse("oracle-check needs family 'gaussian'")
    noise = (oc["sigma"] ** 2,) * (K + 1)
    priors = build_priors(cfg, p, K)
    options = build_options(cfg, K, known_noise=noise, rel_tol=1e-12, max_sweeps=10_000)
    worst_g = worst_b = 0.0
    print(f"{'inst':>4} {'k':>2} {'j':>2} {'gamma_exact':>12} {'gamma_vb':>12} "
          f"{'beta_exact':>12} {'beta_vb':>12}", file=stream)
    for i in range(oc["instances"]):
        seed = replication_seed(cfg["seed"], 0, i)
        problem, _ = gen_tiny(p, K, oc["n"], oc["sigma"], oc["signal"], seed)
        exact = enumerate_posterior(problem, priors, noise)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DidNotConverge)
            res = fit(problem, priors, options)
        g_vb = res.state.gamma
        for k in range(K + 1):
            for j in range(p):
                be = f"{exact.beta_mean[j]:12.6f}" if k == 0 else f"{'':>12}"
                bv = f"{res.beta_hat[j]:12.6f}" if k == 0 else f"{'':>12}"
                print(f"{i:>4} {k:>2} {j:>2} {exact.inclusion_probs[k, j]:12.6f} {g_vb[k, j]:12.6f} {be} {bv}",
                      file=stream)
        worst_g = max(worst_g, float(np.max(np.abs(g_vb - exact.inclusion_probs))))
        worst_b = max(worst_b, float(np.max(np.abs(res.beta_hat - exact.beta_mean))))
    print(f"max |gamma_vb - gamma_exact| = {worst_g:.3e} (bound {oc['gamma_bound']})", file=stream)
    print(f"max |beta_vb - beta_exact|   = {worst_b:.3e} (bound {oc['beta_bound']})", file=stream)
    failed = worst_g > oc["gamma_bound"] or (oc["beta_bound"] is not None and worst_b > oc["beta_bound"])
    return EXIT_ORACLE if failed else EXIT_OK


# ---------------------------------------------------------------- entry


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="concert", description="Bayesian transfer learning for sparse GLMs.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, out_required=True):
        sp.add_argument("--config", help="YAML configuration file")
        sp.add_argument("--seed", type=int, help="master seed (overrides the config)")
        sp.add_argument("--threshold", type=float, help="inclusion threshold (overrides the config)")
        if out_required:
            sp.add_argument("--out", required=True, help="output directory")

    common(sub.add_parser("simulate", help="generate a synthetic multi-source dataset"))
    fp = sub.add_parser("fit", help="fit CONCERT to CSV datasets")
    common(fp)
    fp.add_argument("target", help="target CSV (y,x1,...,xp)")
    fp.add_argument("sources", nargs="*", help="source CSVs")
    bp = sub.add_parser("benchmark", help="run seeded replications over a grid")
    common(bp)
    bp.add_argument("--jobs", type=int, default=1, help="parallel replications")
    common(sub.add_parser("oracle-check", help="compare VB against exact enumeration"), out_required=False)
    return ap


def _configure_logging() -> None:
    level = os.environ.get("CONCERT_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _configure_logging()
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.threshold is not None:
            cfg["fit"]["threshold"] = args.threshold
        cfg = resolve_config(cfg)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.out)
        if args.command == "fit":
            return cmd_fit(cfg, args.target, args.sources, args.out)
        if args.command == "benchmark":
            if args.jobs < 1:
                raise ConfigParse("--jobs must be at least 1")
            return cmd_benchmark(cfg, args.out, args.jobs)
        return cmd_oracle_check(cfg)
    except (ConcertError, ValueError) as e:
        print(f"concert: error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
