"""Command-line front end.

Every experiment in the package is scriptable from here: dataset synthesis
and fetching, both resampling engines, the macroscopic recursion, the
selection pipelines, and engine comparison. A run reads its parameters
from an optional JSON config file plus command-line flags (flags win),
executes into its own output directory, and leaves behind the echoed
config, CSV result tables, a JSON summary, and a timestamped plain-text
log.

Exit codes: 0 success, 2 configuration error, 3 non-convergence,
4 divergence, 5 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
import urllib.error
from dataclasses import replace

import numpy as np
import pandas as pd

from . import __version__
from .data import (SyntheticSpec, Truth, augment_noise, fetch_wine,
                   gen_correlated, gen_iid, load_csv, mean_overlap,
                   standardize)
from .moments import PenaltyMixture
from .resampling import ResamplingConfig, ResamplingError
from .resampling import run as mc_run
from .selection import (bolasso, cross_validate, lambda_grid,
                        normalized_mse, rejection_region, stability_path)
from .solver import AmprConfig, AmprDivergenceError, macroscopics
from .solver import run as ampr_run
from .state_evolution import SeParams, SePrior, initial_state, se_run
from .wlasso import WeightedLassoProblem, fit

__all__ = ["main", "EXIT_OK", "EXIT_CONFIG", "EXIT_NONCONVERGENCE",
           "EXIT_DIVERGENCE", "EXIT_IO"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGENCE = 3
EXIT_DIVERGENCE = 4
EXIT_IO = 5


class ConfigError(ValueError):
    """Bad flags, config file, or parameter combination."""


def _jsonable(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON-serializable: {type(obj)}")


class RunDir:
    """Output directory of one run: config echo, tables, summary, log."""

    def __init__(self, path: str, config: dict):
        self.path = path
        os.makedirs(path, exist_ok=True)
        self._t0 = time.perf_counter()
        self._lines: list[str] = []
        self.write_json("config.json", config)
        self.log("run started")

    def log(self, message: str):
        self._lines.append(
            f"[+{time.perf_counter() - self._t0:9.3f}s] {message}")

    def write_json(self, name: str, obj):
        with open(os.path.join(self.path, name), "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
            fh.write("\n")

    def write_table(self, name: str, frame: pd.DataFrame):
        frame.to_csv(os.path.join(self.path, name), index=False)
        self.log(f"wrote {name} ({len(frame)} rows)")

    def finish(self):
        self.log("run finished")
        with open(os.path.join(self.path, "log.txt"), "w") as fh:
            fh.write("\n".join(self._lines) + "\n")


def _merge_config(args, defaults: dict) -> dict:
    """Layer the parameter sources: defaults, then the JSON config file,
    then explicitly passed flags."""
    cfg = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            with open(config_path) as fh:
                loaded = json.load(fh)
        except json.JSONDecodeError as err:
            raise ConfigError(f"config file {config_path}: {err}") from err
        unknown = sorted(set(loaded) - set(defaults))
        if unknown:
            raise ConfigError(
                f"unknown config keys {unknown}; valid keys are "
                f"{sorted(defaults)}")
        cfg.update(loaded)
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    return cfg


_DATASET_KEYS = {"dataset": None, "response": "y", "n_noise": 0,
                 "noise_seed": 0, "standardize": False}


def _load_dataset(cfg):
    """Load a CSV dataset, pick up a truth sidecar when present, then
    apply the configured noise augmentation and standardization."""
    if not cfg.get("dataset"):
        raise ConfigError("--dataset is required")
    ds = load_csv(cfg["dataset"], cfg["response"])
    sidecar = os.path.join(os.path.dirname(os.path.abspath(cfg["dataset"])),
                           "truth.json")
    if os.path.exists(sidecar):
        with open(sidecar) as fh:
            stored = json.load(fh)
        if len(stored.get("beta0", ())) == ds.N:
            ds = replace(ds, truth=Truth(
                beta0=np.asarray(stored["beta0"], dtype=float),
                support=np.asarray(stored["support"], dtype=int)))
    if cfg["n_noise"]:
        ds = augment_noise(ds, cfg["n_noise"], seed=cfg["noise_seed"])
    if cfg["standardize"]:
        ds = standardize(ds)
    return ds


def _mix(cfg) -> PenaltyMixture:
    return PenaltyMixture(lam=cfg["lam"], w=cfg["w"], p_w=cfg["p_w"])


def _grid(cfg, ds):
    if cfg.get("lambdas") is not None:
        return np.asarray(cfg["lambdas"], dtype=float)
    return lambda_grid(ds, n_points=cfg["n_points"], ratio=cfg["ratio"])


def _moment_table(labels, **columns) -> pd.DataFrame:
    return pd.DataFrame({"column_label": list(labels), **columns})


def _long_table(lambdas, labels, quantities: dict) -> pd.DataFrame:
    """Long-format table: one row per (lambda, column_label, quantity)."""
    n_col = len(labels)
    frames = [pd.DataFrame({
        "lam": np.repeat(lambdas, n_col),
        "column_label": np.tile(labels, len(lambdas)),
        "quantity": name,
        "value": np.asarray(values).ravel(),
    }) for name, values in quantities.items()]
    return pd.concat(frames, ignore_index=True)


# --- subcommands -----------------------------------------------------------

SIMULATE_DEFAULTS = {"N": 1000, "alpha": 0.5, "rho0": 0.2, "sigma2": 0.01,
                     "r_com": 0.0, "seed": 0}


def cmd_simulate(cfg, out: str) -> int:
    spec = SyntheticSpec(N=cfg["N"], alpha=cfg["alpha"], rho0=cfg["rho0"],
                         sigma2=cfg["sigma2"], r_com=cfg["r_com"],
                         seed=cfg["seed"])
    run = RunDir(out, cfg)
    ds = gen_correlated(spec) if spec.r_com > 0 else gen_iid(spec)
    run.log(f"generated dataset M={ds.M} N={ds.N}")
    frame = pd.DataFrame(ds.X, columns=list(ds.column_labels))
    frame["y"] = ds.y
    run.write_table("dataset.csv", frame)
    run.write_json("truth.json", {"beta0": ds.truth.beta0,
                                  "support": ds.truth.support})
    overlap = mean_overlap(ds.X)
    run.write_json("summary.json", {
        "M": ds.M, "N": ds.N, "K0": spec.K0,
        "mean_overlap": overlap.value, "overlap_exact": overlap.exact})
    run.finish()
    return EXIT_OK


AMPR_DEFAULTS = {**_DATASET_KEYS, "lam": 1.0, "w": 1.0, "p_w": 0.0,
                 "tau": 1.0, "damping": 1.0, "max_iters": 1000,
                 "conv_tol": 1e-8, "deterministic": False}


def cmd_ampr(cfg, out: str) -> int:
    ds = _load_dataset(cfg)
    run = RunDir(out, cfg)
    config = AmprConfig(mix=_mix(cfg), tau=cfg["tau"],
                        damping=cfg["damping"], max_iters=cfg["max_iters"],
                        conv_tol=cfg["conv_tol"],
                        deterministic=cfg["deterministic"])
    t0 = time.perf_counter()
    try:
        result = ampr_run(ds, config)
    except AmprDivergenceError as err:
        run.log(f"diverged: {err}")
        run.write_json("summary.json", {"diverged": True,
                                        "sweep": err.sweep})
        run.finish()
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DIVERGENCE
    seconds = time.perf_counter() - t0
    state = result.state
    run.log(f"{result.iters_used} sweeps in {seconds:.3f}s "
            f"(converged={result.converged})")
    run.write_table("moments.csv", _moment_table(
        ds.column_labels, beta_bar=state.beta_bar, w_var=state.w_var,
        chi=state.chi, pi=result.pi))
    chi_tilde, w_tilde, mse = macroscopics(
        state, ds.truth.beta0 if ds.truth else None)
    run.write_json("summary.json", {
        "converged": result.converged, "iters_used": result.iters_used,
        "seconds": seconds, "chi_tilde": chi_tilde, "w_tilde": w_tilde,
        "mse": mse, "residual": (float(result.residual_history[-1])
                                 if result.iters_used else 0.0)})
    run.finish()
    if not result.converged:
        print(f"error: no convergence within {config.max_iters} sweeps",
              file=sys.stderr)
        return EXIT_NONCONVERGENCE
    return EXIT_OK


RESAMPLE_DEFAULTS = {**_DATASET_KEYS, "lam": 1.0, "w": 1.0, "p_w": 0.0,
                     "tau": 1.0, "mode": "fixed-size", "n_res": 1000,
                     "base_seed": 0, "tol": 1e-10, "max_iters": 100_000,
                     "polish": False, "workers": None, "deterministic": False}


def cmd_resample(cfg, out: str) -> int:
    ds = _load_dataset(cfg)
    run = RunDir(out, cfg)
    config = ResamplingConfig(mix=_mix(cfg), tau=cfg["tau"],
                              mode=cfg["mode"],
                              deterministic=cfg["deterministic"],
                              tol=cfg["tol"], max_iters=cfg["max_iters"],
                              polish=cfg["polish"], n_workers=cfg["workers"])
    t0 = time.perf_counter()
    try:
        moments = mc_run(ds, config, n_res=cfg["n_res"],
                         base_seed=cfg["base_seed"])
    except ResamplingError as err:
        run.log(f"failed: {err}")
        run.write_json("summary.json", {"failed_seed_tag": err.seed_tag})
        run.finish()
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    seconds = time.perf_counter() - t0
    run.log(f"{moments.n_res} resamples in {seconds:.3f}s")
    run.write_table("moments.csv", _moment_table(
        ds.column_labels, beta_bar=moments.beta_bar, w_var=moments.w_var,
        pi=moments.pi))
    run.write_json("summary.json", {"n_res": moments.n_res,
                                    "seconds": seconds})
    run.finish()
    return EXIT_OK


SE_DEFAULTS = {"alpha": 0.5, "rho0": 0.2, "sigma2": 0.01, "lam": 1.0,
               "w": 1.0, "p_w": 0.0, "tau": 1.0, "steps": 30, "mse0": 1.0,
               "deterministic": False}


def cmd_se(cfg, out: str) -> int:
    run = RunDir(out, cfg)
    params = SeParams(alpha=cfg["alpha"], sigma2=cfg["sigma2"],
                      tau=cfg["tau"], mix=_mix(cfg),
                      prior=SePrior(rho0=cfg["rho0"]),
                      deterministic=cfg["deterministic"])
    traj = se_run(initial_state(params, mse0=cfg["mse0"]), params,
                  cfg["steps"])
    run.write_table("trajectory.csv", pd.DataFrame(
        {"t": [s.t for s in traj],
         "chi_tilde": [s.chi_tilde for s in traj],
         "w_tilde": [s.w_tilde for s in traj],
         "mse": [s.mse for s in traj],
         "A": [s.A for s in traj],
         "C": [s.C for s in traj],
         "v0": [s.v0 for s in traj]}))
    last, prev = traj[-1], traj[-2]
    run.write_json("summary.json", {
        "chi_tilde": last.chi_tilde, "w_tilde": last.w_tilde,
        "mse": last.mse,
        "last_step_change": max(abs(last.chi_tilde - prev.chi_tilde),
                                abs(last.w_tilde - prev.w_tilde),
                                abs(last.mse - prev.mse))})
    run.finish()
    return EXIT_OK


BOLASSO_DEFAULTS = {**_DATASET_KEYS, "lam": None, "threshold": 0.9,
                    "engine": "ampr", "n_res": 1000, "base_seed": 0,
                    "damping": 1.0, "conv_tol": 1e-8, "max_iters": 1000,
                    "workers": None}


def cmd_bolasso(cfg, out: str) -> int:
    ds = _load_dataset(cfg)
    run = RunDir(out, cfg)
    t0 = time.perf_counter()
    try:
        report = bolasso(ds, lam=cfg["lam"], threshold=cfg["threshold"],
                         engine=cfg["engine"], n_res=cfg["n_res"],
                         base_seed=cfg["base_seed"], damping=cfg["damping"],
                         conv_tol=cfg["conv_tol"],
                         max_iters=cfg["max_iters"],
                         n_workers=cfg["workers"])
    except RuntimeError as err:  # non-convergence, divergence, resampling
        run.log(f"failed: {err}")
        run.finish()
        print(f"error: {err}", file=sys.stderr)
        return (EXIT_DIVERGENCE if isinstance(err, AmprDivergenceError)
                else EXIT_NONCONVERGENCE)
    run.log(f"selection done in {time.perf_counter() - t0:.3f}s")
    run.write_table("pi.csv", _moment_table(ds.column_labels, pi=report.pi))
    run.write_json("report.json", {
        "lam": report.lam, "threshold": report.threshold,
        "support": report.support,
        "support_labels": [ds.column_labels[i] for i in report.support],
        "tp": report.tp, "fp": report.fp})
    run.finish()
    return EXIT_OK


STABILITY_DEFAULTS = {**_DATASET_KEYS, "engine": "ampr", "tau": 0.5,
                      "w": 0.5, "p_w": 0.5, "lambdas": None, "n_points": 50,
                      "ratio": 1e-3, "n_res": 1000, "base_seed": 0,
                      "damping": 1.0, "conv_tol": 1e-8, "max_iters": 1000,
                      "workers": None, "q_lo": 16.0, "q_hi": 84.0}


def cmd_stability(cfg, out: str) -> int:
    ds = _load_dataset(cfg)
    run = RunDir(out, cfg)
    grid = _grid(cfg, ds)
    t0 = time.perf_counter()
    path = stability_path(ds, grid, tau=cfg["tau"], w=cfg["w"],
                          p_w=cfg["p_w"], engine=cfg["engine"],
                          n_res=cfg["n_res"], base_seed=cfg["base_seed"],
                          damping=cfg["damping"], conv_tol=cfg["conv_tol"],
                          max_iters=cfg["max_iters"],
                          n_workers=cfg["workers"])
    seconds = time.perf_counter() - t0
    run.log(f"{grid.size}-point path ({cfg['engine']}) in {seconds:.3f}s")
    run.write_table("path.csv", _long_table(
        path.lambdas, ds.column_labels,
        {"pi": path.pi, "beta_bar": path.beta_bar, "w_var": path.w_var}))
    summary = {"engine": path.engine, "seconds": seconds,
               "n_points": int(grid.size),
               "n_converged": int(path.converged.sum()),
               "converged": path.converged}
    if ds.noise_mask.any():
        region = rejection_region(path, ds.noise_mask, q_lo=cfg["q_lo"],
                                  q_hi=cfg["q_hi"])
        run.write_table("region.csv", _long_table(
            region.lambdas, ["noise"],
            {"lo": region.lo, "median": region.median, "hi": region.hi}))
        summary["n_noise_columns"] = int(ds.noise_mask.sum())
    run.write_json("summary.json", summary)
    run.finish()
    return EXIT_OK if path.converged.all() else EXIT_NONCONVERGENCE


CV_DEFAULTS = {**_DATASET_KEYS, "k": 10, "seed": 0, "lambdas": None,
               "n_points": 50, "ratio": 1e-3, "tol": 1e-8}


def cmd_cv(cfg, out: str) -> int:
    ds = _load_dataset(cfg)
    run = RunDir(out, cfg)
    grid = _grid(cfg, ds)
    t0 = time.perf_counter()
    result = cross_validate(ds, grid, k=cfg["k"], seed=cfg["seed"],
                            tol=cfg["tol"])
    sol = fit(WeightedLassoProblem(ds.X, ds.y, np.ones(ds.M),
                                   np.full(ds.N, result.lam_opt)))
    support = np.flatnonzero(sol.beta)
    run.log(f"{cfg['k']}-fold CV over {grid.size} penalties in "
            f"{time.perf_counter() - t0:.3f}s")
    run.write_table("cv.csv", _long_table(
        result.lambdas, [""],
        {"mean_error": result.mean_error, "std_error": result.std_error}))
    run.write_json("summary.json", {
        "lam_min": result.lam_min, "lam_opt": result.lam_opt,
        "support": support,
        "support_labels": [ds.column_labels[i] for i in support]})
    run.finish()
    return EXIT_OK


def cmd_compare(values_dir: str, reference_dir: str, out: str) -> int:
    """Normalized MSE between two runs' moments.csv tables; the second
    run is the reference (denominator)."""
    tables = []
    for d in (values_dir, reference_dir):
        path = os.path.join(d, "moments.csv")
        if not os.path.exists(path):
            raise ConfigError(f"no moments.csv under {d}")
        tables.append(pd.read_csv(path))
    a, b = tables
    if len(a) != len(b):
        raise ConfigError(
            f"dimension mismatch: {len(a)} vs {len(b)} coordinates")
    shared = [c for c in ("beta_bar", "w_var", "pi")
              if c in a.columns and c in b.columns]
    report = {}
    for column in shared:
        report[column] = normalized_mse(a[column].to_numpy(),
                                        b[column].to_numpy())
        print(f"normalized mse [{column}]: {report[column]:.6g}")
    run = RunDir(out, {"values": values_dir, "reference": reference_dir})
    run.write_json("compare.json", report)
    run.finish()
    return EXIT_OK


def cmd_fetch_wine(cache_dir: str | None) -> int:
    path = fetch_wine(cache_dir=cache_dir)
    ds = load_csv(path, response_column="quality")
    print(f"{path} (M={ds.M}, N={ds.N})")
    return EXIT_OK


# --- argument parsing ------------------------------------------------------

_COMMANDS = {
    "simulate": (SIMULATE_DEFAULTS, cmd_simulate),
    "ampr": (AMPR_DEFAULTS, cmd_ampr),
    "resample": (RESAMPLE_DEFAULTS, cmd_resample),
    "se": (SE_DEFAULTS, cmd_se),
    "bolasso": (BOLASSO_DEFAULTS, cmd_bolasso),
    "stability": (STABILITY_DEFAULTS, cmd_stability),
    "cv": (CV_DEFAULTS, cmd_cv),
}

_FLAG_TYPES = {
    "N": int, "seed": int, "n_noise": int, "noise_seed": int,
    "max_iters": int, "n_res": int, "base_seed": int, "steps": int,
    "k": int, "n_points": int, "workers": int,
    "dataset": str, "response": str, "mode": str, "engine": str,
}

_BOOL_FLAGS = {"standardize", "deterministic", "polish"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ampr",
        description="Resampling statistics of Lasso estimators: "
                    "semi-analytic engine, Monte-Carlo harness, and "
                    "selection pipelines.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name, (defaults, _) in _COMMANDS.items():
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config file; flags override")
        sp.add_argument("--out", help="output directory "
                                      "(default: <command>-run-<time>)")
        for key, fallback in defaults.items():
            if key == "lambdas":
                continue  # explicit grids come from the config file
            flag = "--" + key.replace("_", "-")
            if key in _BOOL_FLAGS:
                sp.add_argument(flag, action=argparse.BooleanOptionalAction,
                                default=None)
            else:
                kind = _FLAG_TYPES.get(key, float)
                sp.add_argument(flag, type=kind, default=None,
                                help=f"default {fallback}")

    sp = sub.add_parser("compare")
    sp.add_argument("values_dir")
    sp.add_argument("reference_dir",
                    help="reference run (normalization denominator)")
    sp.add_argument("--out")

    sp = sub.add_parser("fetch-wine")
    sp.add_argument("--cache-dir")
    return parser


def _default_out(command: str) -> str:
    return f"{command}-run-{time.strftime('%Y%m%d-%H%M%S')}"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "fetch-wine":
            return cmd_fetch_wine(args.cache_dir)
        if args.command == "compare":
            return cmd_compare(args.values_dir, args.reference_dir,
                               args.out or _default_out("compare"))
        defaults, runner = _COMMANDS[args.command]
        cfg = _merge_config(args, defaults)
        return runner(cfg, args.out or _default_out(args.command))
    except AmprDivergenceError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except ResamplingError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (ConfigError, ValueError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, urllib.error.URLError) as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
