"""Variable-selection pipelines over the two resampling engines.

Bootstrap-based selection (Bolasso: full-size bootstrap, plain penalty,
select by high selection probability) and stability selection (subsampling
plus randomized penalties, examined along a penalty grid) can both run on
either engine: "ampr" computes selection probabilities semi-analytically,
"monte-carlo" by direct resampling. A rejection region summarizes the
selection-probability paths of known-noise columns into per-penalty
percentile bands; plain k-fold cross-validation with the one-standard-error
rule provides the classical single-fit baseline, and tp_fp/normalized_mse
are the evaluation metrics.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .moments import PenaltyMixture
from .resampling import ResamplingConfig, ResamplingError
from .resampling import run as mc_run
from .solver import AmprConfig, AmprDivergenceError
from .solver import run as ampr_run
from .wlasso import fit_path

__all__ = [
    "SelectionReport", "StabilityPath", "RejectionRegion", "CvResult",
    "bolasso", "stability_path", "rejection_region", "cross_validate",
    "tp_fp", "normalized_mse", "lambda_grid",
]

ENGINES = ("ampr", "monte-carlo")


def tp_fp(S, S0, N: int):
    """True/false positive ratios of a selected support S against S0.

    TP = |S ∩ S0| / |S0| and FP = |S \\ S0| / (N - |S0|); an empty S0
    (or a full one, for FP) makes the ratio undefined and yields nan.
    """
    S, S0 = set(np.asarray(S, dtype=int)), set(np.asarray(S0, dtype=int))
    for idx in S | S0:
        if not 0 <= idx < N:
            raise ValueError(f"index {idx} outside 0..{N - 1}")
    tp = len(S & S0) / len(S0) if S0 else float("nan")
    n_null = N - len(S0)
    fp = len(S - S0) / n_null if n_null else float("nan")
    return tp, fp


def normalized_mse(values, reference) -> float:
    """Squared distance normalized by the reference: sum((v - r)^2) /
    sum(r^2), with the semi-analytic vector as the reference."""
    values = np.asarray(values, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if values.shape != reference.shape:
        raise ValueError(
            f"shape mismatch: {values.shape} vs {reference.shape}")
    denom = float(np.sum(reference ** 2))
    if denom == 0.0:
        raise ValueError("reference vector has zero norm")
    return float(np.sum((values - reference) ** 2) / denom)


def lambda_grid(dataset, n_points: int = 50, ratio: float = 1e-3):
    """Default penalty grid: n_points log-spaced values descending from
    lam_max = max_i |x_i . y| (the null threshold) to lam_max * ratio."""
    lam_max = float(np.max(np.abs(dataset.X.T @ dataset.y)))
    if lam_max <= 0:
        raise ValueError("X.T @ y is identically zero; no usable grid")
    if not 0 < ratio < 1:
        raise ValueError(f"ratio must lie in (0, 1), got {ratio}")
    return np.geomspace(lam_max, lam_max * ratio, n_points)


@dataclass(frozen=True)
class SelectionReport:
    """Support selected by thresholding selection probabilities.

    tp and fp are filled when the dataset carries its generating truth
    (nan when undefined, e.g. an empty true support).
    """

    support: np.ndarray
    threshold: float
    lam: float
    pi: np.ndarray
    tp: float | None = None
    fp: float | None = None


@dataclass(frozen=True)
class StabilityPath:
    """Selection-probability paths over a descending penalty grid.

    Rows of pi/beta_bar/w_var follow `lambdas`; `converged` flags each
    grid point (a failed point holds nan and False). engine records which
    back end produced the path.
    """

    lambdas: np.ndarray
    pi: np.ndarray
    beta_bar: np.ndarray
    w_var: np.ndarray
    engine: str
    converged: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float)
        if lam.ndim != 1 or np.any(np.diff(lam) >= 0) or np.any(lam <= 0):
            raise ValueError("lambdas must be positive, strictly decreasing")
        ok = ~np.isnan(self.pi)
        if np.any((self.pi[ok] < 0) | (self.pi[ok] > 1)):
            raise ValueError("pi must lie in [0, 1]")


@dataclass(frozen=True)
class RejectionRegion:
    """Percentile band of the noise columns' selection probabilities,
    pointwise in the penalty: q_lo and q_hi percentiles around the
    median."""

    lambdas: np.ndarray
    lo: np.ndarray
    median: np.ndarray
    hi: np.ndarray
    q_lo: float
    q_hi: float

    def __post_init__(self):
        if not (np.all(self.lo <= self.median)
                and np.all(self.median <= self.hi)):
            raise ValueError("percentile band must bracket the median")


@dataclass(frozen=True)
class CvResult:
    """k-fold cross-validation summary over a penalty grid.

    lam_opt is the one-standard-error choice: the largest penalty whose
    mean error stays within one standard error of the minimum.
    """

    lambdas: np.ndarray
    mean_error: np.ndarray
    std_error: np.ndarray
    lam_min: float
    lam_opt: float
    idx_min: int
    idx_opt: int


def _engine_moments(dataset, mix, tau, engine, *, n_res, base_seed, damping,
                    conv_tol, max_iters, n_workers, warm_start=None):
    """One (beta_bar, w_var, pi, converged, warm) evaluation on either
    engine; warm is the triple to seed the next penalty with (ampr only)."""
    if engine == "ampr":
        config = AmprConfig(mix=mix, tau=tau, damping=damping,
                            max_iters=max_iters, conv_tol=conv_tol)
        out = ampr_run(dataset, config, warm_start=warm_start)
        state = out.state
        warm = (state.beta_bar, state.chi, state.w_var)
        return state.beta_bar, state.w_var, out.pi, out.converged, warm
    config = ResamplingConfig(mix=mix, tau=tau, n_workers=n_workers)
    mom = mc_run(dataset, config, n_res=n_res, base_seed=base_seed)
    return mom.beta_bar, mom.w_var, mom.pi, True, None


def bolasso(dataset, lam: float | None = None, threshold: float = 0.9,
            engine: str = "ampr", n_res: int = 1000, base_seed: int = 0,
            damping: float = 1.0, conv_tol: float = 1e-8,
            max_iters: int = 1000,
            n_workers: int | None = None) -> SelectionReport:
    """Bootstrap selection: full-size resampling (tau=1), plain penalty,
    keep coordinates selected in at least `threshold` of the resamples.

    The default penalty follows the consistency scaling lam =
    sqrt(M/N) / 2. Engine non-convergence raises; no partial report is
    returned.
    """
    if not 0 < threshold <= 1:
        raise ValueError(f"threshold must lie in (0, 1], got {threshold}")
    if engine not in ENGINES:
        raise ValueError(f"engine must be one of {ENGINES}, got {engine!r}")
    if lam is None:
        lam = 0.5 * np.sqrt(dataset.X.shape[0] / dataset.X.shape[1])
    mix = PenaltyMixture(lam=float(lam), w=1.0, p_w=0.0)
    _, _, pi, converged, _ = _engine_moments(
        dataset, mix, 1.0, engine, n_res=n_res, base_seed=base_seed,
        damping=damping, conv_tol=conv_tol, max_iters=max_iters,
        n_workers=n_workers)
    if not converged:
        raise RuntimeError(
            f"bolasso engine did not converge at lam={lam:.4g}; "
            f"increase max_iters or lower damping")
    support = np.flatnonzero(pi >= threshold)
    tp = fp = None
    truth = getattr(dataset, "truth", None)
    if truth is not None:
        tp, fp = tp_fp(support, truth.support, dataset.X.shape[1])
    return SelectionReport(support=support, threshold=threshold,
                           lam=float(lam), pi=pi, tp=tp, fp=fp)


def stability_path(dataset, lambdas=None, tau: float = 0.5, w: float = 0.5,
                   p_w: float = 0.5, engine: str = "ampr",
                   n_res: int = 1000, base_seed: int = 0,
                   damping: float = 1.0, conv_tol: float = 1e-8,
                   max_iters: int = 1000,
                   n_workers: int | None = None) -> StabilityPath:
    """Selection probabilities along a descending penalty grid.

    Defaults implement stability selection: half-size subsampling with
    half the coordinates (on average) penalized twice as hard. The ampr
    engine warm-starts each point from the previous fixed point; the
    monte-carlo engine reuses the same resample streams at every point
    (common draws), so paths are smooth in the penalty. A point that
    fails outright is recorded as nan with converged=False and the sweep
    continues.
    """
    if engine not in ENGINES:
        raise ValueError(f"engine must be one of {ENGINES}, got {engine!r}")
    lambdas = (lambda_grid(dataset) if lambdas is None
               else np.asarray(lambdas, dtype=float))
    if lambdas.ndim != 1 or lambdas.size == 0:
        raise ValueError("lambdas must be a nonempty 1-d array")
    if np.any(np.diff(lambdas) >= 0) or np.any(lambdas <= 0):
        raise ValueError("lambdas must be positive, strictly decreasing")
    N = dataset.X.shape[1]
    n_grid = lambdas.size
    pi = np.full((n_grid, N), np.nan)
    beta_bar = np.full((n_grid, N), np.nan)
    w_var = np.full((n_grid, N), np.nan)
    converged = np.zeros(n_grid, dtype=bool)
    warm = None
    for j, lam in enumerate(lambdas):
        mix = PenaltyMixture(lam=float(lam), w=w, p_w=p_w)
        try:
            bb, wv, p, ok, warm = _engine_moments(
                dataset, mix, tau, engine, n_res=n_res, base_seed=base_seed,
                damping=damping, conv_tol=conv_tol, max_iters=max_iters,
                n_workers=n_workers, warm_start=warm)
        except (AmprDivergenceError, ResamplingError):
            warm = None  # cold-start the next point
            continue
        beta_bar[j], w_var[j], pi[j] = bb, wv, p
        converged[j] = ok
    return StabilityPath(lambdas=lambdas, pi=pi, beta_bar=beta_bar,
                         w_var=w_var, engine=engine, converged=converged)


def rejection_region(path: StabilityPath, noise_mask, q_lo: float = 16.0,
                     q_hi: float = 84.0) -> RejectionRegion:
    """Percentile band of the noise columns' selection probabilities.

    Columns flagged by noise_mask carry no signal, so their band shows
    what selection probabilities pure noise attains at each penalty;
    fewer than 20 noise columns make the percentiles coarse (warning).
    """
    noise_mask = np.asarray(noise_mask, dtype=bool)
    if noise_mask.shape != (path.pi.shape[1],):
        raise ValueError("noise_mask length does not match the path")
    if not (0 <= q_lo <= q_hi <= 100):
        raise ValueError(f"need 0 <= q_lo <= q_hi <= 100, got "
                         f"({q_lo}, {q_hi})")
    n_noise = int(noise_mask.sum())
    if n_noise == 0:
        raise ValueError("no noise columns to build a region from")
    if n_noise < 20:
        warnings.warn(f"only {n_noise} noise columns; percentiles are "
                      "coarse", stacklevel=2)
    block = path.pi[:, noise_mask]
    lo, median, hi = np.nanpercentile(block, [q_lo, 50.0, q_hi], axis=1)
    return RejectionRegion(lambdas=path.lambdas, lo=lo, median=median,
                           hi=hi, q_lo=q_lo, q_hi=q_hi)


def cross_validate(dataset, lambdas=None, k: int = 10, seed: int = 0,
                   folds=None, tol: float = 1e-8,
                   max_iters: int = 100_000) -> CvResult:
    """k-fold cross-validation of the plain Lasso over a penalty grid.

    Folds are a seeded partition of the rows (pass `folds`, a list of
    index arrays, to pin them explicitly); each training fit runs the
    warm-started path solver, and the error is the mean squared
    prediction residual on the held-out rows. lam_opt applies the
    one-standard-error rule at the minimizing penalty, with the standard
    error taken across folds.
    """
    X, y = dataset.X, dataset.y
    M = X.shape[0]
    lambdas = (lambda_grid(dataset) if lambdas is None
               else np.asarray(lambdas, dtype=float))
    if folds is None:
        if not 2 <= k <= M:
            raise ValueError(f"need 2 <= k <= M={M}, got k={k}")
        perm = np.random.default_rng(seed).permutation(M)
        folds = np.array_split(perm, k)
    else:
        folds = [np.asarray(f, dtype=int) for f in folds]
        k = len(folds)
        if k < 2:
            raise ValueError("need at least two folds")
    errors = np.empty((k, lambdas.size))
    for f, test_rows in enumerate(folds):
        mask = np.ones(M, dtype=bool)
        mask[test_rows] = False
        sols = fit_path(X[mask], y[mask], np.ones(int(mask.sum())),
                        lambdas, tol=tol, max_iters=max_iters)
        for j, sol in enumerate(sols):
            r = y[test_rows] - X[test_rows] @ sol.beta
            errors[f, j] = float(np.mean(r * r))
    mean_error = errors.mean(axis=0)
    std_error = errors.std(axis=0, ddof=1) / np.sqrt(k)
    idx_min = int(np.argmin(mean_error))
    cut = mean_error[idx_min] + std_error[idx_min]
    idx_opt = int(np.flatnonzero(mean_error <= cut)[0])  # largest penalty
    return CvResult(lambdas=lambdas, mean_error=mean_error,
                    std_error=std_error, lam_min=float(lambdas[idx_min]),
                    lam_opt=float(lambdas[idx_opt]), idx_min=idx_min,
                    idx_opt=idx_opt)
