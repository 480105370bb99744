"""Direct Monte-Carlo resampling of weighted Lasso estimators.

The harness realizes the configurational average the message-passing solver
computes analytically: it draws resample counts c_mu and randomized
penalties lam_i, solves each weighted Lasso instance exactly, and
aggregates the empirical mean beta_bar_i, the inter-resample variance W_i,
and the selection probability Pi_i. It is the ground-truth oracle the
semi-analytic results are validated against.

Reproducibility: resample r derives its own generator from
default_rng([base_seed, r]) and consumes it in a fixed order (counts, then
penalties), so results are bit-identical for any worker count; aggregation
always reduces in resample-index order.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .moments import PenaltyMixture
from .wlasso import WeightedLassoProblem, fit

__all__ = [
    "ResamplingConfig", "ResampleDraw", "EmpiricalMoments",
    "ResamplingError", "draw_counts", "draw_penalties", "make_draw", "run",
]


class ResamplingError(RuntimeError):
    """An inner Lasso solve failed; seed_tag identifies the resample."""

    def __init__(self, seed_tag: int, detail: str):
        super().__init__(
            f"resample with seed_tag {seed_tag} failed: {detail}")
        self.seed_tag = seed_tag


@dataclass
class ResamplingConfig:
    """Resampling scheme and inner-solver controls.

    mix : PenaltyMixture
        Penalty randomization; mix.lam is the base penalty.
    tau : float
        Subsample ratio m/M. In "fixed-size" mode each resample draws
        round(tau*M) sample indices uniformly with replacement; in
        "poisson" mode each count is independently Poisson(tau).
    mode : "fixed-size" | "poisson"
        Count law. Fixed-size matches bootstrap practice and is the
        default; the Poisson law is what the semi-analytic solver assumes
        (the two differ only through a weak global constraint on the
        counts).
    deterministic : replace the counts by c == 1 (no sample randomness);
        penalties are still drawn from the mixture.
    tol, max_iters : inner coordinate-descent controls (see wlasso.fit).
    polish : finish each inner solve with the exact active-set step
        (wlasso.fit polish=True); much faster at weak penalties.
    n_workers : thread count for concurrent solves; None means all cores.
    """

    mix: PenaltyMixture
    tau: float = 1.0
    mode: str = "fixed-size"
    deterministic: bool = False
    tol: float = 1e-10
    max_iters: int = 100_000
    polish: bool = False
    n_workers: int | None = None

    def __post_init__(self):
        if self.mode not in ("fixed-size", "poisson"):
            raise ValueError(
                f"mode must be 'fixed-size' or 'poisson', got {self.mode!r}")
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise ValueError(f"tau must be positive and finite, got {self.tau}")
        if self.n_workers is not None and self.n_workers < 1:
            raise ValueError("n_workers must be a positive integer or None")


@dataclass
class ResampleDraw:
    """One resample: counts c_mu, penalties lam_i, and the stream tag."""

    counts: np.ndarray
    penalties: np.ndarray
    seed_tag: int


@dataclass
class EmpiricalMoments:
    """Aggregates over n_res resampled solutions.

    beta_bar is the mean estimate, w_var the unbiased (n-1 divisor)
    inter-resample variance, pi the fraction of resamples selecting each
    coordinate (exact-zero test; coordinate descent produces exact zeros).
    """

    beta_bar: np.ndarray
    w_var: np.ndarray
    pi: np.ndarray
    n_res: int


def draw_counts(M: int, tau: float, mode: str = "fixed-size",
                rng: np.random.Generator | None = None) -> np.ndarray:
    """Draw one vector of resample counts.

    Fixed-size mode draws round(tau*M) indices uniformly with replacement
    and tallies them (the counts always sum to round(tau*M)); Poisson mode
    draws each count independently with mean tau.
    """
    if rng is None:
        rng = np.random.default_rng()
    if not (np.isfinite(tau) and tau > 0):
        raise ValueError(f"tau must be positive and finite, got {tau}")
    if mode == "fixed-size":
        m = int(round(tau * M))
        if m < 1:
            raise ValueError(
                f"fixed-size mode needs round(tau*M) >= 1, got {m} "
                f"for tau={tau}, M={M}")
        idx = rng.integers(0, M, size=m)
        return np.bincount(idx, minlength=M).astype(np.int64)
    if mode == "poisson":
        return rng.poisson(tau, size=M).astype(np.int64)
    raise ValueError(f"mode must be 'fixed-size' or 'poisson', got {mode!r}")


def draw_penalties(N: int, mix: PenaltyMixture,
                   rng: np.random.Generator | None = None) -> np.ndarray:
    """Draw per-coordinate penalties: lam/w with probability p_w, else lam."""
    if rng is None:
        rng = np.random.default_rng()
    small = rng.random(N) < mix.p_w
    return np.where(small, mix.lam / mix.w, mix.lam)


def make_draw(M: int, N: int, config: ResamplingConfig, base_seed: int,
              index: int) -> ResampleDraw:
    """The draw of resample `index`: stream default_rng([base_seed, index]),
    counts consumed before penalties."""
    rng = np.random.default_rng([base_seed, index])
    if config.deterministic:
        counts = np.ones(M, dtype=np.int64)
    else:
        counts = draw_counts(M, config.tau, config.mode, rng)
    penalties = draw_penalties(N, config.mix, rng)
    return ResampleDraw(counts=counts, penalties=penalties, seed_tag=index)


def _point_mass(mix: PenaltyMixture) -> float | None:
    """The single penalty value of a degenerate mixture, else None."""
    if mix.w == 1.0 or mix.p_w == 0.0:
        return mix.lam
    if mix.p_w == 1.0:
        return mix.lam / mix.w
    return None


def _solve_one(X, y, draw: ResampleDraw, config: ResamplingConfig):
    if not np.any(draw.counts > 0):
        # Zero total weight: the loss vanishes and the penalty alone
        # fixes the minimizer at the origin.
        return np.zeros(X.shape[1])
    problem = WeightedLassoProblem(X, y, draw.counts, draw.penalties)
    sol = fit(problem, tol=config.tol, max_iters=config.max_iters,
              polish=config.polish)
    if not sol.converged:
        raise ResamplingError(
            draw.seed_tag,
            f"coordinate descent hit the {config.max_iters}-sweep cap "
            f"(KKT violation {sol.kkt_violation:.3e})")
    return sol.beta


def run(dataset, config: ResamplingConfig, n_res: int, base_seed: int = 0,
        draws=None) -> EmpiricalMoments:
    """Aggregate empirical moments over n_res resampled Lasso solutions.

    Resamples solve concurrently (numba kernels release the GIL), but the
    reduction runs in index order, so the result is bit-identical for any
    worker count. `draws`, if given, overrides the RNG-derived draws with
    an explicit sequence of length n_res (replay / forced-draw hook).

    Raises ResamplingError, carrying the offending seed_tag, if any inner
    solve fails to converge.
    """
    X = np.ascontiguousarray(dataset.X, dtype=float)
    y = np.asarray(dataset.y, dtype=float)
    M, N = X.shape
    if n_res < 2:
        raise ValueError(f"n_res must be >= 2, got {n_res}")
    if draws is not None and len(draws) != n_res:
        raise ValueError(
            f"got {len(draws)} forced draws but n_res={n_res}")

    # Fully deterministic scheme: every resample is the same problem, so
    # one solve gives the exact aggregate (mean = solution, variance = 0).
    lam_point = _point_mass(config.mix)
    if draws is None and config.deterministic and lam_point is not None:
        draw = ResampleDraw(np.ones(M, dtype=np.int64),
                            np.full(N, lam_point), seed_tag=0)
        beta = _solve_one(X, y, draw, config)
        return EmpiricalMoments(beta_bar=beta, w_var=np.zeros(N),
                                pi=(beta != 0.0).astype(float), n_res=n_res)

    def solve(r: int):
        draw = draws[r] if draws is not None else make_draw(
            M, N, config, base_seed, r)
        return _solve_one(X, y, draw, config)

    workers = config.n_workers or os.cpu_count() or 1
    sum1 = np.zeros(N)
    sum2 = np.zeros(N)
    n_sel = np.zeros(N, dtype=np.int64)
    chunk = max(32, 8 * workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for start in range(0, n_res, chunk):
            block = range(start, min(start + chunk, n_res))
            for beta in pool.map(solve, block):
                sum1 += beta
                sum2 += beta * beta
                n_sel += beta != 0.0
    beta_bar = sum1 / n_res
    w_var = np.maximum((sum2 - n_res * beta_bar * beta_bar) / (n_res - 1),
                       0.0)
    return EmpiricalMoments(beta_bar=beta_bar, w_var=w_var,
                            pi=n_sel / n_res, n_res=n_res)
