"""Message-passing fixed point for resampled-Lasso statistics.

Instead of solving thousands of resampled Lasso problems, the solver iterates
a deterministic fixed point whose per-coordinate outputs are the resampling
averages themselves: the mean estimate beta_bar_i, the inter-resample
variance W_i, a rescaled intra-resample susceptibility chi_i, and the
selection probability Pi_i. Resampling enters only through the Poisson
moments f1, f2 of the sample counts and through the two-atom penalty
mixture.

One sweep costs O(N M): six matrix-vector products against the design (or
its elementwise square) plus vectorized scalar kernels. The per-sample
residual update carries an Onsager correction chi_mu * a_mu^(t-1) that
decouples successive iterates, exactly as in plain AMP.

State timing: `init_state` evaluates the per-sample block and the fields
(A, B, C) from the initial (beta_bar, chi, W) with the a^(-1) = 0
convention; each `ampr_sweep` then applies the nonlinear update to the
stored fields, damps, and refreshes the per-sample block, so after any
number of sweeps the stored (A, B, C) are consistent with the current
triple. Damping applies to (beta_bar, chi, W) only; a, A, B, C are
recomputed from the damped values (damping a_mu as well is a possible
variant, not implemented).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .moments import (PenaltyMixture, gauss_soft_moments,
                      mixture_soft_moments, penalty_average,
                      poisson_averages)

__all__ = [
    "AmprConfig", "AmprState", "AmprOutput", "AmprDivergenceError",
    "init_state", "ampr_sweep", "run", "positive_probability",
    "marginal_cdf", "macroscopics",
]


class AmprDivergenceError(RuntimeError):
    """The iteration produced non-finite values."""

    def __init__(self, sweep: int):
        super().__init__(f"iteration diverged (non-finite values) at sweep {sweep}")
        self.sweep = sweep


@dataclass
class AmprConfig:
    """Resampling scheme and iteration controls.

    mix : PenaltyMixture
        Penalty randomization; mix.lam is the base penalty.
    tau : float
        Poisson mean of the resample counts (subsample ratio m/M).
    damping : float
        gamma_d in (0, 1]; new = (1 - gamma_d) * old + gamma_d * raw for
        (beta_bar, chi, W). 1.0 means undamped. Correlated designs need
        small values (<= 0.1).
    max_iters, conv_tol : iteration cap and the max |d beta_bar| stopping
        threshold.
    tail_tol : Poisson truncation tolerance passed to the moment kernels.
    deterministic : replace the count distribution by c == 1 (no
        resampling); with w = 1 the sweep degenerates to plain AMP and the
        fixed point is the full-data Lasso solution.
    """

    mix: PenaltyMixture
    tau: float = 1.0
    damping: float = 1.0
    max_iters: int = 1000
    conv_tol: float = 1e-8
    tail_tol: float = 1e-14
    deterministic: bool = False

    def __post_init__(self):
        if not (0 < self.damping <= 1):
            raise ValueError(f"damping must lie in (0, 1], got {self.damping}")
        if self.conv_tol <= 0:
            raise ValueError("conv_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise ValueError(f"tau must be positive and finite, got {self.tau}")


@dataclass
class AmprState:
    """All per-coordinate and per-sample quantities of one sweep."""

    beta_bar: np.ndarray   # (N,) resampling mean of the estimator
    chi: np.ndarray        # (N,) intra-resample susceptibility, >= 0
    w_var: np.ndarray      # (N,) inter-resample variance W_i, >= 0
    a: np.ndarray          # (M,) residual messages
    chi_mu: np.ndarray     # (M,) X^2-projected chi
    w_mu: np.ndarray       # (M,) X^2-projected W
    f1: np.ndarray         # (M,) [c/(1+c chi_mu)]_c
    f2: np.ndarray         # (M,) [(c/(1+c chi_mu))^2]_c
    A: np.ndarray          # (N,) curvature of the local problem
    B: np.ndarray          # (N,) local field
    C: np.ndarray          # (N,) local field variance, >= 0
    iter: int = 0


@dataclass
class AmprOutput:
    state: AmprState
    pi: np.ndarray
    converged: bool
    iters_used: int
    residual_history: np.ndarray


def _resampling_averages(chi_mu, config: AmprConfig):
    if config.deterministic:
        f1 = 1.0 / (1.0 + chi_mu)
        return f1, f1 * f1
    pa = poisson_averages(chi_mu, config.tau, config.tail_tol)
    return pa.f1, pa.f2


def _mu_and_field_blocks(beta_bar, chi, w_var, a_old, X, X2, y,
                         config: AmprConfig):
    """Per-sample block and the (A, B, C) fields from a coordinate triple."""
    chi_mu = X2 @ chi
    w_mu = X2 @ w_var
    f1, f2 = _resampling_averages(chi_mu, config)
    assert np.all(f1 > 0), "f1 must stay positive for any tau > 0"
    a = f1 * (y - X @ beta_bar + chi_mu * a_old)
    A = X2.T @ f1
    B = X.T @ a + A * beta_bar
    ratio = a / f1
    C = X2.T @ (f2 * w_mu + (f2 - f1 * f1) * (ratio * ratio))
    np.maximum(C, 0.0, out=C)
    return chi_mu, w_mu, f1, f2, a, A, B, C


def init_state(dataset, config: AmprConfig, warm_start=None,
               X2: np.ndarray | None = None) -> AmprState:
    """Initial state: cold start is all zeros, a^(0) = f1 * (y - X beta_bar).

    warm_start, if given, is a (beta_bar, chi, W) triple, e.g. the converged
    values at a neighboring penalty. The residual messages are re-derived
    with the a^(-1) = 0 convention either way.
    """
    X = np.asarray(dataset.X, dtype=float)
    y = np.asarray(dataset.y, dtype=float)
    M, N = X.shape
    if y.shape != (M,):
        raise ValueError(f"y has shape {y.shape}, expected ({M},)")
    if X2 is None:
        X2 = X * X
    if warm_start is None:
        beta_bar, chi, w_var = np.zeros(N), np.zeros(N), np.zeros(N)
    else:
        beta_bar, chi, w_var = (np.array(v, dtype=float, copy=True)
                                for v in warm_start)
        for v in (beta_bar, chi, w_var):
            if v.shape != (N,):
                raise ValueError(
                    f"warm_start field has shape {v.shape}, expected ({N},)")
    with np.errstate(all="ignore"):
        chi_mu, w_mu, f1, f2, a, A, B, C = _mu_and_field_blocks(
            beta_bar, chi, w_var, np.zeros(M), X, X2, y, config)
    return AmprState(beta_bar, chi, w_var, a, chi_mu, w_mu, f1, f2, A, B, C,
                     iter=0)


def ampr_sweep(state: AmprState, dataset, config: AmprConfig,
               X2: np.ndarray | None = None) -> AmprState:
    """One full update: nonlinear step, damping, per-sample refresh.

    Raises AmprDivergenceError (carrying the sweep index) if non-finite
    values appear.
    """
    X = np.asarray(dataset.X, dtype=float)
    y = np.asarray(dataset.y, dtype=float)
    if X2 is None:
        X2 = X * X
    sweep_idx = state.iter + 1

    with np.errstate(all="ignore"):
        gm = mixture_soft_moments(state.B, state.C, state.A, config.mix)
        beta_raw = gm.m1
        chi_raw = gm.mass / state.A
        w_raw = gm.m2 - gm.m1 * gm.m1

        g = config.damping
        if g == 1.0:
            beta_bar, chi, w_var = beta_raw, chi_raw, w_raw
        else:
            beta_bar = state.beta_bar + g * (beta_raw - state.beta_bar)
            chi = state.chi + g * (chi_raw - state.chi)
            w_var = state.w_var + g * (w_raw - state.w_var)
        chi = np.maximum(chi, 0.0)
        w_var = np.maximum(w_var, 0.0)

        chi_mu, w_mu, f1, f2, a, A, B, C = _mu_and_field_blocks(
            beta_bar, chi, w_var, state.a, X, X2, y, config)

    for arr in (beta_bar, a, B, C):
        if not np.all(np.isfinite(arr)):
            raise AmprDivergenceError(sweep_idx)
    return AmprState(beta_bar, chi, w_var, a, chi_mu, w_mu, f1, f2, A, B, C,
                     iter=sweep_idx)


def run(dataset, config: AmprConfig, warm_start=None) -> AmprOutput:
    """Iterate sweeps until max |d beta_bar| <= conv_tol or max_iters.

    Non-convergence (cap hit) is reported in the output; divergence
    (non-finite values) raises AmprDivergenceError.
    """
    X = np.asarray(dataset.X, dtype=float)
    X2 = X * X
    state = init_state(dataset, config, warm_start=warm_start, X2=X2)
    history = np.empty(config.max_iters)
    converged = False
    for t in range(config.max_iters):
        prev = state.beta_bar
        state = ampr_sweep(state, dataset, config, X2=X2)
        resid = float(np.max(np.abs(state.beta_bar - prev), initial=0.0))
        history[t] = resid
        if resid <= config.conv_tol:
            converged = True
            break
    pi = positive_probability(state.A, state.B, state.C, config.mix)
    return AmprOutput(state=state, pi=pi, converged=converged,
                      iters_used=state.iter,
                      residual_history=history[:state.iter].copy())


def positive_probability(A, B, C, mix: PenaltyMixture) -> np.ndarray:
    """Selection probability Pi_i: penalty-averaged Gaussian mass outside
    the soft-threshold dead zone at the converged (A, B, C)."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    C = np.asarray(C, dtype=float)
    return penalty_average(mix, lambda lam: gauss_soft_moments(B, C, lam, A).mass)


def _norm_cdf(x):
    return 0.5 * erfc(-x / np.sqrt(2.0))


def marginal_cdf(i: int, A, B, C, mix: PenaltyMixture, grid) -> np.ndarray:
    """CDF of the resampled estimator's marginal law at coordinate i.

    The law is soft_threshold(B_i + sqrt(C_i) z; lam, A_i) with z standard
    normal and lam mixture-distributed: two Gaussian lobes plus an atom at
    zero of mass 1 - Pi_i. Evaluated on an ascending grid of beta values.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or np.any(np.diff(grid) < 0):
        raise ValueError("grid must be an ascending 1-d array")
    Ai, Bi, Ci = float(np.asarray(A)[i]), float(np.asarray(B)[i]), \
        float(np.asarray(C)[i])

    def atom_cdf(lam):
        # For t >= 0 the event {S <= t} is {x <= A t + lam}; for t < 0 it
        # is {x <= A t - lam}, x = B + sqrt(C) z.
        thr = np.where(grid >= 0, Ai * grid + lam, Ai * grid - lam)
        if Ci == 0.0:
            return (thr >= Bi).astype(float)
        return _norm_cdf((thr - Bi) / np.sqrt(Ci))

    return penalty_average(mix, atom_cdf)


def macroscopics(state: AmprState, beta0=None):
    """Macroscopic summaries (chi_tilde, w_tilde, mse).

    mse is None unless the true signal beta0 is supplied.
    """
    chi_tilde = float(np.mean(state.chi))
    w_tilde = float(np.mean(state.w_var))
    mse = None
    if beta0 is not None:
        beta0 = np.asarray(beta0, dtype=float)
        if beta0.shape != state.beta_bar.shape:
            raise ValueError("beta0 length does not match the state")
        mse = float(np.mean((beta0 - state.beta_bar) ** 2))
    return chi_tilde, w_tilde, mse
