"""Macroscopic recursion tracking the message-passing dynamics.

For i.i.d. Gaussian designs with variance 1/N, the per-coordinate quantities
of the solver concentrate, and their averages (chi_tilde, w_tilde, mse)
follow a closed three-dimensional recursion: the local field at a coordinate
carrying signal beta0 is B = A beta0 + sqrt(v0) u with u standard normal,

    f1, f2 = Poisson averages at chi_tilde
    A  = alpha f1
    C  = alpha f2 w_tilde + alpha (f2 - f1^2) (mse + sigma2)
    v0 = alpha f1^2 (mse + sigma2)

and the next (chi_tilde, w_tilde, mse) are prior-and-u expectations of the
penalty-averaged soft-threshold moments at (A, B, C). The signal prior is
Bernoulli-Gauss: zero with probability 1 - rho0, else Gaussian with variance
signal_variance (1/rho0 by default, so the signal power is one).

The u-integral and the nonzero-signal integral use Gauss-Hermite quadrature;
the zero atom of the prior is handled analytically. Updates are synchronous,
mirroring the solver's sweep order, so trajectories are comparable step by
step. The design-variance convention 1/N is baked in; any other column
scaling must be absorbed into the penalty before comparing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .moments import PenaltyMixture, mixture_soft_moments, poisson_averages


@dataclass(frozen=True)
class SePrior:
    """Bernoulli-Gauss signal prior: (1-rho0) delta_0 + rho0 N(0, variance)."""

    rho0: float
    signal_variance: float | None = None

    def __post_init__(self):
        if not (0 < self.rho0 <= 1):
            raise ValueError(f"rho0 must lie in (0, 1], got {self.rho0}")
        if self.signal_variance is None:
            object.__setattr__(self, "signal_variance", 1.0 / self.rho0)
        if self.signal_variance <= 0:
            raise ValueError("signal_variance must be positive")


@dataclass(frozen=True)
class SeParams:
    """Model and resampling parameters of the recursion."""

    alpha: float                 # sample ratio M/N
    sigma2: float                # observation noise variance
    tau: float                   # Poisson mean of the resample counts
    mix: PenaltyMixture
    prior: SePrior
    gh_order: int = 41
    tail_tol: float = 1e-14
    deterministic: bool = False  # c == 1 mode, mirrors the solver flag

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be nonnegative")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.gh_order < 3:
            raise ValueError("gh_order must be at least 3")


@dataclass(frozen=True)
class SeState:
    """One point of the trajectory; the derived fields (A, C, v0, f1, f2)
    are consistent with this state's own (chi_tilde, w_tilde, mse)."""

    chi_tilde: float
    w_tilde: float
    mse: float
    A: float
    C: float
    v0: float
    f1: float
    f2: float
    t: int = 0


def _gh_nodes(order: int):
    x, w = np.polynomial.hermite_e.hermegauss(order)
    return x, w / np.sqrt(2.0 * np.pi)


def _derived_fields(chi_tilde: float, w_tilde: float, mse: float,
                    params: SeParams):
    if params.deterministic:
        f1 = 1.0 / (1.0 + chi_tilde)
        f2 = f1 * f1
    else:
        pa = poisson_averages(chi_tilde, params.tau, params.tail_tol)
        f1, f2 = pa.f1, pa.f2
    A = params.alpha * f1
    C = params.alpha * f2 * w_tilde \
        + params.alpha * (f2 - f1 * f1) * (mse + params.sigma2)
    v0 = params.alpha * f1 * f1 * (mse + params.sigma2)
    return A, max(C, 0.0), v0, f1, f2


def make_state(chi_tilde: float, w_tilde: float, mse: float,
               params: SeParams, t: int = 0) -> SeState:
    """Build a state with its derived fields filled in."""
    A, C, v0, f1, f2 = _derived_fields(chi_tilde, w_tilde, mse, params)
    return SeState(chi_tilde=float(chi_tilde), w_tilde=float(w_tilde),
                   mse=float(mse), A=A, C=C, v0=v0, f1=f1, f2=f2, t=t)


def initial_state(params: SeParams, mse0: float = 1.0) -> SeState:
    """Cold-start state (0, 0, mse0); mse0 defaults to the prior power."""
    return make_state(0.0, 0.0, mse0, params, t=0)


def se_step(state: SeState, params: SeParams) -> SeState:
    """One synchronous update of the macroscopic recursion."""
    A, C, v0 = state.A, state.C, state.v0
    sqrt_v0 = np.sqrt(v0)
    xu, wu = _gh_nodes(params.gh_order)
    rho0 = params.prior.rho0

    # Zero atom of the prior: B = sqrt(v0) u, one-dimensional quadrature.
    gm = mixture_soft_moments(sqrt_v0 * xu, C, A, params.mix)
    chi_zero = wu @ gm.mass
    w_zero = wu @ (gm.m2 - gm.m1 * gm.m1)
    mse_zero = wu @ (gm.m1 * gm.m1)

    # Nonzero component: beta0 = sqrt(signal_variance) s, tensor quadrature.
    beta_nodes = np.sqrt(params.prior.signal_variance) * xu
    B = A * beta_nodes[:, None] + sqrt_v0 * xu[None, :]
    gm = mixture_soft_moments(B, C, A, params.mix)
    wts = np.outer(wu, wu)
    chi_nz = np.sum(wts * gm.mass)
    w_nz = np.sum(wts * (gm.m2 - gm.m1 * gm.m1))
    mse_nz = np.sum(wts * (beta_nodes[:, None] - gm.m1) ** 2)

    chi_new = ((1 - rho0) * chi_zero + rho0 * chi_nz) / A
    w_new = (1 - rho0) * w_zero + rho0 * w_nz
    mse_new = (1 - rho0) * mse_zero + rho0 * mse_nz
    return make_state(chi_new, w_new, mse_new, params, t=state.t + 1)


def se_run(initial: SeState, params: SeParams, T: int) -> list[SeState]:
    """T steps from `initial`; returns the trajectory including it."""
    if T < 1:
        raise ValueError("T must be >= 1")
    traj = [initial]
    state = initial
    for _ in range(T):
        state = se_step(state, params)
        traj.append(state)
    return traj


def se_fixed_point(params: SeParams, tol: float = 1e-12,
                   max_iters: int = 5000,
                   initial: SeState | None = None) -> tuple[SeState, bool]:
    """Iterate to a fixed point; returns (state, converged)."""
    state = initial if initial is not None else initial_state(params)
    for _ in range(max_iters):
        new = se_step(state, params)
        delta = max(abs(new.chi_tilde - state.chi_tilde),
                    abs(new.w_tilde - state.w_tilde),
                    abs(new.mse - state.mse))
        state = new
        if delta <= tol:
            return state, True
    return state, False
