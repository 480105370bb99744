"""Weighted Lasso with per-coordinate penalties, by coordinate descent.

Solves

    min_beta  1/2 sum_mu c_mu (y_mu - x_mu . beta)^2 + sum_i lam_i |beta_i|

which is the inner problem of direct numerical resampling: c_mu counts how
often sample mu occurs in a resample, lam_i is the (possibly randomized)
penalty on coordinate i. Rows with c_mu = 0 are dropped and the remaining
rows scaled by sqrt(c_mu), which turns the problem into an unweighted Lasso
without changing the argmin.

The inner loop is numba-compiled and releases the GIL, so independent fits
run concurrently from a thread pool.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from numba import njit


@dataclass
class WeightedLassoProblem:
    """One resampled Lasso instance.

    X : (M, N) design, y : (M,) response, c : (M,) nonnegative resample
    counts (real weights allowed), lam_vec : (N,) positive penalties.
    """

    X: np.ndarray
    y: np.ndarray
    c: np.ndarray
    lam_vec: np.ndarray

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        self.lam_vec = np.asarray(self.lam_vec, dtype=float)
        M, N = self.X.shape
        if self.y.shape != (M,):
            raise ValueError(f"y has shape {self.y.shape}, expected ({M},)")
        if self.c.shape != (M,):
            raise ValueError(f"c has shape {self.c.shape}, expected ({M},)")
        if self.lam_vec.shape != (N,):
            raise ValueError(
                f"lam_vec has shape {self.lam_vec.shape}, expected ({N},)")
        if np.any(self.c < 0):
            raise ValueError("resample counts must be nonnegative")
        if not np.any(self.c > 0):
            raise ValueError("at least one sample must have positive weight")
        if np.any(self.lam_vec <= 0):
            raise ValueError("penalties must be positive")


@dataclass
class LassoSolution:
    """Coordinate-descent output; beta has exact zeros off the active set."""

    beta: np.ndarray
    iters: int
    kkt_violation: float
    converged: bool = True
    stuck: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))


@njit(cache=True, nogil=True, fastmath=True)
def _cd_kernel(Xs, ys, lam, beta, d, tol, max_sweeps):
    """Cyclic coordinate descent on the sqrt(c)-scaled problem.

    Full passes alternate with active-set passes (coordinates currently
    nonzero) until a full pass moves no coordinate by more than tol.
    Returns (sweeps_used, converged). beta is updated in place.
    fastmath lets the dot products vectorize; the kernel stays
    deterministic for a given build, which is what reproducibility of the
    resampling averages relies on.
    """
    M, N = Xs.shape
    r = ys.copy()
    for i in range(N):
        b = beta[i]
        if b != 0.0:
            for m in range(M):
                r[m] -= Xs[m, i] * b

    sweeps = 0
    converged = False
    active = np.zeros(N, dtype=np.bool_)
    while sweeps < max_sweeps:
        # Full pass over all coordinates.
        delta = 0.0
        for i in range(N):
            di = d[i]
            if di == 0.0:
                continue
            rho = di * beta[i]
            for m in range(M):
                rho += Xs[m, i] * r[m]
            li = lam[i]
            if rho > li:
                bnew = (rho - li) / di
            elif rho < -li:
                bnew = (rho + li) / di
            else:
                bnew = 0.0
            diff = bnew - beta[i]
            if diff != 0.0:
                for m in range(M):
                    r[m] -= Xs[m, i] * diff
                beta[i] = bnew
                if abs(diff) > delta:
                    delta = abs(diff)
        sweeps += 1
        if delta <= tol:
            converged = True
            break
        for i in range(N):
            active[i] = beta[i] != 0.0
        # Active-set passes until stable, then re-verify with a full pass.
        while sweeps < max_sweeps:
            delta_a = 0.0
            for i in range(N):
                if not active[i]:
                    continue
                di = d[i]
                rho = di * beta[i]
                for m in range(M):
                    rho += Xs[m, i] * r[m]
                li = lam[i]
                if rho > li:
                    bnew = (rho - li) / di
                elif rho < -li:
                    bnew = (rho + li) / di
                else:
                    bnew = 0.0
                diff = bnew - beta[i]
                if diff != 0.0:
                    for m in range(M):
                        r[m] -= Xs[m, i] * diff
                    beta[i] = bnew
                    if abs(diff) > delta_a:
                        delta_a = abs(diff)
            sweeps += 1
            if delta_a <= tol:
                break
    return sweeps, converged


def _scaled_design(problem: WeightedLassoProblem):
    """Drop zero-weight rows and fold sqrt(c) into the design and response."""
    keep = problem.c > 0
    sq = np.sqrt(problem.c[keep])
    Xs = np.asfortranarray(problem.X[keep] * sq[:, None])
    ys = problem.y[keep] * sq
    return Xs, ys


def _stationarity_solve(G, rhs):
    """Solve G x = rhs with one step of iterative refinement; fall back to
    a least-squares solution when the Gram matrix is singular."""
    try:
        factor = scipy.linalg.cho_factor(G, check_finite=False)
        x = scipy.linalg.cho_solve(factor, rhs, check_finite=False)
        x += scipy.linalg.cho_solve(factor, rhs - G @ x, check_finite=False)
        return x
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(G, rhs, rcond=None)[0]


def _polish(Xs, ys, lam, beta, dual_slack, max_solves=120, grow_cap=50,
            bail=40):
    """Active-set finishing on the sqrt(c)-scaled problem.

    Starting from the support of `beta`, alternate between solving the
    stationarity system exactly on the working set (walking toward the
    solution with a ratio test that drops coordinates whose sign would
    flip) and growing the set by the worst dual-feasibility violators.
    Returns the candidate solution once no off-support violation exceeds
    dual_slack, or None if the working set does not settle within the
    solve budget. A grossly wrong starting set (more than `bail` sign
    crossings or dual violations on the first round) gives up immediately
    so the caller can keep descending instead. The caller re-verifies the
    full KKT residual.
    """
    N = Xs.shape[1]
    Xty = Xs.T @ ys
    support = np.flatnonzero(beta)
    signs = np.sign(beta[support])
    cur = beta[support].copy()
    solves = 0
    first_round = True
    while solves < max_solves:
        while support.size and solves < max_solves:
            Xa = Xs[:, support]
            G = Xa.T @ Xa
            target = _stationarity_solve(G, Xty[support]
                                         - lam[support] * signs)
            solves += 1
            crossed = target * signs <= 0.0
            if not crossed.any():
                cur = target
                break
            n_crossed = int(crossed.sum())
            if first_round and n_crossed > bail:
                return None
            if n_crossed > 8:
                # the working set is badly wrong: prune aggressively
                keep = ~crossed
            else:
                # walk toward the solve until the first sign crossing
                denom = cur - target
                with np.errstate(divide="ignore", invalid="ignore"):
                    theta = np.where(crossed & (denom != 0.0),
                                     cur / denom, np.inf)
                theta = np.where(theta >= 0.0, theta, np.inf)
                t = min(float(theta.min()), 1.0)
                cur = cur + t * (target - cur)
                keep = theta > t + 1e-15
            support, signs, cur = support[keep], signs[keep], cur[keep]
        else:
            if solves >= max_solves:
                break
        b = np.zeros(N)
        b[support] = cur
        grad = Xs.T @ (Xs @ b - ys)
        viol = np.abs(grad) - lam
        viol[support] = -np.inf
        worst = float(viol.max())
        if worst <= dual_slack:
            return b
        n_viol = int(np.count_nonzero(viol > dual_slack))
        if first_round and n_viol > bail:
            return None
        first_round = False
        # Never grow past the row count: the optimum has at most that many
        # nonzeros, and a rank-deficient working set only thrashes.
        room = min(grow_cap, max(Xs.shape[0] - support.size, 1))
        order = np.argsort(viol)[::-1][:room]
        add = order[viol[order] > dual_slack]
        support = np.concatenate([support, add])
        signs = np.concatenate([signs, -np.sign(grad[add])])
        cur = np.concatenate([cur, np.zeros(add.size)])
    return None


def fit(problem: WeightedLassoProblem, tol: float = 1e-10,
        max_iters: int = 100_000, warm_start: np.ndarray | None = None,
        polish: bool = False) -> LassoSolution:
    """Solve one weighted Lasso instance.

    Parameters
    ----------
    problem : WeightedLassoProblem
    tol : float
        Stop when no coordinate moves by more than tol in a full pass.
        The default is deliberately tight; resampling averages are biased
        by loose solves. With polish=True, tol also bounds the KKT
        residual of an accepted polished solution.
    max_iters : int
        Cap on coordinate-descent sweeps (full and active-set combined).
    warm_start : ndarray, optional
        Initial beta, e.g. the previous solution on a penalty path.
    polish : bool
        Run coarse coordinate descent only to locate the support, then
        solve the stationarity system on it exactly and grow/shrink the
        working set until the optimality conditions hold. Much faster for
        weakly penalized, near-interpolation problems where plain descent
        slows down critically; a polished solution is accepted only if
        its full KKT residual is <= tol, otherwise descent resumes.
    """
    M, N = problem.X.shape
    Xs, ys = _scaled_design(problem)
    beta = (np.zeros(N) if warm_start is None
            else np.array(warm_start, dtype=float, copy=True))
    if beta.shape != (N,):
        raise ValueError(f"warm_start has shape {beta.shape}, expected ({N},)")

    d = np.einsum("mi,mi->i", Xs, Xs)
    dead = d == 0.0
    beta[dead] = 0.0

    if polish:
        sweeps, converged = _fit_polished(problem, Xs, ys, beta, d,
                                          tol, max_iters)
    else:
        sweeps, converged = _cd_kernel(Xs, ys, problem.lam_vec, beta, d,
                                       tol, max_iters)
    kkt = kkt_residual(problem, beta)
    # A dead coordinate has identically zero gradient, so it can only be
    # "stuck" if the recorded penalty ever allowed motion; flag defensively.
    grad = -Xs.T @ (ys - Xs @ beta)
    stuck = dead & (np.abs(grad) > 0)
    return LassoSolution(beta=beta, iters=sweeps, kkt_violation=kkt,
                         converged=converged, stuck=stuck)


def _fit_polished(problem, Xs, ys, beta, d, tol, max_iters):
    """Descent in chunks with exact-finish attempts between them; beta is
    updated in place.

    Easy instances finish after the first chunk; near-degenerate ones keep
    descending until the working set is close enough for the finish to
    settle. Plain convergence of the descent itself still counts, so this
    path can never do worse than the direct one.
    """
    lam = problem.lam_vec
    used = 0
    chunk = 400
    while used < max_iters:
        budget = min(chunk, max_iters - used)
        sweeps, cd_converged = _cd_kernel(Xs, ys, lam, beta, d, tol, budget)
        used += sweeps
        candidate = _polish(Xs, ys, lam, beta, dual_slack=0.5 * tol)
        if (candidate is not None
                and kkt_residual(problem, candidate) <= tol):
            beta[:] = candidate
            return used, True
        if cd_converged:
            return used, True
        chunk = min(2 * chunk, 4000)
    return used, False


def kkt_residual(problem: WeightedLassoProblem, beta: np.ndarray) -> float:
    """Max violation of the subgradient optimality conditions.

    With g_i = -sum_mu c_mu x_mu_i (y - X beta)_mu, optimality requires
    |g_i| <= lam_i where beta_i = 0 and g_i = -lam_i sign(beta_i) elsewhere.
    """
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (problem.X.shape[1],):
        raise ValueError("beta length does not match problem")
    r = problem.y - problem.X @ beta
    g = -problem.X.T @ (problem.c * r)
    zero = beta == 0.0
    viol_zero = np.maximum(np.abs(g) - problem.lam_vec, 0.0)
    viol_nz = np.abs(g + problem.lam_vec * np.sign(beta))
    return float(np.max(np.where(zero, viol_zero, viol_nz)))


def fit_path(X: np.ndarray, y: np.ndarray, c: np.ndarray,
             lam_grid: np.ndarray, tol: float = 1e-10,
             max_iters: int = 100_000) -> list[LassoSolution]:
    """Warm-started solutions along a strictly decreasing penalty grid.

    Each grid point uses a uniform penalty vector lam * ones(N); the fit at
    one penalty seeds the next.
    """
    lam_grid = np.asarray(lam_grid, dtype=float)
    if lam_grid.ndim != 1 or lam_grid.size == 0:
        raise ValueError("lam_grid must be a nonempty 1-d array")
    if np.any(np.diff(lam_grid) >= 0):
        raise ValueError("lam_grid must be strictly decreasing")
    N = X.shape[1]
    sols = []
    beta = None
    for lam in lam_grid:
        problem = WeightedLassoProblem(X, y, c, np.full(N, lam))
        sol = fit(problem, tol=tol, max_iters=max_iters, warm_start=beta)
        sols.append(sol)
        beta = sol.beta
    return sols
