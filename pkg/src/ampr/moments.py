"""Scalar kernels shared by the solver, state evolution, and the harness.

Four ingredients: Poisson-weighted resampling averages [g(c)]_c, the soft
thresholding function, Gaussian moments of the soft-thresholded variable
S_lam(B + sqrt(C) z; A) with z standard normal, and the two-atom penalty
mixture used for randomized penalization.

All functions are pure and accept scalars or numpy arrays (broadcasting),
so they are safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats
from scipy.special import erfc

_SQRT2 = np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _norm_sf(x):
    """Standard normal survival function via erfc, accurate in the tails."""
    return 0.5 * erfc(x / _SQRT2)


def _norm_pdf(x):
    return _INV_SQRT2PI * np.exp(-0.5 * x * x)


@dataclass(frozen=True)
class PoissonAverages:
    """Values of [c/(1+c*chi)]_c and [(c/(1+c*chi))^2]_c, c ~ Poisson(tau)."""

    f1: np.ndarray | float
    f2: np.ndarray | float


def poisson_averages(chi, tau: float, tail_tol: float = 1e-14) -> PoissonAverages:
    """Poisson averages f1 = [c/(1+c*chi)]_c and f2 = [(c/(1+c*chi))^2]_c.

    The sum is truncated at the smallest c_max whose cumulative Poisson mass
    reaches 1 - tail_tol, so the omitted tail is below tail_tol.

    Parameters
    ----------
    chi : float or ndarray
        Nonnegative susceptibility value(s).
    tau : float
        Poisson mean (subsample ratio m/M), positive.
    tail_tol : float
        Omitted tail mass bound, in (0, 1).

    Returns
    -------
    PoissonAverages
        f1 and f2 with the shape of `chi`.
    """
    chi_arr = np.asarray(chi, dtype=float)
    if not np.isfinite(tau) or tau <= 0:
        raise ValueError(f"tau must be positive and finite, got {tau}")
    if not (0 < tail_tol < 1):
        raise ValueError(f"tail_tol must lie in (0, 1), got {tail_tol}")
    if not np.all(np.isfinite(chi_arr)) or np.any(chi_arr < 0):
        raise ValueError("chi must be nonnegative and finite")

    # Quantile cutoff plus guard terms: f2's c^2 growth needs a few terms
    # beyond the plain tail-mass rule to stay at machine precision.
    c_max = int(stats.poisson.ppf(1.0 - tail_tol, tau)) + 4
    cs = np.arange(c_max + 1, dtype=float)
    weights = stats.poisson.pmf(cs, tau)

    # ratio[..., c] = c / (1 + c*chi); c=0 term vanishes for both moments.
    ratio = cs / (1.0 + chi_arr[..., None] * cs)
    f1 = ratio @ weights
    f2 = (ratio * ratio) @ weights
    if chi_arr.ndim == 0:
        return PoissonAverages(float(f1), float(f2))
    return PoissonAverages(f1, f2)


def soft_threshold(x, lam, A=1.0):
    """Soft thresholding S_lam(x; A) = (x - lam*sign(x)) * 1{|x| > lam} / A.

    Exact zero inside the dead zone, including on its boundary.
    """
    lam_arr = np.asarray(lam, dtype=float)
    A_arr = np.asarray(A, dtype=float)
    if np.any(lam_arr < 0):
        raise ValueError("lam must be nonnegative")
    if np.any(A_arr <= 0):
        raise ValueError("A must be positive")
    x_arr = np.asarray(x, dtype=float)
    out = np.where(np.abs(x_arr) > lam_arr,
                   (x_arr - lam_arr * np.sign(x_arr)) / A_arr, 0.0)
    if x_arr.ndim == 0 and lam_arr.ndim == 0 and A_arr.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class GaussSoftMoments:
    """Moments of S_lam(B + sqrt(C) z; A) under z ~ N(0, 1).

    mass = E[1{|B + sqrt(C) z| > lam}]   (selection probability)
    m1   = E[S_lam(B + sqrt(C) z; A)]
    m2   = E[S_lam(B + sqrt(C) z; A)^2]
    """

    mass: np.ndarray | float
    m1: np.ndarray | float
    m2: np.ndarray | float


def gauss_soft_moments(B, C, lam, A) -> GaussSoftMoments:
    """Closed-form Gaussian moments of the soft-thresholded variable.

    With sigma = sqrt(C), u+ = (lam - B)/sigma, u- = (lam + B)/sigma, sf the
    standard normal survival function and phi the pdf:

        mass   = sf(u+) + sf(u-)
        m1 * A = (B-lam) sf(u+) + sigma phi(u+) + (B+lam) sf(u-) - sigma phi(u-)
        m2 * A^2 = ((B-lam)^2 + C) sf(u+) + sigma (B-lam) phi(u+)
                 + ((B+lam)^2 + C) sf(u-) - sigma (B+lam) phi(u-)

    C = 0 degenerates to the point mass at B. Negative C is a domain error;
    callers must clamp small negatives before calling.
    """
    B_arr, C_arr, lam_arr, A_arr = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (B, C, lam, A)))
    if np.any(C_arr < 0):
        raise ValueError("C must be nonnegative (clamp tiny negatives first)")
    if np.any(A_arr <= 0):
        raise ValueError("A must be positive")
    if np.any(lam_arr < 0):
        raise ValueError("lam must be nonnegative")

    scalar = B_arr.ndim == 0
    B_arr, C_arr, lam_arr, A_arr = (np.atleast_1d(v)
                                    for v in (B_arr, C_arr, lam_arr, A_arr))

    degenerate = C_arr == 0.0
    sigma = np.sqrt(np.where(degenerate, 1.0, C_arr))  # placeholder where C=0
    up = (lam_arr - B_arr) / sigma
    um = (lam_arr + B_arr) / sigma
    sf_p, sf_m = _norm_sf(up), _norm_sf(um)
    pdf_p, pdf_m = _norm_pdf(up), _norm_pdf(um)

    mass = sf_p + sf_m
    m1 = ((B_arr - lam_arr) * sf_p + sigma * pdf_p
          + (B_arr + lam_arr) * sf_m - sigma * pdf_m) / A_arr
    m2 = (((B_arr - lam_arr) ** 2 + C_arr) * sf_p
          + sigma * (B_arr - lam_arr) * pdf_p
          + ((B_arr + lam_arr) ** 2 + C_arr) * sf_m
          - sigma * (B_arr + lam_arr) * pdf_m) / (A_arr * A_arr)

    if np.any(degenerate):
        m1_pt = np.where(np.abs(B_arr) > lam_arr,
                         (B_arr - lam_arr * np.sign(B_arr)) / A_arr, 0.0)
        mass = np.where(degenerate, (np.abs(B_arr) > lam_arr).astype(float), mass)
        m1 = np.where(degenerate, m1_pt, m1)
        m2 = np.where(degenerate, m1_pt * m1_pt, m2)

    if scalar:
        return GaussSoftMoments(float(mass[0]), float(m1[0]), float(m2[0]))
    return GaussSoftMoments(mass, m1, m2)


@dataclass(frozen=True)
class PenaltyMixture:
    """Two-atom penalty distribution: lam/w with probability p_w, else lam.

    w = 1 collapses the mixture to a point mass at lam for every p_w.
    """

    lam: float
    w: float = 1.0
    p_w: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise ValueError(f"lam must be positive and finite, got {self.lam}")
        if not (0 < self.w <= 1):
            raise ValueError(f"w must lie in (0, 1], got {self.w}")
        if not (0 <= self.p_w <= 1):
            raise ValueError(f"p_w must lie in [0, 1], got {self.p_w}")

    @property
    def atoms(self) -> tuple[tuple[float, float], ...]:
        """(value, weight) pairs of the mixture."""
        return ((self.lam / self.w, self.p_w), (self.lam, 1.0 - self.p_w))

    def with_lam(self, lam: float) -> "PenaltyMixture":
        return PenaltyMixture(lam=lam, w=self.w, p_w=self.p_w)


def penalty_average(mix: PenaltyMixture, g: Callable[[float], object]):
    """Average of g over the penalty mixture: p_w g(lam/w) + (1-p_w) g(lam).

    Coincident atoms (w = 1, or p_w in {0, 1}) short-circuit to a single
    evaluation, so the degenerate mixture is exact in floating point.
    """
    if mix.w == 1.0 or mix.p_w == 0.0:
        return g(mix.lam)
    if mix.p_w == 1.0:
        return g(mix.lam / mix.w)
    return mix.p_w * g(mix.lam / mix.w) + (1.0 - mix.p_w) * g(mix.lam)


def mixture_soft_moments(B, C, A, mix: PenaltyMixture) -> GaussSoftMoments:
    """Penalty-averaged soft-threshold moments.

    Same short-circuiting as penalty_average, but evaluates all three
    moments per atom in one pass (the solver's hot path)."""
    if mix.w == 1.0 or mix.p_w == 0.0:
        return gauss_soft_moments(B, C, mix.lam, A)
    if mix.p_w == 1.0:
        return gauss_soft_moments(B, C, mix.lam / mix.w, A)
    hi = gauss_soft_moments(B, C, mix.lam / mix.w, A)
    lo = gauss_soft_moments(B, C, mix.lam, A)
    p = mix.p_w
    return GaussSoftMoments(mass=p * hi.mass + (1 - p) * lo.mass,
                            m1=p * hi.m1 + (1 - p) * lo.m1,
                            m2=p * hi.m2 + (1 - p) * lo.m2)
