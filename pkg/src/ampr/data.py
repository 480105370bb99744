"""Dataset construction: synthetic designs, CSV ingestion, preprocessing.

Synthetic generators produce the standard sparse-regression ensemble
(i.i.d. Gaussian design, Gauss-Bernoulli signal, additive Gaussian noise)
and a correlated variant where every column shares a common component
through componentwise Bernoulli masks. Real data enter through a numeric
CSV loader; `standardize` centers and unit-normalizes columns (recording
the back-mapping), and `augment_noise` appends pure-noise columns for
null-calibration analyses.

All randomness flows through numpy Generators seeded explicitly; nothing
touches global RNG state, and every generator is bit-reproducible given
its spec.
"""

from __future__ import annotations

import hashlib
import os
import urllib.request
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

__all__ = [
    "SyntheticSpec", "Truth", "ColumnScaling", "Dataset", "OverlapEstimate",
    "gen_iid", "gen_correlated", "mean_overlap", "load_csv", "augment_noise",
    "standardize", "fetch_wine", "load_wine", "WINE_URL",
]


@dataclass(frozen=True)
class SyntheticSpec:
    """Ensemble parameters for one synthetic regression instance.

    N : number of covariates; M = round(alpha * N) rows.
    rho0 : sparsity of the signal; K0 = round(rho0 * N) nonzeros whose
        values are i.i.d. N(0, 1/rho0), so the signal power ||beta0||^2/N
        is one on average.
    sigma2 : additive noise variance on the response.
    r_com : per-entry probability of replacing a column entry by the
        shared common component (0 gives the i.i.d. design).
    """

    N: int
    alpha: float
    rho0: float
    sigma2: float = 0.0
    r_com: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.M < 1:
            raise ValueError(
                f"round(alpha*N) must be >= 1, got {self.M}")
        if not (0 < self.rho0 <= 1):
            raise ValueError(f"rho0 must lie in (0, 1], got {self.rho0}")
        if not (np.isfinite(self.sigma2) and self.sigma2 >= 0):
            raise ValueError(f"sigma2 must be >= 0, got {self.sigma2}")
        if not (0 <= self.r_com < 1):
            raise ValueError(f"r_com must lie in [0, 1), got {self.r_com}")

    @property
    def M(self) -> int:
        return int(round(self.alpha * self.N))

    @property
    def K0(self) -> int:
        return int(round(self.rho0 * self.N))


@dataclass(frozen=True)
class Truth:
    """Generating signal: coefficient vector and its support."""

    beta0: np.ndarray
    support: np.ndarray


@dataclass(frozen=True)
class ColumnScaling:
    """Back-mapping data recorded by `standardize`.

    Standardized fits live on columns (x - x_mean)/x_norm against y -
    y_mean; `original_coefficients` undoes both shifts.
    """

    x_mean: np.ndarray
    x_norm: np.ndarray
    y_mean: float

    def original_coefficients(self, beta_std: np.ndarray):
        """Map standardized-model coefficients to (beta, intercept) on the
        raw scale, so y ~ X beta + intercept."""
        beta_std = np.asarray(beta_std, dtype=float)
        beta = beta_std / self.x_norm
        return beta, float(self.y_mean - self.x_mean @ beta)


@dataclass(frozen=True)
class Dataset:
    """An immutable regression table: design X (M x N) and response y.

    truth carries the generating signal when known; noise_mask marks
    columns injected by `augment_noise`; scaling records the standardize
    back-mapping once applied. Treat arrays as read-only shared state.
    """

    X: np.ndarray
    y: np.ndarray
    truth: Truth | None = None
    column_labels: tuple[str, ...] = ()
    noise_mask: np.ndarray = field(default_factory=lambda: np.zeros(0, bool))
    scaling: ColumnScaling | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 2:
            raise ValueError(f"X must be 2-d, got shape {X.shape}")
        M, N = X.shape
        if y.shape != (M,):
            raise ValueError(f"y has shape {y.shape}, expected ({M},)")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        labels = (tuple(self.column_labels) if self.column_labels
                  else tuple(f"x{i + 1}" for i in range(N)))
        if len(labels) != N:
            raise ValueError(f"{len(labels)} labels for {N} columns")
        object.__setattr__(self, "column_labels", labels)
        mask = (np.asarray(self.noise_mask, dtype=bool)
                if np.size(self.noise_mask) else np.zeros(N, dtype=bool))
        if mask.shape != (N,):
            raise ValueError(f"noise_mask has shape {mask.shape}, "
                             f"expected ({N},)")
        object.__setattr__(self, "noise_mask", mask)
        if self.truth is not None and self.truth.beta0.shape != (N,):
            raise ValueError("truth.beta0 length does not match X")

    @property
    def M(self) -> int:
        return self.X.shape[0]

    @property
    def N(self) -> int:
        return self.X.shape[1]


def _signal(rng: np.random.Generator, spec: SyntheticSpec) -> Truth:
    beta0 = np.zeros(spec.N)
    support = np.sort(rng.choice(spec.N, size=spec.K0, replace=False))
    beta0[support] = rng.normal(0.0, 1.0 / np.sqrt(spec.rho0), size=spec.K0)
    return Truth(beta0=beta0, support=support)


def _response(rng, X, truth, spec):
    noise = rng.normal(0.0, np.sqrt(spec.sigma2), size=spec.M)
    return X @ truth.beta0 + noise


def gen_iid(spec: SyntheticSpec) -> Dataset:
    """Independent design: X entries i.i.d. N(0, 1/N), sparse signal,
    y = X beta0 + noise."""
    if spec.r_com != 0:
        raise ValueError("gen_iid requires r_com = 0; use gen_correlated")
    rng = np.random.default_rng(spec.seed)
    X = rng.normal(0.0, 1.0 / np.sqrt(spec.N), size=(spec.M, spec.N))
    truth = _signal(rng, spec)
    return Dataset(X=X, y=_response(rng, X, truth, spec), truth=truth)


def gen_correlated(spec: SyntheticSpec) -> Dataset:
    """Correlated design: each column swaps a Bernoulli(r_com) subset of
    its entries for a single shared N(0, 1/N) vector.

    Two columns then share, on average, a fraction r_com^2 of their
    entries, so the mean overlap grows like r_com^2 (about 0.36 at 0.6).
    """
    rng = np.random.default_rng(spec.seed)
    x_com = rng.normal(0.0, 1.0 / np.sqrt(spec.N), size=spec.M)
    private = rng.normal(0.0, 1.0 / np.sqrt(spec.N), size=(spec.M, spec.N))
    mask = rng.random(size=(spec.M, spec.N)) < spec.r_com
    X = np.where(mask, x_com[:, None], private)
    truth = _signal(rng, spec)
    return Dataset(X=X, y=_response(rng, X, truth, spec), truth=truth)


@dataclass(frozen=True)
class OverlapEstimate:
    """Mean cosine similarity over column pairs; exact=False marks an
    unbiased random-pair estimate (n_pairs sampled pairs)."""

    value: float
    exact: bool
    n_pairs: int


def mean_overlap(X, max_exact_n: int = 3000, n_pairs: int = 200_000,
                 seed: int = 0) -> OverlapEstimate:
    """Average cosine similarity x_i . x_j / (|x_i||x_j|) over pairs i != j.

    Exact (all N(N-1) ordered pairs, reported as such) up to max_exact_n
    columns; beyond that an unbiased sample of n_pairs random pairs.
    """
    X = np.asarray(X, dtype=float)
    norms = np.linalg.norm(X, axis=0)
    if np.any(norms == 0):
        bad = int(np.argmax(norms == 0))
        raise ValueError(f"column {bad} has zero norm")
    Xn = X / norms
    N = X.shape[1]
    if N < 2:
        raise ValueError("mean overlap needs at least two columns")
    if N <= max_exact_n:
        G = Xn.T @ Xn
        value = (G.sum() - np.trace(G)) / (N * (N - 1))
        return OverlapEstimate(float(value), exact=True,
                               n_pairs=N * (N - 1))
    rng = np.random.default_rng(seed)
    i = rng.integers(0, N, size=n_pairs)
    j = rng.integers(0, N - 1, size=n_pairs)
    j = np.where(j >= i, j + 1, j)  # uniform over ordered pairs i != j
    value = float(np.mean(np.einsum("mk,mk->k", Xn[:, i], Xn[:, j])))
    return OverlapEstimate(value, exact=False, n_pairs=n_pairs)


def load_csv(path, response_column: str) -> Dataset:
    """Read a numeric CSV table (comma- or semicolon-delimited, header
    row) into a Dataset; `response_column` becomes y, the rest X.

    No standardization is applied. Missing or non-numeric cells raise
    with their row and column location (rows numbered from 1, header
    excluded).
    """
    frame = pd.read_csv(path, sep=None, engine="python")
    if response_column not in frame.columns:
        raise ValueError(
            f"response column {response_column!r} not in header "
            f"{list(frame.columns)}")
    columns = {}
    for col in frame.columns:
        values = pd.to_numeric(frame[col], errors="coerce")
        bad = values.isna()
        if bad.any():
            row = int(bad.idxmax())
            cell = frame[col].iloc[row]
            what = ("missing value" if pd.isna(cell)
                    else f"non-numeric value {cell!r}")
            raise ValueError(f"{what} at row {row + 1}, column {col!r}")
        columns[col] = values.to_numpy(dtype=float)
    numeric = pd.DataFrame(columns)
    y = numeric.pop(response_column).to_numpy()
    return Dataset(X=numeric.to_numpy(), y=y,
                   column_labels=tuple(numeric.columns))


def augment_noise(dataset: Dataset, N_noise: int, seed: int = 0) -> Dataset:
    """Append N_noise pure-noise columns, i.i.d. N(0, 1/N_total) with
    N_total = N + N_noise, and mark them in noise_mask.

    The variance convention hardly matters in practice because columns
    are standardized to unit norm afterwards.
    """
    if N_noise < 0:
        raise ValueError(f"N_noise must be >= 0, got {N_noise}")
    if N_noise == 0:
        return dataset
    n_total = dataset.N + N_noise
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, 1.0 / np.sqrt(n_total),
                       size=(dataset.M, N_noise))
    labels = dataset.column_labels + tuple(
        f"noise{k + 1}" for k in range(N_noise))
    mask = np.concatenate([dataset.noise_mask, np.ones(N_noise, bool)])
    truth = dataset.truth
    if truth is not None:
        truth = Truth(beta0=np.concatenate([truth.beta0, np.zeros(N_noise)]),
                      support=truth.support)
    return Dataset(X=np.hstack([dataset.X, noise]), y=dataset.y,
                   truth=truth, column_labels=labels, noise_mask=mask,
                   scaling=dataset.scaling)


def standardize(dataset: Dataset) -> Dataset:
    """Center y, and center and unit-norm every column of X, recording
    the back-mapping in `scaling`. Idempotent; constant columns error."""
    means = dataset.X.mean(axis=0)
    centered = dataset.X - means
    norms = np.linalg.norm(centered, axis=0)
    if np.any(norms == 0):
        bad = dataset.column_labels[int(np.argmax(norms == 0))]
        raise ValueError(f"column {bad!r} is constant")
    y_mean = float(dataset.y.mean())
    scaling = ColumnScaling(x_mean=means, x_norm=norms, y_mean=y_mean)
    return replace(dataset, X=centered / norms, y=dataset.y - y_mean,
                   scaling=scaling)


WINE_URL = ("https://archive.ics.uci.edu/ml/machine-learning-databases/"
            "wine-quality/winequality-white.csv")


def _cache_dir() -> str:
    if "AMPR_DATA_DIR" in os.environ:
        return os.environ["AMPR_DATA_DIR"]
    base = os.environ.get("XDG_CACHE_HOME",
                          os.path.join(os.path.expanduser("~"), ".cache"))
    return os.path.join(base, "ampr")


def fetch_wine(cache_dir: str | None = None, timeout: float = 30.0) -> str:
    """Return a local path to the white wine-quality CSV, downloading on
    first use.

    Resolution order: the AMPR_WINE_CSV environment variable (a
    pre-downloaded copy), then the cache (AMPR_DATA_DIR or
    ~/.cache/ampr). A download records the file's sha256 next to it and
    later calls verify against that record; set AMPR_WINE_SHA256 to pin
    the expected digest up front.
    """
    override = os.environ.get("AMPR_WINE_CSV")
    if override:
        if not os.path.exists(override):
            raise FileNotFoundError(
                f"AMPR_WINE_CSV points to a missing file: {override}")
        return override
    cache = cache_dir or _cache_dir()
    os.makedirs(cache, exist_ok=True)
    path = os.path.join(cache, "winequality-white.csv")
    record = path + ".sha256"
    if not os.path.exists(path):
        with urllib.request.urlopen(WINE_URL, timeout=timeout) as response:
            payload = response.read()
        digest = hashlib.sha256(payload).hexdigest()
        pinned = os.environ.get("AMPR_WINE_SHA256")
        if pinned and digest != pinned:
            raise RuntimeError(
                f"wine CSV digest {digest} does not match pinned {pinned}")
        with open(path, "wb") as fh:
            fh.write(payload)
        with open(record, "w") as fh:
            fh.write(digest + "\n")
    if os.path.exists(record):
        with open(path, "rb") as fh:
            digest = hashlib.sha256(fh.read()).hexdigest()
        with open(record) as fh:
            expected = fh.read().strip()
        if digest != expected:
            raise RuntimeError(
                f"cached wine CSV digest {digest} does not match the "
                f"recorded {expected}; delete {path} to re-download")
    return path


def load_wine(cache_dir: str | None = None) -> Dataset:
    """Fetch (if needed) and load the white wine-quality table with
    'quality' as the response."""
    return load_csv(fetch_wine(cache_dir), response_column="quality")
