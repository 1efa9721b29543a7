"""Numeric foundations shared by both mixture engines.

Datasets are immutable N x d point batches (d = 2 or 3). Gaussian classes
carry a center and an SPD covariance, validated through a pivoted Cholesky
factorization. Amplitude columns are per-point Gaussian amplitudes rescaled
to unit Euclidean norm over the dataset; all amplitude math runs in the log
domain so widely separated clusters do not underflow the normalization.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateAmplitudes, LengthMismatch, NotPositiveDefinite

_PIVOT_REL_FLOOR = 1e-12
_COV_SYM_RTOL = 1e-12


def cholesky_factor(cov: np.ndarray) -> np.ndarray:
    """Lower-triangular factor L with L @ L.T reproducing ``cov``.

    Parameters
    ----------
    cov : (d, d) array
        Symmetric matrix to factor.

    Returns
    -------
    (d, d) ndarray
        Lower-triangular L. The determinant of ``cov`` is
        ``np.prod(np.diag(L)) ** 2``.

    Raises
    ------
    NotPositiveDefinite
        If any pivot falls at or below ``1e-12 * trace(cov) / d``.
    """
    a = np.asarray(cov, dtype=float)
    d = a.shape[0]
    floor = max(_PIVOT_REL_FLOOR * np.trace(a) / d, 0.0)
    L = np.zeros_like(a)
    for j in range(d):
        pivot = a[j, j] - L[j, :j] @ L[j, :j]
        if not pivot > floor:
            raise NotPositiveDefinite(
                f"pivot {pivot:.3e} at column {j} is <= {floor:.3e}"
            )
        L[j, j] = np.sqrt(pivot)
        for i in range(j + 1, d):
            L[i, j] = (a[i, j] - L[i, :j] @ L[j, :j]) / L[j, j]
    return L


def condition_covariance(cov: np.ndarray) -> np.ndarray:
    """Symmetrize ``cov`` and lift it onto the SPD cone if it fell off.

    Adds ``eps * trace/d * I`` with eps starting at 1e-9 (escalating by
    decades up to 1e-3) only when the plain Cholesky fails, so collapsed
    responsibility updates do not abort a whole trial.
    """
    c = 0.5 * (np.asarray(cov, dtype=float) + np.asarray(cov, dtype=float).T)
    try:
        cholesky_factor(c)
        return c
    except NotPositiveDefinite:
        pass
    d = c.shape[0]
    tr = np.trace(c)
    if not tr > 0.0:
        raise NotPositiveDefinite("covariance trace is not positive")
    eps = 1e-9
    while eps <= 1e-3:
        lifted = c + (eps * tr / d) * np.eye(d)
        try:
            cholesky_factor(lifted)
            return lifted
        except NotPositiveDefinite:
            eps *= 10.0
    raise NotPositiveDefinite("covariance could not be conditioned")


@dataclass(frozen=True)
class Dataset:
    """Immutable batch of N >= 2 finite points in 2 or 3 dimensions."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2:
            raise ValueError("points must be an N x d matrix")
        n, d = pts.shape
        if n < 2:
            raise ValueError(f"need at least 2 points, got {n}")
        if d not in (2, 3):
            raise ValueError(f"dimensionality must be 2 or 3, got {d}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points contain NaN or Inf")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]


_CSV_HEADERS = {2: ["x", "y"], 3: ["x", "y", "z"]}


def write_dataset_csv(path, data: Dataset, labels=None) -> None:
    """Write points as CSV (header ``x,y`` or ``x,y,z``), UTF-8.

    When ``labels`` is given, an integer ``label`` column is appended.
    """
    header = list(_CSV_HEADERS[data.d])
    if labels is not None:
        labels = np.asarray(labels, dtype=int)
        if labels.shape[0] != data.n:
            raise ValueError("labels length does not match point count")
        header.append("label")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(data.n):
            row = [format(v, ".9g") for v in data.points[i]]
            if labels is not None:
                row.append(str(int(labels[i])))
            writer.writerow(row)


def read_dataset_csv(path):
    """Read a dataset CSV; returns ``(Dataset, labels or None)``."""
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [h.strip().lower() for h in header]
        if header[:2] != ["x", "y"]:
            raise ValueError(f"{path}: header must start with x,y")
        has_z = len(header) > 2 and header[2] == "z"
        d = 3 if has_z else 2
        has_label = len(header) > d and header[d] == "label"
        pts, labels = [], []
        for row in reader:
            if not row:
                continue
            pts.append([float(v) for v in row[:d]])
            if has_label:
                labels.append(int(row[d]))
    data = Dataset(np.array(pts, dtype=float))
    return data, (np.array(labels, dtype=int) if has_label else None)


@dataclass(frozen=True)
class GaussianClass:
    """One Gaussian component: center ``mu`` and SPD covariance ``cov``."""

    mu: np.ndarray
    cov: np.ndarray
    chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float).reshape(-1)
        cov = np.array(self.cov, dtype=float)
        d = mu.shape[0]
        if cov.shape != (d, d):
            raise ValueError(f"cov shape {cov.shape} does not match d={d}")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(cov))):
            raise ValueError("mu/cov contain NaN or Inf")
        scale = max(np.abs(cov).max(), np.finfo(float).tiny)
        if np.abs(cov - cov.T).max() > _COV_SYM_RTOL * scale:
            raise ValueError("cov is not symmetric to 1e-12 relative tolerance")
        cov = 0.5 * (cov + cov.T)
        L = cholesky_factor(cov)
        for arr in (mu, cov, L):
            arr.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "chol", L)

    @property
    def d(self) -> int:
        return self.mu.shape[0]

    @property
    def log_det_cov(self) -> float:
        return float(2.0 * np.sum(np.log(np.diag(self.chol))))


def quad_forms(points: np.ndarray, cls: GaussianClass) -> np.ndarray:
    """Quadratic forms (p - mu)^T cov^{-1} (p - mu) for each row of ``points``."""
    diffs = np.atleast_2d(np.asarray(points, dtype=float)) - cls.mu
    # y = L^{-1} (p - mu); quad form is |y|^2
    y = np.linalg.solve(cls.chol, diffs.T)
    return np.einsum("ij,ij->j", y, y)


def quad_form(p: np.ndarray, cls: GaussianClass) -> float:
    """Single-point quadratic form (p - mu)^T cov^{-1} (p - mu)."""
    return float(quad_forms(np.asarray(p, dtype=float)[None, :], cls)[0])


def log_densities(points: np.ndarray, cls: GaussianClass) -> np.ndarray:
    """Log of the normalized Gaussian pdf at each row of ``points``."""
    q = quad_forms(points, cls)
    return -0.5 * q - 0.5 * cls.d * np.log(2.0 * np.pi) - 0.5 * cls.log_det_cov


def classical_density(p: np.ndarray, cls: GaussianClass) -> float:
    """Normalized Gaussian pdf at ``p``: exp(-q/2) / ((2 pi)^{d/2} |cov|^{1/2})."""
    return float(np.exp(log_densities(np.asarray(p, dtype=float)[None, :], cls)[0]))


@dataclass(frozen=True)
class AmplitudeColumn:
    """Unit-norm vector of nonnegative per-point amplitudes for one class."""

    values: np.ndarray
    norm_raw: float

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(vals)):
            raise ValueError("amplitudes contain NaN or Inf")
        if np.any(vals < 0.0):
            raise ValueError("amplitudes must be nonnegative")
        sq = float(vals @ vals)
        if abs(sq - 1.0) > 1e-10:
            raise ValueError(f"column norm^2 = {sq!r}, expected 1 within 1e-10")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return self.values.shape[0]


def amplitude_logs(data: Dataset, cls: GaussianClass) -> np.ndarray:
    """Log raw amplitudes log g_i = -q_i / 4 (shared by both engines)."""
    return -0.25 * quad_forms(data.points, cls)


def amplitude_column(data: Dataset, cls: GaussianClass) -> AmplitudeColumn:
    """Per-point amplitudes G_i = g_i / sqrt(sum_j g_j^2), g_i = exp(-q_i/4).

    Normalization happens in the log domain (max-log subtraction), so the
    result is invariant to any common rescaling of the raw amplitudes and
    survives quadratic forms in the hundreds.

    Raises
    ------
    DegenerateAmplitudes
        If every raw amplitude underflows to zero in double precision.
    """
    log_g = amplitude_logs(data, cls)
    m = float(log_g.max())
    if np.exp(m) == 0.0:
        raise DegenerateAmplitudes(
            "all raw amplitudes underflow; class center is too far from the data"
        )
    w = np.exp(log_g - m)
    sq = float(w @ w)
    values = w / np.sqrt(sq)
    norm_raw = float(np.exp(m) * np.sqrt(sq))
    return AmplitudeColumn(values=values, norm_raw=norm_raw)


def overlap(col1: AmplitudeColumn, col2: AmplitudeColumn) -> float:
    """Inner product of two unit amplitude columns, clipped into [0, 1]."""
    if col1.n != col2.n:
        raise LengthMismatch(f"column lengths differ: {col1.n} vs {col2.n}")
    return float(np.clip(col1.values @ col2.values, 0.0, 1.0))
