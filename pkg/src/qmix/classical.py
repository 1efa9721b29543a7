"""Baseline Gaussian mixture fitted with the standard EM iteration.

Serves as the comparison target for the interference mixture in every
experiment. All responsibilities are computed in the log domain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Dataset, GaussianClass, condition_covariance, log_densities
from .errors import AllZeroRow, EmptyClass

_PRIOR_TOL = 1e-12
_ROWSUM_TOL = 1e-10


@dataclass(frozen=True)
class ClassicalMixture:
    """K Gaussian classes plus prior weights on the simplex."""

    classes: tuple
    priors: np.ndarray

    def __post_init__(self):
        classes = tuple(self.classes)
        if len(classes) < 2:
            raise ValueError("a mixture needs K >= 2 classes")
        pri = np.array(self.priors, dtype=float).reshape(-1)
        if pri.shape[0] != len(classes):
            raise ValueError("priors length does not match class count")
        if np.any(pri < 0.0) or np.any(pri > 1.0):
            raise ValueError("priors must lie in [0, 1]")
        if abs(pri.sum() - 1.0) > _PRIOR_TOL:
            raise ValueError(f"priors sum to {pri.sum()!r}, expected 1")
        pri.setflags(write=False)
        object.__setattr__(self, "classes", classes)
        object.__setattr__(self, "priors", pri)

    @property
    def k(self) -> int:
        return len(self.classes)


@dataclass(frozen=True)
class Responsibilities:
    """N x K posterior class probabilities; rows sum to 1."""

    q: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        if q.ndim != 2:
            raise ValueError("responsibilities must be an N x K matrix")
        if not np.all(np.isfinite(q)):
            raise ValueError("responsibilities contain NaN or Inf")
        if np.any(q < 0.0) or np.any(q > 1.0):
            raise ValueError("responsibilities must lie in [0, 1]")
        rowsums = q.sum(axis=1)
        if np.abs(rowsums - 1.0).max() > _ROWSUM_TOL:
            raise ValueError("responsibility rows must sum to 1 within 1e-10")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    def counts(self) -> np.ndarray:
        """Estimated number of points per class (column sums)."""
        return self.q.sum(axis=0)


@dataclass
class FitReport:
    """Outcome of one EM run: final parameters plus per-iteration traces."""

    params_final: object
    objective_trace: np.ndarray
    responsibilities: Responsibilities
    n_per_class: np.ndarray
    iterations: int
    converged: bool
    trajectory: list = field(default_factory=list)
    counts_trace: np.ndarray | None = None


@dataclass(frozen=True)
class ConvergenceConfig:
    """Stopping rule: relative objective change below tol, or max_iter."""

    tol: float = 1e-8
    max_iter: int = 500


def _log_joint(data: Dataset, mix: ClassicalMixture) -> np.ndarray:
    """N x K matrix of log(prior_k) + log density_k(p_i)."""
    cols = [
        np.log(max(p, np.finfo(float).tiny)) + log_densities(data.points, cls)
        for p, cls in zip(mix.priors, mix.classes)
    ]
    return np.column_stack(cols)


def _logsumexp_rows(lj: np.ndarray) -> np.ndarray:
    m = lj.max(axis=1, keepdims=True)
    return (m + np.log(np.exp(lj - m).sum(axis=1, keepdims=True)))[:, 0]


def classical_e_step(data: Dataset, mix: ClassicalMixture) -> Responsibilities:
    """Posterior responsibilities Q_{i,k} proportional to prior_k * density_k."""
    lj = _log_joint(data, mix)
    if not np.all(np.isfinite(lj.max(axis=1))):
        raise AllZeroRow("a point has no finite density under any class")
    q = np.exp(lj - _logsumexp_rows(lj)[:, None])
    q /= q.sum(axis=1, keepdims=True)
    return Responsibilities(q=np.clip(q, 0.0, 1.0))


def classical_m_step(data: Dataset, resp: Responsibilities) -> ClassicalMixture:
    """Weighted-moment parameter update from the given responsibilities."""
    q = resp.q
    n, k = q.shape
    counts = q.sum(axis=0)
    if np.any(counts <= 1e-8):
        raise EmptyClass(f"class counts {counts} include an empty class")
    priors = counts / n
    priors = priors / priors.sum()
    classes = []
    for j in range(k):
        w = q[:, j]
        mu = (w @ data.points) / counts[j]
        diffs = data.points - mu
        cov = (diffs * w[:, None]).T @ diffs / counts[j]
        classes.append(GaussianClass(mu=mu, cov=condition_covariance(cov)))
    return ClassicalMixture(classes=tuple(classes), priors=priors)


def log_likelihood(data: Dataset, mix: ClassicalMixture) -> float:
    """Total log-likelihood sum_i log sum_k prior_k * density_k(p_i)."""
    return float(_logsumexp_rows(_log_joint(data, mix)).sum())


def _snapshot(mix: ClassicalMixture) -> dict:
    return {
        "mus": [cls.mu.tolist() for cls in mix.classes],
        "covs": [cls.cov.tolist() for cls in mix.classes],
        "priors": mix.priors.tolist(),
    }


def classical_fit(
    data: Dataset, init: ClassicalMixture, cfg: ConvergenceConfig = ConvergenceConfig()
) -> FitReport:
    """Alternate E and M steps until the log-likelihood settles.

    Stops when |delta LL| < tol * |LL| or after max_iter iterations;
    EmptyClass from the M step propagates to the caller (re-init or
    abort the trial there).
    """
    mix = init
    resp = classical_e_step(data, mix)
    ll = log_likelihood(data, mix)
    trace = [ll]
    counts_trace = [resp.counts()]
    trajectory = [_snapshot(mix)]
    converged = False
    iterations = 0
    for _ in range(cfg.max_iter):
        mix = classical_m_step(data, resp)
        resp = classical_e_step(data, mix)
        new_ll = log_likelihood(data, mix)
        iterations += 1
        trace.append(new_ll)
        counts_trace.append(resp.counts())
        trajectory.append(_snapshot(mix))
        if abs(new_ll - ll) <= cfg.tol * max(abs(ll), np.finfo(float).tiny):
            converged = True
            ll = new_ll
            break
        ll = new_ll
    return FitReport(
        params_final=mix,
        objective_trace=np.array(trace),
        responsibilities=resp,
        n_per_class=resp.counts(),
        iterations=iterations,
        converged=converged,
        trajectory=trajectory,
        counts_trace=np.array(counts_trace),
    )


def random_init(data: Dataset, k: int, rng: np.random.Generator) -> ClassicalMixture:
    """Centers at k distinct data points, global covariance, uniform priors."""
    idx = rng.choice(data.n, size=k, replace=False)
    cov = condition_covariance(np.cov(data.points.T))
    classes = tuple(GaussianClass(mu=data.points[i], cov=cov) for i in idx)
    return ClassicalMixture(classes=classes, priors=np.full(k, 1.0 / k))


def mixture_to_dict(mix: ClassicalMixture) -> dict:
    return {
        "type": "classical",
        "centers": [cls.mu.tolist() for cls in mix.classes],
        "covariances": [cls.cov.reshape(-1).tolist() for cls in mix.classes],
        "priors": mix.priors.tolist(),
    }


def mixture_from_dict(payload: dict) -> ClassicalMixture:
    centers = payload["centers"]
    covs = payload["covariances"]
    d = len(centers[0])
    classes = tuple(
        GaussianClass(mu=np.array(c), cov=np.array(v).reshape(d, d))
        for c, v in zip(centers, covs)
    )
    return ClassicalMixture(classes=classes, priors=np.array(payload["priors"]))
