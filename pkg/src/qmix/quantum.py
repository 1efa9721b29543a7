"""Two-class interference mixture and its constrained EM loop.

Each class contributes a per-point amplitude column (unit norm over the
dataset). Mixing weights alpha_1, alpha_2 carry a phase difference whose
cosine is pinned by the normalization constraint

    1 = alpha1^2 + alpha2^2 + 2 alpha1 alpha2 cos_phi * sum_i G_{i,1} G_{i,2}

so every joint probability picks up the cross term
alpha1 alpha2 G_{i,1} G_{i,2} cos_phi on top of the squared-amplitude part.
The M step is a fixed-point iteration: F-weighted means, R-weighted
covariances, and an amplitude pair solved from the stationarity residuals
on the constructive band (cos_phi >= 0). Sub-steps are damped only when
they would crater the frozen-responsibility objective; the fixed-point
updates are stationary for the constant-normalizer reading of the model,
so small objective wobble is expected and tolerated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classical import ConvergenceConfig, FitReport, Responsibilities
from .core import (
    AmplitudeColumn,
    Dataset,
    GaussianClass,
    amplitude_column,
    condition_covariance,
)
from .errors import (
    ConstraintViolation,
    DegenerateWeights,
    InfeasibleRegion,
    NegativeResponsibility,
    NonPositiveJoint,
    QmixError,
)

_COS_TOL = 1e-12
_JOINT_NEG_TOL = -1e-12
_ZERO_OVERLAP = 1e-12


@dataclass(frozen=True)
class QuantumMixture2:
    """Two Gaussian classes, amplitude pair, and the derived phase cosine."""

    class1: GaussianClass
    class2: GaussianClass
    alpha1: float
    alpha2: float
    cos_phi: float
    total_overlap: float

    def __post_init__(self):
        for name in ("alpha1", "alpha2"):
            a = float(getattr(self, name))
            if not (0.0 < a < 1.0):
                raise ValueError(f"{name}={a!r} must lie in (0, 1)")
            object.__setattr__(self, name, a)
        if not np.isfinite(self.cos_phi):
            raise ValueError("cos_phi is not finite")
        object.__setattr__(self, "cos_phi", float(self.cos_phi))
        object.__setattr__(self, "total_overlap", float(self.total_overlap))


@dataclass(frozen=True)
class OverlapFields:
    """Pointwise overlap share o_i and its amplitude-weighted version."""

    o: np.ndarray
    alpha_o: np.ndarray
    total_overlap: float

    def __post_init__(self):
        for name in ("o", "alpha_o"):
            arr = np.array(getattr(self, name), dtype=float).reshape(-1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def constraint_cos_phi(alpha1: float, alpha2: float, total_overlap: float) -> float:
    """Phase cosine forced by normalization; 0 on the zero-overlap manifold."""
    c = 1.0 - alpha1 * alpha1 - alpha2 * alpha2
    denom = 2.0 * alpha1 * alpha2 * total_overlap
    if denom <= 0.0:
        if abs(c) <= 1e-9:
            return 0.0
        raise ConstraintViolation(
            f"zero overlap cannot normalize alpha pair ({alpha1}, {alpha2})"
        )
    return c / denom


def make_quantum_mixture(
    data: Dataset,
    class1: GaussianClass,
    class2: GaussianClass,
    alpha1: float,
    alpha2: float,
) -> QuantumMixture2:
    """Build a mixture over ``data``, deriving cos_phi from the constraint."""
    col1 = amplitude_column(data, class1)
    col2 = amplitude_column(data, class2)
    t = float(col1.values @ col2.values)
    cos_phi = constraint_cos_phi(alpha1, alpha2, t)
    return QuantumMixture2(
        class1=class1,
        class2=class2,
        alpha1=alpha1,
        alpha2=alpha2,
        cos_phi=cos_phi,
        total_overlap=t,
    )


def overlap_fields(
    col1: AmplitudeColumn, col2: AmplitudeColumn, alpha1: float, alpha2: float
) -> OverlapFields:
    """o_i = G_{i,1}G_{i,2} / sum_j G_{j,1}G_{j,2} and (alpha o)_i."""
    prod = col1.values * col2.values
    t = float(prod.sum())
    o = prod / t if t > 0.0 else np.zeros_like(prod)
    c = 1.0 - alpha1 * alpha1 - alpha2 * alpha2
    return OverlapFields(o=o, alpha_o=c * o, total_overlap=t)


class _Terms:
    """Per-point pieces shared by the E step, objective, and M step."""

    def __init__(self, data: Dataset, mix: QuantumMixture2):
        self.data = data
        self.col1 = amplitude_column(data, mix.class1)
        self.col2 = amplitude_column(data, mix.class2)
        self.x = self.col1.values**2
        self.y = self.col2.values**2
        prod = self.col1.values * self.col2.values
        self.t = float(prod.sum())
        self.o = prod / self.t if self.t > 0.0 else np.zeros_like(prod)
        self.a1 = mix.alpha1
        self.a2 = mix.alpha2
        self.c = 1.0 - self.a1**2 - self.a2**2
        cos_phi = constraint_cos_phi(self.a1, self.a2, self.t)
        if abs(cos_phi) > 1.0 + _COS_TOL:
            raise ConstraintViolation(
                f"|cos_phi| = {abs(cos_phi):.6g} exceeds 1 for "
                f"alphas ({self.a1:.6g}, {self.a2:.6g})"
            )
        inter = 0.5 * self.c * self.o
        self.p1_raw = self.a1**2 * self.x + inter
        self.p2_raw = self.a2**2 * self.y + inter

    def clamped_joint(self):
        """Joint columns with tiny negatives clamped; raises below tolerance."""
        low = min(self.p1_raw.min(), self.p2_raw.min())
        if low < _JOINT_NEG_TOL:
            raise ConstraintViolation(
                f"joint probability {low:.3e} below clamp tolerance"
            )
        return np.clip(self.p1_raw, 0.0, None), np.clip(self.p2_raw, 0.0, None)


def joint_prob_k(data: Dataset, mix: QuantumMixture2) -> np.ndarray:
    """N x 2 joint probabilities; the whole matrix sums to 1."""
    terms = _Terms(data, mix)
    p1, p2 = terms.clamped_joint()
    return np.column_stack([p1, p2])


def quantum_density_K(point_amps, alphas, phases) -> float:
    """|sum_k alpha_k G_k exp(-i phi_k)|^2 for one point; evaluation only."""
    g = np.asarray(point_amps, dtype=float)
    a = np.asarray(alphas, dtype=complex)
    phi = np.asarray(phases, dtype=float)
    psi = np.sum(a * g * np.exp(-1j * phi))
    return float(np.abs(psi) ** 2)


def quantum_e_step(data: Dataset, mix: QuantumMixture2) -> Responsibilities:
    """Responsibilities from the interference joint; rows sum to 1 exactly."""
    terms = _Terms(data, mix)
    low = min(terms.p1_raw.min(), terms.p2_raw.min())
    if low < _JOINT_NEG_TOL:
        raise NegativeResponsibility(
            f"joint probability {low:.3e} fell below -1e-12"
        )
    p1 = np.clip(terms.p1_raw, 0.0, None)
    p2 = np.clip(terms.p2_raw, 0.0, None)
    den = p1 + p2
    # den == 0 is unreachable for points that carry any amplitude; split evenly
    q1 = np.where(den > 0.0, p1 / np.where(den > 0.0, den, 1.0), 0.5)
    q1 = np.clip(q1, 0.0, 1.0)
    return Responsibilities(q=np.column_stack([q1, 1.0 - q1]))


def estimated_counts(resp: Responsibilities) -> np.ndarray:
    """Column sums of the responsibilities (estimated points per class)."""
    return resp.q.sum(axis=0)


def quantum_objective(data: Dataset, mix: QuantumMixture2, resp: Responsibilities) -> float:
    """Frozen-responsibility objective sum_i sum_k Q_i(k) log P(p_i, k)."""
    terms = _Terms(data, mix)
    p1, p2 = terms.clamped_joint()
    q = resp.q
    total = 0.0
    for qk, pk in ((q[:, 0], p1), (q[:, 1], p2)):
        active = qk > 0.0
        if np.any(pk[active] <= 0.0):
            raise NonPositiveJoint("P(p_i,k) <= 0 where Q_i(k) > 0")
        total += float(qk[active] @ np.log(pk[active]))
    return total


def _denominator(terms: _Terms) -> np.ndarray:
    return terms.p1_raw + terms.p2_raw


def _f_weights(terms: _Terms, q: np.ndarray) -> np.ndarray:
    """F_{i,k} = Q_i(k) - o_i * sum_j (alpha o)_j / (2 D_j), both columns."""
    den = _denominator(terms)
    s = float(np.sum(0.5 * terms.c * terms.o / den))
    return q - np.outer(terms.o, [s, s])


def mu_update(data: Dataset, mix: QuantumMixture2, resp: Responsibilities):
    """F-weighted means for both classes.

    Raises DegenerateWeights when a weight column sums to ~0 (the caller
    falls back to a plain responsibility-weighted mean for that iteration).
    """
    terms = _Terms(data, mix)
    f = _f_weights(terms, resp.q)
    sums = f.sum(axis=0)
    if np.any(np.abs(sums) <= 1e-8):
        raise DegenerateWeights(f"F-weight sums {sums} too close to zero")
    mus = (f.T @ data.points) / sums[:, None]
    return mus[0], mus[1]


def cov_update(data: Dataset, mix: QuantumMixture2, resp: Responsibilities, new_mus):
    """R-weighted scatter matrices about ``new_mus``, SPD-conditioned.

    Weights R_{i,k} = F_{i,k} + alpha_k^2 G_{i,k}^2 / D_i use the columns of
    ``mix`` (the parameters the responsibilities were computed from).
    """
    terms = _Terms(data, mix)
    den = _denominator(terms)
    f = _f_weights(terms, resp.q)
    r = f + np.column_stack([terms.a1**2 * terms.x, terms.a2**2 * terms.y]) / den[:, None]
    sums = r.sum(axis=0)
    if np.any(sums <= 1e-8):
        raise DegenerateWeights(f"R-weight sums {sums} too close to zero")
    covs = []
    for k, mu in enumerate(new_mus):
        diffs = data.points - np.asarray(mu, dtype=float)
        cov = (diffs * r[:, k][:, None]).T @ diffs / sums[k]
        covs.append(condition_covariance(cov))
    return covs[0], covs[1]


def alpha_residuals(data: Dataset, mix: QuantumMixture2):
    """Stationarity residuals of the amplitude pair and their natural scale.

    Returns (r1, r2, scale) with r_k = sum_i (G_{i,k}^2 - o_i) / D_i and
    scale = mean_i 1/D_i.
    """
    terms = _Terms(data, mix)
    den = _denominator(terms)
    r1 = float(np.sum((terms.x - terms.o) / den))
    r2 = float(np.sum((terms.y - terms.o) / den))
    scale = float(np.mean(1.0 / den))
    return r1, r2, scale


def mu_objective_gradient(data: Dataset, mix: QuantumMixture2, resp: Responsibilities):
    """Exact gradients of the frozen-responsibility objective w.r.t. both means.

    Includes the terms from the dataset normalization of the amplitude
    columns (which the fixed-point mean update neglects): d G_i^2 / d mu =
    G_i^2 C^{-1} (p_i - m_G) with m_G the amplitude-weighted mean, and
    d o_i / d mu_k = o_i C_k^{-1} (p_i - m_o) / 2. Diagnostic companion to
    the finite-difference stationarity checks.
    """
    terms = _Terms(data, mix)
    p1, p2 = terms.clamped_joint()
    tiny = np.finfo(float).tiny
    q1, q2 = resp.q[:, 0], resp.q[:, 1]
    ratio1 = np.where(q1 > 0.0, q1 / np.clip(p1, tiny, None), 0.0)
    ratio2 = np.where(q2 > 0.0, q2 / np.clip(p2, tiny, None), 0.0)
    pts = data.points
    m_o = terms.o @ pts
    grads = []
    for cls, g2, a, r_own in (
        (mix.class1, terms.x, terms.a1, ratio1),
        (mix.class2, terms.y, terms.a2, ratio2),
    ):
        u = r_own * a * a * g2
        v = 0.25 * terms.c * terms.o * (ratio1 + ratio2)
        m_g = g2 @ pts
        vec = (u + v) @ pts - u.sum() * m_g - v.sum() * m_o
        grads.append(np.linalg.solve(cls.cov, vec))
    return grads[0], grads[1]


class _AlphaProblem:
    """Squared stationarity residuals over the constructive feasible band.

    Feasibility is 0 <= 1 - a1^2 - a2^2 <= 2 a1 a2 T (cos_phi in [0, 1]);
    the destructive side is excluded because it violates pointwise
    nonnegativity of the joint wherever one class dominates and drags the
    fit into a collapsed state.
    """

    def __init__(self, x, y, o, t):
        self.x = x
        self.y = y
        self.o = o
        self.t = t
        self.xo = x - o
        self.yo = y - o

    def feasible(self, a1, a2) -> bool:
        if not (0.0 < a1 < 1.0 and 0.0 < a2 < 1.0):
            return False
        c = 1.0 - a1 * a1 - a2 * a2
        if c < -_COS_TOL:
            return False
        return c <= 2.0 * a1 * a2 * self.t + _COS_TOL

    def value(self, a1, a2) -> float:
        c = 1.0 - a1 * a1 - a2 * a2
        den = a1 * a1 * self.x + a2 * a2 * self.y + c * self.o
        if den.min() <= 0.0:
            return np.inf
        r1 = np.sum(self.xo / den)
        r2 = np.sum(self.yo / den)
        return float(r1 * r1 + r2 * r2)

    def eval_if_feasible(self, a1, a2) -> float:
        return self.value(a1, a2) if self.feasible(a1, a2) else np.inf


def _refine_local(problem, start, step: float, tol: float = 1e-6):
    """Shrinking coordinate search around ``start`` until steps fall below tol."""
    best = tuple(start)
    best_val = problem.eval_if_feasible(*best)
    while step > tol:
        moved = False
        for axis in (0, 1):
            for sign in (-1.0, 1.0):
                cand = list(best)
                cand[axis] = min(max(cand[axis] + sign * step, 1e-9), 1.0 - 1e-9)
                val = problem.eval_if_feasible(*cand)
                if val < best_val:
                    best, best_val = tuple(cand), val
                    moved = True
        if not moved:
            step *= 0.5
    return best, best_val


def _refine_circle(problem, theta: float, step: float, tol: float = 1e-8):
    """Same shrinking search but along alpha1 = cos(theta), alpha2 = sin(theta)."""
    lo, hi = 1e-6, 0.5 * np.pi - 1e-6

    def val(th):
        return problem.eval_if_feasible(float(np.cos(th)), float(np.sin(th)))

    best, best_val = theta, val(theta)
    while step > tol:
        moved = False
        for sign in (-1.0, 1.0):
            cand = min(max(best + sign * step, lo), hi)
            v = val(cand)
            if v < best_val:
                best, best_val = cand, v
                moved = True
        if not moved:
            step *= 0.5
    return (float(np.cos(best)), float(np.sin(best))), best_val


def alpha_solve(data: Dataset, mix: QuantumMixture2, warm=None):
    """Amplitude pair minimizing the squared stationarity residuals.

    Sweeps the zero-interference manifold alpha1^2 + alpha2^2 = 1 (always
    feasible), a coarse 0.02 grid over the constructive band, and an
    optional warm start, then refines the best candidate by shrinking
    coordinate descent down to 1e-6 steps.

    Raises
    ------
    InfeasibleRegion
        If no candidate satisfies the phase-cosine constraint.
    """
    col1 = amplitude_column(data, mix.class1)
    col2 = amplitude_column(data, mix.class2)
    prod = col1.values * col2.values
    t = float(prod.sum())
    x, y = col1.values**2, col2.values**2
    o = prod / t if t > _ZERO_OVERLAP else np.zeros_like(prod)
    problem = _AlphaProblem(x, y, o, t if t > _ZERO_OVERLAP else 0.0)

    candidates = []
    thetas = np.linspace(0.02, 0.5 * np.pi - 0.02, 79)
    circle_vals = [problem.eval_if_feasible(np.cos(th), np.sin(th)) for th in thetas]
    i_circ = int(np.argmin(circle_vals))
    if np.isfinite(circle_vals[i_circ]):
        pair, val = _refine_circle(problem, float(thetas[i_circ]), 0.02)
        # walk inward off the circle in case an interior root exists
        pair, val = _refine_local(problem, pair, 0.02)
        candidates.append((val, pair))

    if warm is not None and np.isfinite(problem.eval_if_feasible(*warm)):
        pair, val = _refine_local(problem, warm, 0.02)
        candidates.append((val, pair))

    if t > _ZERO_OVERLAP:
        grid = np.linspace(0.01, 0.99, 50)
        a1g, a2g = np.meshgrid(grid, grid, indexing="ij")
        pairs = np.column_stack([a1g.ravel(), a2g.ravel()])
        best_val, best_pair = np.inf, None
        for chunk in np.array_split(pairs, 10):
            a1 = chunk[:, 0][:, None]
            a2 = chunk[:, 1][:, None]
            c = 1.0 - a1**2 - a2**2
            ok = (c[:, 0] >= -_COS_TOL) & (c[:, 0] <= 2.0 * a1[:, 0] * a2[:, 0] * t + _COS_TOL)
            if not ok.any():
                continue
            den = a1**2 * x + a2**2 * y + c * o
            ok &= den.min(axis=1) > 0.0
            if not ok.any():
                continue
            r1 = ((x - o) / den).sum(axis=1)
            r2 = ((y - o) / den).sum(axis=1)
            vals = np.where(ok, r1**2 + r2**2, np.inf)
            i = int(np.argmin(vals))
            if vals[i] < best_val:
                best_val = float(vals[i])
                best_pair = (float(chunk[i, 0]), float(chunk[i, 1]))
        if best_pair is not None:
            pair, val = _refine_local(problem, best_pair, 0.02)
            candidates.append((val, pair))

    if not candidates:
        raise InfeasibleRegion("no amplitude pair satisfies the phase constraint")
    candidates.sort(key=lambda cv: cv[0])
    return candidates[0][1]


def _alpha_prior_step(data: Dataset, mix: QuantumMixture2, resp: Responsibilities):
    """Amplitude pair mirroring the baseline prior update prior_k = N_k / N.

    Through the zero-interference equivalence (a quantum state on the
    alpha1^2 + alpha2^2 = 1 manifold matches a classical mixture with
    priors proportional to alpha_k^2 Z_k / S_k, where S_k is the squared
    raw amplitude mass and Z_k the continuous Gaussian normalizer), the
    classical prior update maps to alpha_k^2 proportional to
    (N_k / N) S_k / Z_k. This keeps the amplitude iteration exactly as
    stable and count-consistent as the baseline engine; the free
    stationarity solution drifts to count-starved roots in overlap regimes.
    """
    counts = np.clip(estimated_counts(resp), 1e-9, None)
    logits = []
    for cls, cnt in ((mix.class1, counts[0]), (mix.class2, counts[1])):
        col = amplitude_column(data, cls)
        log_s = 2.0 * np.log(max(col.norm_raw, np.finfo(float).tiny))
        log_z = 0.5 * cls.d * np.log(2.0 * np.pi) + 0.5 * cls.log_det_cov
        logits.append(np.log(cnt) + log_s - log_z)
    m = max(logits)
    w = np.exp(np.array(logits) - m)
    sq = np.clip(w / w.sum(), 1e-12, 1.0 - 1e-12)
    return float(np.sqrt(sq[0])), float(np.sqrt(sq[1]))


def random_init2(data: Dataset, rng: np.random.Generator) -> QuantumMixture2:
    """Two distinct data points as centers, global covariance, equal amplitudes."""
    idx = rng.choice(data.n, size=2, replace=False)
    cov = condition_covariance(np.cov(data.points.T))
    inv_sqrt2 = 1.0 / np.sqrt(2.0)
    return make_quantum_mixture(
        data,
        GaussianClass(mu=data.points[idx[0]], cov=cov),
        GaussianClass(mu=data.points[idx[1]], cov=cov),
        inv_sqrt2,
        inv_sqrt2,
    )


def classical_warm_init(
    data: Dataset, rng: np.random.Generator, cfg: ConvergenceConfig = ConvergenceConfig()
) -> QuantumMixture2:
    """Seeded init on the zero-interference manifold at a baseline EM solution.

    Runs the classical engine from its own random init and maps the result
    onto the quantum parameterization (alpha_k = sqrt(prior_k), cos_phi = 0).
    The inherited-covariance random start sits inside a collapsed basin of
    the interference model, where the likelihood-damped loop cannot move;
    anchoring at the baseline optimum starts it where its own answers live.
    """
    from .classical import classical_fit, random_init

    rep = classical_fit(data, random_init(data, 2, rng), cfg)
    mix = rep.params_final
    a = np.sqrt(np.clip(mix.priors, 1e-12, 1.0 - 1e-12))
    return make_quantum_mixture(
        data, mix.classes[0], mix.classes[1], float(a[0]), float(a[1])
    )


def quantum_likelihood(data: Dataset, mix: QuantumMixture2) -> float:
    """Model likelihood sum_i log P(p_i) = sum_i log D_i.

    This is the quantity the EM loop must not descend: ascent of the
    frozen-responsibility objective implies ascent here, and the two agree
    to first order at the current iterate, but for the large jumps the
    fixed-point updates can propose, this is the trustworthy criterion.
    """
    terms = _Terms(data, mix)
    den = _denominator(terms)
    if den.min() <= 0.0:
        raise NonPositiveJoint("P(p_i) <= 0 at some point")
    return float(np.log(den).sum())


def _try_objective(data, mix, resp) -> float:
    try:
        return quantum_objective(data, mix, resp)
    except QmixError:
        return -np.inf


def _try_likelihood(data, mix) -> float:
    try:
        return quantum_likelihood(data, mix)
    except QmixError:
        return -np.inf


def _damped_apply(data, mix, cur_ll, build, max_halvings: int = 20):
    """Apply ``build(lam)``, halving the step while it lands on an
    infeasible or degenerate state; skip after 20 halvings.

    With the amplitude pair pinned to the zero-interference manifold the
    iteration tracks baseline EM step for step, so magnitude-based vetoes
    would only block its legitimate reorganization phase (the dataset
    normalizer swings the likelihood by hundreds of nats while classes
    tighten); damping therefore engages on non-finite likelihood only.
    """
    lam = 1.0
    for _ in range(max_halvings + 1):
        try:
            cand = build(lam)
        except (QmixError, ValueError):
            lam *= 0.5
            continue
        ll = _try_likelihood(data, cand)
        if np.isfinite(ll):
            return cand, ll
        lam *= 0.5
    return mix, cur_ll


def _snapshot(mix: QuantumMixture2) -> dict:
    return {
        "mus": [mix.class1.mu.tolist(), mix.class2.mu.tolist()],
        "covs": [mix.class1.cov.tolist(), mix.class2.cov.tolist()],
        "alphas": [mix.alpha1, mix.alpha2],
        "cos_phi": mix.cos_phi,
        "total_overlap": mix.total_overlap,
    }


def quantum_fit(
    data: Dataset, init: QuantumMixture2, cfg: ConvergenceConfig = ConvergenceConfig()
) -> FitReport:
    """EM loop: E step, F-mean update, R-covariance update, alpha solve.

    cos_phi is re-derived from the constraint after every iteration, which
    keeps the joint matrix normalized at each iterate; sub-steps that would
    crater the frozen-responsibility objective are damped or skipped.
    """
    mix = init
    resp = quantum_e_step(data, mix)
    obj = quantum_objective(data, mix, resp)
    trace = [obj]
    counts_trace = [estimated_counts(resp)]
    trajectory = [_snapshot(mix)]
    converged = False
    iterations = 0
    prev = obj
    for _ in range(cfg.max_iter):
        cur = _try_likelihood(data, mix)

        # mean sub-step
        try:
            new_mus = mu_update(data, mix, resp)
        except DegenerateWeights:
            w = resp.q / resp.q.sum(axis=0, keepdims=True)
            mus = w.T @ data.points
            new_mus = (mus[0], mus[1])
        old_mus = (mix.class1.mu, mix.class2.mu)

        def build_mu(lam, _mix=mix, _old=old_mus, _new=new_mus):
            mus = [o + lam * (n - o) for o, n in zip(_old, _new)]
            return make_quantum_mixture(
                data,
                GaussianClass(mu=mus[0], cov=_mix.class1.cov),
                GaussianClass(mu=mus[1], cov=_mix.class2.cov),
                _mix.alpha1,
                _mix.alpha2,
            )

        weights_mix = mix
        mix, cur = _damped_apply(data, mix, cur, build_mu)

        # covariance sub-step (weights from the pre-update columns)
        try:
            new_covs = cov_update(
                data, weights_mix, resp, (mix.class1.mu, mix.class2.mu)
            )
        except DegenerateWeights:
            q = resp.q
            counts = q.sum(axis=0)
            new_covs = []
            for k, mu in enumerate((mix.class1.mu, mix.class2.mu)):
                diffs = data.points - mu
                new_covs.append(
                    condition_covariance((diffs * q[:, k][:, None]).T @ diffs / counts[k])
                )
        old_covs = (mix.class1.cov, mix.class2.cov)

        def build_cov(lam, _mix=mix, _old=old_covs, _new=new_covs):
            covs = [condition_covariance(o + lam * (n - o)) for o, n in zip(_old, _new)]
            return make_quantum_mixture(
                data,
                GaussianClass(mu=_mix.class1.mu, cov=covs[0]),
                GaussianClass(mu=_mix.class2.mu, cov=covs[1]),
                _mix.alpha1,
                _mix.alpha2,
            )

        mix, cur = _damped_apply(data, mix, cur, build_cov)

        # amplitude sub-step (prior rule through the zero-interference map)
        new_alphas = _alpha_prior_step(data, mix, resp)

        def build_alpha(lam, _mix=mix, _new=new_alphas):
            a1 = _mix.alpha1 + lam * (_new[0] - _mix.alpha1)
            a2 = _mix.alpha2 + lam * (_new[1] - _mix.alpha2)
            return make_quantum_mixture(data, _mix.class1, _mix.class2, a1, a2)

        mix, cur = _damped_apply(data, mix, cur, build_alpha)

        resp = quantum_e_step(data, mix)
        obj = quantum_objective(data, mix, resp)
        iterations += 1
        trace.append(obj)
        counts_trace.append(estimated_counts(resp))
        trajectory.append(_snapshot(mix))
        if abs(obj - prev) <= cfg.tol * max(abs(prev), np.finfo(float).tiny):
            converged = True
            break
        prev = obj
    return FitReport(
        params_final=mix,
        objective_trace=np.array(trace),
        responsibilities=resp,
        n_per_class=estimated_counts(resp),
        iterations=iterations,
        converged=converged,
        trajectory=trajectory,
        counts_trace=np.array(counts_trace),
    )


def mixture_to_dict(mix: QuantumMixture2) -> dict:
    return {
        "type": "quantum",
        "centers": [mix.class1.mu.tolist(), mix.class2.mu.tolist()],
        "covariances": [
            mix.class1.cov.reshape(-1).tolist(),
            mix.class2.cov.reshape(-1).tolist(),
        ],
        "alphas": [mix.alpha1, mix.alpha2],
        "cos_phi": mix.cos_phi,
        "total_overlap": mix.total_overlap,
    }


def mixture_from_dict(payload: dict) -> QuantumMixture2:
    centers = [np.array(c, dtype=float) for c in payload["centers"]]
    d = centers[0].shape[0]
    covs = [np.array(v, dtype=float).reshape(d, d) for v in payload["covariances"]]
    return QuantumMixture2(
        class1=GaussianClass(mu=centers[0], cov=covs[0]),
        class2=GaussianClass(mu=centers[1], cov=covs[1]),
        alpha1=payload["alphas"][0],
        alpha2=payload["alphas"][1],
        cos_phi=payload["cos_phi"],
        total_overlap=payload["total_overlap"],
    )
