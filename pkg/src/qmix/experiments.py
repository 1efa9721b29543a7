"""Synthetic-data experiment harness: generation, trial panels, sweeps, scans.

Reproduces the controlled comparisons between the two engines: rotated
Gaussian generators with optional uniform deformation, many-trial error and
fluctuation statistics, overlap/phase tables across separations, and
objective-landscape grids over (mu1_x, alpha1).
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .classical import ConvergenceConfig, classical_fit, random_init
from .core import Dataset, GaussianClass, amplitude_column, condition_covariance
from .errors import QmixError
from .quantum import quantum_fit, random_init2

ENGINES = ("classical", "quantum")


@dataclass(frozen=True)
class ClassSpec:
    """Ground truth for one generated class."""

    center: tuple
    sigma: tuple
    n: int
    theta: float = 0.0

    def __post_init__(self):
        center = tuple(float(v) for v in self.center)
        sigma = tuple(float(v) for v in self.sigma)
        if len(center) not in (2, 3) or len(sigma) != len(center):
            raise ValueError("center/sigma must both have 2 or 3 components")
        if any(s <= 0.0 for s in sigma):
            raise ValueError("sigma components must be positive")
        if self.n < 10:
            raise ValueError("per-class count must be >= 10")
        if len(center) == 3 and self.theta != 0.0:
            raise ValueError("rotation angle is 2D only")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "sigma", sigma)

    @property
    def d(self) -> int:
        return len(self.center)

    def covariance(self) -> np.ndarray:
        return rotation_covariance(self.sigma, self.theta)

    def gaussian(self) -> GaussianClass:
        return GaussianClass(mu=np.array(self.center), cov=self.covariance())


@dataclass(frozen=True)
class ScenarioSpec:
    """Two-class generation scenario with optional uniform deformation."""

    class1: ClassSpec
    class2: ClassSpec
    eps: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.class1.d != self.class2.d:
            raise ValueError("classes must share dimensionality")
        if self.eps < 0.0:
            raise ValueError("deformation half-width must be >= 0")

    @property
    def d(self) -> int:
        return self.class1.d


def rotation_covariance(sigma, theta: float = 0.0) -> np.ndarray:
    """C = R(theta) diag(sigma^2) R(theta)^T (theta only meaningful in 2D)."""
    sig = np.asarray(sigma, dtype=float)
    diag = np.diag(sig**2)
    if sig.shape[0] == 2 and theta != 0.0:
        c, s = np.cos(theta), np.sin(theta)
        rot = np.array([[c, s], [-s, c]])
        return rot @ diag @ rot.T
    return diag


def generate(spec: ScenarioSpec):
    """Sample both classes; returns (Dataset, labels in {0, 1}).

    Deterministic per spec.seed; with eps > 0 every coordinate is displaced
    by an independent Uniform(-eps, eps) draw.
    """
    rng = np.random.default_rng(spec.seed)
    blocks, labels = [], []
    for k, cls in enumerate((spec.class1, spec.class2)):
        chol = np.linalg.cholesky(cls.covariance())
        z = rng.standard_normal((cls.n, cls.d))
        blocks.append(np.array(cls.center) + z @ chol.T)
        labels.append(np.full(cls.n, k, dtype=int))
    pts = np.vstack(blocks)
    if spec.eps > 0.0:
        pts = pts + rng.uniform(-spec.eps, spec.eps, size=pts.shape)
    return Dataset(pts), np.concatenate(labels)


def match_two_classes(est_centers, true_centers):
    """Index permutation matching fitted classes to truth by center distance."""
    d_id = np.linalg.norm(est_centers[0] - true_centers[0]) + np.linalg.norm(
        est_centers[1] - true_centers[1]
    )
    d_sw = np.linalg.norm(est_centers[0] - true_centers[1]) + np.linalg.norm(
        est_centers[1] - true_centers[0]
    )
    return (0, 1) if d_id <= d_sw else (1, 0)


def parameter_names(d: int):
    axes = "xyz"[:d]
    names = [f"mu{k}_{a}" for k in (1, 2) for a in axes]
    names += [f"var{k}_{j}" for k in (1, 2) for j in range(1, d + 1)]
    names += ["n1", "n2"]
    return names


def true_parameters(spec: ScenarioSpec) -> dict:
    """Ground-truth value per parameter name (variances sorted ascending)."""
    vals = {}
    axes = "xyz"[: spec.d]
    for k, cls in ((1, spec.class1), (2, spec.class2)):
        for a, c in zip(axes, cls.center):
            vals[f"mu{k}_{a}"] = c
        for j, v in enumerate(sorted(np.linalg.eigvalsh(cls.covariance())), start=1):
            vals[f"var{k}_{j}"] = float(v)
    vals["n1"] = float(spec.class1.n)
    vals["n2"] = float(spec.class2.n)
    return vals


def _fit_engine(data: Dataset, engine: str, rng: np.random.Generator,
                cfg: ConvergenceConfig):
    if engine == "classical":
        rep = classical_fit(data, random_init(data, 2, rng), cfg)
        mix = rep.params_final
        centers = [cls.mu for cls in mix.classes]
        covs = [cls.cov for cls in mix.classes]
    elif engine == "quantum":
        rep = quantum_fit(data, random_init2(data, rng), cfg)
        mix = rep.params_final
        centers = [mix.class1.mu, mix.class2.mu]
        covs = [mix.class1.cov, mix.class2.cov]
    else:
        raise ValueError(f"unknown engine {engine!r}")
    return rep, centers, covs


def _trial_estimates(spec: ScenarioSpec, engine: str, data_seed: int,
                     init_seed: int, cfg: ConvergenceConfig, restarts: int):
    trial_spec = replace(spec, seed=data_seed)
    data, _ = generate(trial_spec)
    best = None
    for r in range(max(restarts, 1)):
        rng = np.random.default_rng([init_seed, r])
        rep, centers, covs = _fit_engine(data, engine, rng, cfg)
        score = rep.objective_trace[-1]
        if best is None or score > best[0]:
            best = (score, rep, centers, covs)
    _, rep, centers, covs = best
    true_centers = [np.array(spec.class1.center), np.array(spec.class2.center)]
    perm = match_two_classes(centers, true_centers)
    est = []
    for k in perm:
        est.extend(centers[k])
    for k in perm:
        est.extend(sorted(np.linalg.eigvalsh(covs[k])))
    counts = rep.n_per_class[list(perm)]
    est.extend(counts)
    return np.array(est, dtype=float)


def _trial_worker(args):
    spec, engine, data_seed, init_seed, cfg, restarts = args
    try:
        return _trial_estimates(spec, engine, data_seed, init_seed, cfg, restarts)
    except QmixError:
        return None


@dataclass
class TrialStats:
    """Per-parameter error and fluctuation over a panel of seeded trials."""

    names: list
    truth: dict
    estimates: np.ndarray
    errors: dict
    fluctuations: dict
    trials: int
    failed: int


def trial_seeds(base_seed: int, index: int):
    """Stable per-trial (data_seed, init_seed) derived from the base seed."""
    state = np.random.SeedSequence([int(base_seed), int(index)]).generate_state(2)
    return int(state[0]), int(state[1])


def run_trials(
    spec: ScenarioSpec,
    trials: int,
    engine: str,
    base_seed: int,
    cfg: ConvergenceConfig = ConvergenceConfig(),
    restarts: int = 1,
    jobs: int = 1,
) -> TrialStats:
    """Fresh data + fresh init per trial; error/fluctuation per parameter.

    Failed trials (degenerate fits) are recorded and excluded; the run
    aborts if more than 20 percent fail.
    """
    if trials < 2:
        raise ValueError("need at least 2 trials")
    tasks = []
    for i in range(trials):
        data_seed, init_seed = trial_seeds(base_seed, i)
        tasks.append((spec, engine, data_seed, init_seed, cfg, restarts))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_trial_worker, tasks))
    else:
        results = [_trial_worker(t) for t in tasks]
    good = [r for r in results if r is not None]
    failed = trials - len(good)
    if failed > 0.2 * trials:
        raise QmixError(f"{failed}/{trials} trials failed")
    est = np.array(good)
    names = parameter_names(spec.d)
    truth = true_parameters(spec)
    means = est.mean(axis=0)
    stds = est.std(axis=0)
    errors = {n: float(np.sqrt((truth[n] - means[j]) ** 2)) for j, n in enumerate(names)}
    flucts = {n: float(stds[j]) for j, n in enumerate(names)}
    return TrialStats(
        names=names,
        truth=truth,
        estimates=est,
        errors=errors,
        fluctuations=flucts,
        trials=trials,
        failed=failed,
    )


def ground_truth_overlap(spec: ScenarioSpec, data: Dataset) -> float:
    """Amplitude-column inner product at the spec's true parameters."""
    col1 = amplitude_column(data, spec.class1.gaussian())
    col2 = amplitude_column(data, spec.class2.gaussian())
    return float(np.clip(col1.values @ col2.values, 0.0, 1.0))


def overlap_sweep(base: ScenarioSpec, separations, base_seed: int,
                  cfg: ConvergenceConfig = ConvergenceConfig()):
    """Rows of (separation, ground-truth overlap, fitted cos_phi).

    Each separation moves class 2's center to (s, s, ...) while everything
    else follows the base spec; data and init seeds derive from base_seed.
    """
    if len(list(separations)) < 2:
        raise ValueError("need at least 2 separations")
    rows = []
    for j, sep in enumerate(separations):
        center2 = tuple(float(sep) for _ in range(base.d))
        data_seed, init_seed = trial_seeds(base_seed, j)
        spec = replace(
            base, class2=replace(base.class2, center=center2), seed=data_seed
        )
        data, _ = generate(spec)
        t = ground_truth_overlap(spec, data)
        rng = np.random.default_rng(init_seed)
        rep = quantum_fit(data, random_init2(data, rng), cfg)
        rows.append((float(sep), t, float(rep.params_final.cos_phi)))
    return rows


@dataclass
class LandscapeGrid:
    """Cost surface over (mu1_x, alpha1) with the driving fit's anchors."""

    engine: str
    mu_axis: np.ndarray
    alpha_axis: np.ndarray
    alpha_pairs: list
    cost: np.ndarray
    initial_cost: float
    final_cost: float
    true_cost: float


def _discrete_cost(data, class1, class2, a1, a2):
    """Paper-table cost: -sum_i sum_k Q log P on the dataset-normalized scale.

    Q is the self-consistent posterior of the evaluated parameters; P floors
    at tiny to keep every cell finite.
    """
    g1 = amplitude_column(data, class1).values
    g2 = amplitude_column(data, class2).values
    return _cost_from_columns(g1 * g1, g2 * g2, g1 * g2, a1, a2)


def _cost_from_columns(x, y, prod, a1, a2):
    t = float(prod.sum())
    o = prod / t if t > 0.0 else np.zeros_like(prod)
    c = 1.0 - a1 * a1 - a2 * a2
    tiny = np.finfo(float).tiny
    p1 = np.clip(a1 * a1 * x + 0.5 * c * o, tiny, None)
    p2 = np.clip(a2 * a2 * y + 0.5 * c * o, tiny, None)
    den = p1 + p2
    q1 = p1 / den
    q2 = 1.0 - q1
    val = q1 @ np.log(p1) + q2 @ np.log(p2)
    return float(-val)


def true_quantum_cost(data: Dataset, class1: GaussianClass, class2: GaussianClass,
                      alpha_step: float = 0.001) -> float:
    """Exhaustive amplitude search at fixed classes (grid step 0.001)."""
    g1 = amplitude_column(data, class1).values
    g2 = amplitude_column(data, class2).values
    x, y, prod = g1 * g1, g2 * g2, g1 * g2
    t = float(prod.sum())
    o = prod / t if t > 0.0 else np.zeros_like(prod)
    tiny = np.finfo(float).tiny
    alphas = np.arange(alpha_step, 1.0, alpha_step)
    best = np.inf
    for a1 in alphas:
        a2 = alphas
        c = 1.0 - a1 * a1 - a2**2
        ok = np.abs(c) <= 2.0 * a1 * a2 * t + 1e-12
        if not ok.any():
            continue
        a2v = a2[ok]
        cv = c[ok][:, None]
        p1 = a1 * a1 * x[None, :] + 0.5 * cv * o[None, :]
        p2 = (a2v**2)[:, None] * y[None, :] + 0.5 * cv * o[None, :]
        if (p1.min(axis=1) < -1e-12).all() and (p2.min(axis=1) < -1e-12).all():
            continue
        valid = (p1.min(axis=1) >= -1e-12) & (p2.min(axis=1) >= -1e-12)
        if not valid.any():
            continue
        p1 = np.clip(p1[valid], tiny, None)
        p2 = np.clip(p2[valid], tiny, None)
        den = p1 + p2
        q1 = p1 / den
        vals = -(np.einsum("ij,ij->i", q1, np.log(p1))
                 + np.einsum("ij,ij->i", 1.0 - q1, np.log(p2)))
        m = float(vals.min())
        if m < best:
            best = m
    return best


def true_classical_cost(data: Dataset, class1: GaussianClass, class2: GaussianClass,
                        priors) -> float:
    """Direct evaluation on the zero-interference manifold at true priors."""
    a = np.sqrt(np.clip(np.asarray(priors, dtype=float), 1e-12, 1.0))
    return _discrete_cost(data, class1, class2, float(a[0]), float(a[1]))


def landscape_scan(
    data: Dataset,
    spec: ScenarioSpec,
    engine: str,
    init_seed: int,
    cfg: ConvergenceConfig = ConvergenceConfig(),
    mu_step: float = 0.01,
    alpha_step: float = 0.01,
    max_mu_cells: int = 2000,
) -> LandscapeGrid:
    """Cost grid over (mu1_x, alpha1) around one driving fit.

    mu1_x samples span the fit trajectory's range at ``mu_step``; the alpha
    axis follows the trajectory's amplitude pairs (quantum) or a uniform
    alpha1 grid between the trajectory extremes (classical, alpha2 chosen on
    the zero-interference manifold). All other parameters freeze at the
    fit's final values; the "true" anchor evaluates the spec's ground truth
    with an exhaustive 0.001 amplitude search (quantum) or the true priors
    (classical).
    """
    rng = np.random.default_rng(init_seed)
    rep, centers, covs = _fit_engine(data, engine, rng, cfg)

    if engine == "quantum":
        mu_traj = [snap["mus"][0][0] for snap in rep.trajectory]
        alpha_pairs = [tuple(snap["alphas"]) for snap in rep.trajectory]
        init_pair = alpha_pairs[0]
        final_pair = alpha_pairs[-1]
        init_centers = [np.array(m) for m in rep.trajectory[0]["mus"]]
        init_covs = [np.array(c) for c in rep.trajectory[0]["covs"]]
        seen = set()
        pairs = []
        for p in alpha_pairs:
            key = (round(p[0], 6), round(p[1], 6))
            if key not in seen:
                seen.add(key)
                pairs.append(p)
    else:
        mu_traj = [snap["mus"][0][0] for snap in rep.trajectory]
        pri_traj = [np.sqrt(max(snap["priors"][0], 1e-12)) for snap in rep.trajectory]
        lo, hi = min(pri_traj), max(pri_traj)
        a1s = np.arange(lo, hi + alpha_step, alpha_step)
        if a1s.size < 2:
            a1s = np.array([lo, min(lo + alpha_step, 1.0 - 1e-9)])
        pairs = [
            (float(a1), float(np.sqrt(max(1.0 - a1 * a1, 1e-12)))) for a1 in a1s
        ]
        init_pair = (
            pri_traj[0],
            float(np.sqrt(max(1.0 - pri_traj[0] ** 2, 1e-12))),
        )
        final_pair = (
            pri_traj[-1],
            float(np.sqrt(max(1.0 - pri_traj[-1] ** 2, 1e-12))),
        )
        init_centers = [np.array(m) for m in rep.trajectory[0]["mus"]]
        init_covs = [np.array(c) for c in rep.trajectory[0]["covs"]]

    if not any(
        abs(p[0] - final_pair[0]) < 1e-12 and abs(p[1] - final_pair[1]) < 1e-12
        for p in pairs
    ):
        pairs.append(final_pair)

    lo, hi = min(mu_traj), max(mu_traj)
    n_cells = int(np.floor((hi - lo) / mu_step)) + 1
    if n_cells > max_mu_cells:
        mu_axis = np.linspace(lo, hi, max_mu_cells)
    else:
        mu_axis = lo + mu_step * np.arange(n_cells)
        if mu_axis[-1] < hi - 1e-12:
            mu_axis = np.append(mu_axis, hi)
    # the converged cell must be an exact grid sample
    final_mu = float(centers[0][0])
    if not np.any(np.abs(mu_axis - final_mu) < 1e-12):
        mu_axis = np.sort(np.append(mu_axis, final_mu))

    final_c2 = GaussianClass(mu=centers[1], cov=covs[1])
    cost = np.empty((mu_axis.size, len(pairs)))
    for i, mu_x in enumerate(mu_axis):
        mu1 = centers[0].copy()
        mu1[0] = mu_x
        c1 = GaussianClass(mu=mu1, cov=covs[0])
        g1 = amplitude_column(data, c1).values
        g2 = amplitude_column(data, final_c2).values
        x, y, prod = g1 * g1, g2 * g2, g1 * g2
        for j, (a1, a2) in enumerate(pairs):
            cost[i, j] = _cost_from_columns(x, y, prod, a1, a2)

    initial_cost = _discrete_cost(
        data,
        GaussianClass(mu=init_centers[0], cov=init_covs[0]),
        GaussianClass(mu=init_centers[1], cov=init_covs[1]),
        *init_pair,
    )
    final_cost = _discrete_cost(
        data,
        GaussianClass(mu=centers[0], cov=covs[0]),
        final_c2,
        *final_pair,
    )
    truth1 = spec.class1.gaussian()
    truth2 = spec.class2.gaussian()
    if engine == "quantum":
        true_cost = true_quantum_cost(data, truth1, truth2)
    else:
        n = spec.class1.n + spec.class2.n
        true_cost = true_classical_cost(
            data, truth1, truth2, (spec.class1.n / n, spec.class2.n / n)
        )
    return LandscapeGrid(
        engine=engine,
        mu_axis=mu_axis,
        alpha_axis=np.array([p[0] for p in pairs]),
        alpha_pairs=list(pairs),
        cost=cost,
        initial_cost=initial_cost,
        final_cost=final_cost,
        true_cost=true_cost,
    )


def deformation_sweep(
    base: ScenarioSpec,
    eps_values,
    trials: int,
    engine: str,
    base_seed: int,
    cfg: ConvergenceConfig = ConvergenceConfig(),
    jobs: int = 1,
):
    """run_trials once per deformation half-width; returns [(eps, TrialStats)]."""
    rows = []
    for j, eps in enumerate(eps_values):
        spec = replace(base, eps=float(eps))
        stats = run_trials(
            spec, trials, engine, base_seed=int(base_seed) + j, cfg=cfg, jobs=jobs
        )
        rows.append((float(eps), stats))
    return rows
