import numpy as np
import pytest

from qmix.classical import (
    ClassicalMixture,
    ConvergenceConfig,
    Responsibilities,
    classical_e_step,
    classical_fit,
    classical_m_step,
    log_likelihood,
    mixture_from_dict,
    mixture_to_dict,
    random_init,
)
from qmix.core import Dataset, GaussianClass, classical_density
from qmix.errors import EmptyClass


def two_cluster_data(seed=0, mu2=10.0, s1=3.0, s2=5.0, n1=500, n2=1000):
    rng = np.random.default_rng(seed)
    pts = np.vstack(
        [rng.normal(0.0, s1, size=(n1, 2)), rng.normal(mu2, s2, size=(n2, 2))]
    )
    return Dataset(pts)


class TestTypes:
    def test_mixture_validation(self):
        cls = GaussianClass(np.zeros(2), np.eye(2))
        with pytest.raises(ValueError):
            ClassicalMixture(classes=(cls,), priors=np.array([1.0]))
        with pytest.raises(ValueError):
            ClassicalMixture(classes=(cls, cls), priors=np.array([0.7, 0.7]))

    def test_responsibilities_validation(self):
        with pytest.raises(ValueError):
            Responsibilities(q=np.array([[0.5, 0.6], [0.5, 0.5]]))
        with pytest.raises(ValueError):
            Responsibilities(q=np.array([[1.2, -0.2], [0.5, 0.5]]))

    def test_counts(self):
        resp = Responsibilities(q=np.array([[0.25, 0.75], [0.5, 0.5]]))
        assert np.allclose(resp.counts(), [0.75, 1.25])


class TestEStep:
    def test_identical_classes_split_evenly(self):
        data = two_cluster_data(1)
        cls = GaussianClass(np.zeros(2), 4 * np.eye(2))
        mix = ClassicalMixture(classes=(cls, cls), priors=np.array([0.5, 0.5]))
        resp = classical_e_step(data, mix)
        assert np.abs(resp.q - 0.5).max() < 1e-12

    def test_dominant_class_at_center(self):
        data = Dataset(np.array([[0.0, 0.0], [1000.0, 0.0]]))
        mix = ClassicalMixture(
            classes=(
                GaussianClass(np.zeros(2), np.eye(2)),
                GaussianClass(np.array([1000.0, 0.0]), np.eye(2)),
            ),
            priors=np.array([0.5, 0.5]),
        )
        resp = classical_e_step(data, mix)
        assert resp.q[0, 0] > 1 - 1e-10
        assert resp.q[1, 1] > 1 - 1e-10

    def test_matches_direct_density_ratio(self):
        rng = np.random.default_rng(4)
        data = Dataset(rng.normal(size=(10, 2), scale=3))
        classes = tuple(
            GaussianClass(rng.normal(size=2), np.diag(rng.uniform(0.5, 3.0, 2)))
            for _ in range(3)
        )
        priors = np.array([0.2, 0.5, 0.3])
        mix = ClassicalMixture(classes=classes, priors=priors)
        resp = classical_e_step(data, mix)
        for i, p in enumerate(data.points):
            weights = np.array(
                [priors[k] * classical_density(p, classes[k]) for k in range(3)]
            )
            assert np.abs(resp.q[i] - weights / weights.sum()).max() < 1e-12


class TestMStep:
    def test_hard_assignment_gives_sample_moments(self):
        rng = np.random.default_rng(6)
        a = rng.normal(0, 1, size=(20, 2))
        b = rng.normal(8, 2, size=(30, 2))
        data = Dataset(np.vstack([a, b]))
        q = np.zeros((50, 2))
        q[:20, 0] = 1.0
        q[20:, 1] = 1.0
        mix = classical_m_step(data, Responsibilities(q=q))
        assert np.abs(mix.classes[0].mu - a.mean(axis=0)).max() < 1e-12
        assert np.abs(mix.classes[1].mu - b.mean(axis=0)).max() < 1e-12
        cov_b = (b - b.mean(axis=0)).T @ (b - b.mean(axis=0)) / 30
        assert np.abs(mix.classes[1].cov - cov_b).max() < 1e-10
        assert np.allclose(mix.priors, [0.4, 0.6])

    def test_uniform_gives_global_moments(self):
        rng = np.random.default_rng(8)
        data = Dataset(rng.normal(size=(25, 2)))
        q = np.full((25, 2), 0.5)
        mix = classical_m_step(data, Responsibilities(q=q))
        gm = data.points.mean(axis=0)
        gc = (data.points - gm).T @ (data.points - gm) / 25
        for cls in mix.classes:
            assert np.abs(cls.mu - gm).max() < 1e-12
            assert np.abs(cls.cov - gc).max() < 1e-10

    def test_matches_hand_weighted_moments(self):
        rng = np.random.default_rng(10)
        data = Dataset(rng.normal(size=(6, 2)))
        raw = rng.uniform(0.05, 1.0, size=(6, 2))
        q = raw / raw.sum(axis=1, keepdims=True)
        mix = classical_m_step(data, Responsibilities(q=q))
        for k in range(2):
            nk = q[:, k].sum()
            mu = sum(q[i, k] * data.points[i] for i in range(6)) / nk
            cov = sum(
                q[i, k] * np.outer(data.points[i] - mu, data.points[i] - mu)
                for i in range(6)
            ) / nk
            assert np.abs(mix.classes[k].mu - mu).max() < 1e-12
            assert np.abs(mix.classes[k].cov - cov).max() < 1e-12

    def test_empty_class_raises(self):
        data = Dataset(np.array([[0.0, 0.0], [1.0, 1.0]]))
        q = np.array([[1.0, 0.0], [1.0, 0.0]])
        with pytest.raises(EmptyClass):
            classical_m_step(data, Responsibilities(q=q))


class TestFit:
    def test_single_mode_data_symmetric_init(self):
        rng = np.random.default_rng(12)
        pts = rng.normal(5.0, 1.0, size=(200, 2))
        data = Dataset(pts)
        cls = GaussianClass(pts[0], np.cov(pts.T))
        init = ClassicalMixture(classes=(cls, cls), priors=np.array([0.5, 0.5]))
        rep = classical_fit(data, init)
        sample_mean = pts.mean(axis=0)
        for fitted in rep.params_final.classes:
            assert np.linalg.norm(fitted.mu - sample_mean) < 0.5

    def test_monotone_log_likelihood(self):
        for seed in range(20):
            data = two_cluster_data(seed, mu2=5.0)
            rng = np.random.default_rng(seed + 100)
            rep = classical_fit(data, random_init(data, 2, rng))
            diffs = np.diff(rep.objective_trace)
            assert diffs.min() > -1e-9

    def test_paper_config_center_recovery(self):
        # mu1=0, mu2=10, sigma1=3, sigma2=5, N=500/1000: centers within 0.5
        # of truth in at least 90% of seeded runs
        hits = 0
        for seed in range(20):
            data = two_cluster_data(seed, mu2=10.0)
            rng = np.random.default_rng(seed + 1000)
            rep = classical_fit(data, random_init(data, 2, rng))
            mus = [cls.mu for cls in rep.params_final.classes]
            t1, t2 = np.zeros(2), np.full(2, 10.0)
            d_id = max(np.abs(mus[0] - t1).max(), np.abs(mus[1] - t2).max())
            d_sw = max(np.abs(mus[0] - t2).max(), np.abs(mus[1] - t1).max())
            if min(d_id, d_sw) < 0.5:
                hits += 1
        assert hits >= 18

    def test_fixed_point_at_convergence(self):
        data = two_cluster_data(3, mu2=12.0)
        rng = np.random.default_rng(30)
        cfg = ConvergenceConfig(tol=1e-13, max_iter=2000)
        rep = classical_fit(data, random_init(data, 2, rng), cfg)
        assert rep.converged
        from qmix.classical import classical_e_step as e, classical_m_step as m

        mix2 = m(data, rep.responsibilities)
        for cls, cls2 in zip(rep.params_final.classes, mix2.classes):
            denom = max(np.abs(cls.mu).max(), 1.0)
            assert np.abs(cls.mu - cls2.mu).max() / denom < 1e-6
            denom = max(np.abs(cls.cov).max(), 1.0)
            assert np.abs(cls.cov - cls2.cov).max() / denom < 1e-6

    def test_permutation_equivariance(self):
        data = two_cluster_data(5)
        rng = np.random.default_rng(50)
        init = random_init(data, 2, rng)
        swapped = ClassicalMixture(
            classes=(init.classes[1], init.classes[0]), priors=init.priors[::-1]
        )
        rep_a = classical_fit(data, init)
        rep_b = classical_fit(data, swapped)
        for k in range(2):
            assert np.abs(
                rep_a.params_final.classes[k].mu - rep_b.params_final.classes[1 - k].mu
            ).max() < 1e-9
        assert np.abs(rep_a.n_per_class - rep_b.n_per_class[::-1]).max() < 1e-6

    def test_report_counts_sum_to_n(self):
        data = two_cluster_data(7)
        rng = np.random.default_rng(70)
        rep = classical_fit(data, random_init(data, 2, rng))
        assert rep.n_per_class.sum() == pytest.approx(data.n, abs=1e-8)
        assert rep.objective_trace[-1] == pytest.approx(
            log_likelihood(data, rep.params_final), abs=1e-9
        )

    def test_serialization_round_trip(self):
        data = two_cluster_data(9)
        rng = np.random.default_rng(90)
        rep = classical_fit(data, random_init(data, 2, rng))
        payload = mixture_to_dict(rep.params_final)
        back = mixture_from_dict(payload)
        for a, b in zip(rep.params_final.classes, back.classes):
            assert np.allclose(a.mu, b.mu)
            assert np.allclose(a.cov, b.cov)
        assert np.allclose(rep.params_final.priors, back.priors)
