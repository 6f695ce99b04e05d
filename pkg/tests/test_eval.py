import math

import numpy as np
import pytest

from dpkme.data import MixtureSpec, generate_mixture
from dpkme.dp import PrivacyParams
from dpkme.eval import (
    Affine,
    Coordinatewise,
    ExperimentGrid,
    ResultRow,
    baseline_uniform,
    delta_metric,
    estimate_expectation,
    fit_rate,
    mean_delta,
    mixture_kme_distance,
    push_forward,
    read_results,
    run_grid,
    two_sample_mmd_test,
    write_results,
)
from dpkme.kernel import KernelSpec, cross_gram
from dpkme.rkhs import WeightedExpansion, empirical_kme, rkhs_distance
from dpkme.subspace import PublicSubset, SubspaceReleaseConfig, release_subspace

K1 = KernelSpec(gamma=0.5)


class TestDelta:
    def test_self_distance_zero(self):
        x = np.random.default_rng(0).normal(size=(30, 2))
        assert delta_metric(x, empirical_kme(x, K1), K1) == pytest.approx(0, abs=1e-7)

    def test_brute_force(self):
        x = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]])
        z, w = np.array([[0.5, 0.5], [-1.0, 1.0]]), np.array([0.7, -0.2])
        k = lambda a, b: math.exp(-0.5 * float(np.sum((a - b) ** 2)))
        d2 = (sum(k(a, b) for a in x for b in x) / 9
              - 2 * sum(wj * k(a, zj) for a in x for zj, wj in zip(z, w)) / 3
              + sum(wi * wj * k(zi, zj) for zi, wi in zip(z, w) for zj, wj in zip(z, w)))
        rel = WeightedExpansion(z, w, K1)
        assert delta_metric(x, rel, K1) == pytest.approx(math.sqrt(d2), rel=1e-10)
        assert delta_metric(x, rel, K1) == rkhs_distance(empirical_kme(x, K1), rel)

    def test_point_masses(self):
        # ||k(a,.) - k(b,.)||^2 = 2 - 2 k(a, b)
        a, b = np.array([[0.0, 0.0]]), np.array([[1.0, 1.0]])
        rel = WeightedExpansion(b, np.ones(1), K1)
        assert delta_metric(a, rel, K1) == pytest.approx(math.sqrt(2 - 2 * math.exp(-1.0)))

    def test_cached_norm(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(40, 2))
        rel = WeightedExpansion(rng.normal(size=(3, 2)), rng.normal(size=3) / 3, K1)
        n2 = cross_gram(K1, x, x).mean()
        assert delta_metric(x, rel, K1, private_norm2=n2) == pytest.approx(delta_metric(x, rel, K1))

    def test_kernel_mismatch(self):
        rel = WeightedExpansion(np.zeros((1, 2)), np.ones(1), KernelSpec(1.0))
        with pytest.raises(ValueError, match="kernel mismatch"):
            delta_metric(np.zeros((1, 2)), rel, K1)

    def test_baseline(self):
        x = np.random.default_rng(2).normal(size=(10, 2))
        b = baseline_uniform(x[:4], K1)
        np.testing.assert_allclose(b.weights, 0.25)
        np.testing.assert_array_equal(baseline_uniform(x[:1], K1).weights, [1.0])
        assert b.l1_bound == 1.0


class TestExpectation:
    def test_routes_agree(self):
        rng = np.random.default_rng(3)
        rel = WeightedExpansion(rng.normal(size=(6, 2)), rng.normal(size=6) / 6, K1)
        h = WeightedExpansion(rng.normal(size=(4, 2)), rng.normal(size=4), K1)
        direct = float(rel.weights @ h(rel.points))
        assert estimate_expectation(rel, h) == pytest.approx(direct, rel=1e-12)

    def test_reproducing_and_zero(self):
        z, y = np.array([[0.1, 0.2]]), np.array([[1.0, -1.0]])
        rel = WeightedExpansion(z, np.ones(1), K1)
        assert estimate_expectation(rel, WeightedExpansion(y, np.ones(1), K1)) == pytest.approx(
            math.exp(-0.5 * 2.25))
        assert estimate_expectation(rel, WeightedExpansion(y, np.zeros(1), K1)) == 0.0

    def test_empirical_release_gives_sample_mean(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(50, 2))
        h = WeightedExpansion(np.zeros((1, 2)), np.ones(1), K1)
        assert estimate_expectation(empirical_kme(x, K1), h) == pytest.approx(h(x).mean())


@pytest.fixture(scope="module")
def mixture_release():
    spec = MixtureSpec(2, seed=0)
    x = np.asarray(generate_mixture(spec, 20_000))
    k = KernelSpec.for_dim(2)
    cfg = SubspaceReleaseConfig(100, PrivacyParams(1.0, 1e-6, 20_000), PublicSubset(100),
                                regularization=1.0)
    return spec, x, release_subspace(x, k, cfg)


class TestTwoSample:
    def test_calibration(self, mixture_release):
        spec, _, rel = mixture_release
        rng = np.random.default_rng(0)
        pvals = [two_sample_mmd_test(rel, np.asarray(generate_mixture(spec, 500, rng=rng)), 200, rng)[1]
                 for _ in range(50)]
        assert np.mean(np.array(pvals) > 0.05) >= 0.9

    def test_power(self, mixture_release):
        spec, _, rel = mixture_release
        rng = np.random.default_rng(1)
        out = [two_sample_mmd_test(rel, np.asarray(generate_mixture(spec, 500, rng=rng)) + 1000,
                                   200, rng) for _ in range(20)]
        assert all(stat >= 0 for stat, _ in out)
        assert np.mean([p <= 0.01 for _, p in out]) >= 0.95

    def test_validation(self):
        rel = WeightedExpansion(np.zeros((1, 2)), np.ones(1), K1)
        with pytest.raises(ValueError):
            two_sample_mmd_test(rel, np.zeros((5, 2)), n_permutations=5)


class TestPushForward:
    def test_requires_l1_bound(self):
        rel = WeightedExpansion(np.zeros((1, 2)), np.ones(1), K1)
        with pytest.raises(ValueError, match="L1-bounded"):
            push_forward(rel, Affine(2.0), K1)

    def test_rejects_arbitrary_callables(self):
        rel = WeightedExpansion(np.zeros((1, 2)), np.ones(1), K1, l1_bound=1.0)
        with pytest.raises(TypeError):
            push_forward(rel, np.abs, K1)

    def test_affine(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(20, 2))
        A, b = np.array([[2.0, 0.0], [1.0, -1.0]]), np.array([1.0, 3.0])
        pf = push_forward(empirical_kme(x, K1), Affine(A, b), K1)
        np.testing.assert_allclose(pf.points, x @ A.T + b)
        assert delta_metric(x @ A.T + b, pf, K1) == pytest.approx(0, abs=1e-7)

    def test_scalar_affine_and_clamp(self):
        x = np.array([[-2.0, 0.5], [3.0, 1.0]])
        np.testing.assert_allclose(Affine(2.0, 1.0)(x), 2 * x + 1)
        np.testing.assert_allclose(Coordinatewise("clamp", -1, 1)(x), np.clip(x, -1, 1))
        np.testing.assert_allclose(Coordinatewise("abs")(x), np.abs(x))
        with pytest.raises(ValueError):
            Coordinatewise("log")

    def test_identity_and_constant(self):
        rng = np.random.default_rng(9)
        rel = WeightedExpansion(rng.normal(size=(4, 2)), np.full(4, 0.2), K1, l1_bound=1.0)
        np.testing.assert_array_equal(push_forward(rel, Affine(1.0), K1).points, rel.points)
        const = push_forward(rel, Affine(np.zeros((2, 2)), [3.0, -1.0]), K1)
        h = WeightedExpansion(rng.normal(size=(3, 2)), rng.normal(size=3), K1)
        assert estimate_expectation(const, h) == pytest.approx(0.8 * h(np.array([[3.0, -1.0]]))[0])

    def test_square_on_private_release(self, mixture_release):
        spec, _, rel = mixture_release
        kt = KernelSpec(gamma=1e-7)
        pf = push_forward(rel, Coordinatewise("square"), kt)
        fresh = np.asarray(generate_mixture(spec, 100_000, rng=np.random.default_rng(2))) ** 2
        h = WeightedExpansion(fresh.mean(axis=0, keepdims=True), np.ones(1), kt)
        truth = h(fresh).mean()
        assert abs(estimate_expectation(pf, h) / truth - 1) <= 0.05

    def test_square_monte_carlo(self):
        # pushing the embedding of X through f estimates the embedding of f(X)
        rng = np.random.default_rng(8)
        k = KernelSpec(gamma=0.2)
        x = rng.normal(size=(3000, 1))
        pf = push_forward(empirical_kme(x, k), Coordinatewise("square"), k)
        fresh = rng.normal(size=(3000, 1)) ** 2
        h = WeightedExpansion(np.array([[1.0]]), np.ones(1), k)
        assert estimate_expectation(pf, h) == pytest.approx(h(fresh).mean(), abs=0.02)
        assert delta_metric(fresh, pf, k) < 0.05


class TestFitRate:
    def test_exact_power_law(self):
        ns = np.array([1e3, 2e3, 4e3, 8e3])
        assert fit_rate(ns, 3 * ns**-0.5) == pytest.approx(-0.5)

    def test_constant(self):
        assert fit_rate([1, 2, 3, 4], [0.5] * 4) == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("ns, ds", [([1, 2, 3], [1, 1, 1]), ([1, 2, 3, 4], [1, 0, 1, 1]),
                                        ([1, 2, 3, 4], [1, 1, 1])])
    def test_invalid(self, ns, ds):
        with pytest.raises(ValueError):
            fit_rate(ns, ds)


class TestMixtureDistance:
    def test_point_mass_monte_carlo(self):
        spec = MixtureSpec(2, seed=3)
        k = KernelSpec(gamma=1e-3)
        z = np.array([[95.0, 105.0]])
        rel = WeightedExpansion(z, np.ones(1), k)
        x = np.asarray(generate_mixture(spec, 200_000))
        y = np.asarray(generate_mixture(spec, 200_000, rng=np.random.default_rng(1)))
        mu_z = cross_gram(k, x, z).mean()
        mm = np.mean(np.exp(-k.gamma * np.sum((x - y) ** 2, axis=1)))
        assert mixture_kme_distance(spec, rel) ** 2 == pytest.approx(mm - 2 * mu_z + 1, abs=5e-3)

    def test_sample_embedding_converges(self):
        spec = MixtureSpec(2, seed=0)
        k = KernelSpec(gamma=1e-3)
        ds = [np.mean([mixture_kme_distance(spec, empirical_kme(np.asarray(
            generate_mixture(spec, n, rng=np.random.default_rng(r))), k)) for r in range(10)])
            for n in (250, 1000, 4000, 16000)]
        assert fit_rate([250, 1000, 4000, 16000], ds) == pytest.approx(-0.5, abs=0.1)


def _small_grid(**kw):
    base = dict(dims=(2,), n_private=200, m_values=(5, 10), epsilons=(0.5, 1.0), repeats=2,
                master_seed=3, j_features=64, rff_max_iters=5, rff_candidates=100)
    base.update(kw)
    return ExperimentGrid(**base)


class TestGrid:
    def test_one_cell_cardinality(self):
        g = _small_grid(m_values=(5,), epsilons=(1.0,), repeats=2)
        assert len(run_grid(g, workers=1)) == 2 * len(g.algorithms)

    def test_cells(self):
        g = _small_grid(dims=(2, 3))
        cells = list(g.cells())
        assert len(cells) == 2 * 2 * 2 * 2
        assert [c[0] for c in cells] == list(range(16))
        assert len({g.cell_seed(i) for i in range(16)}) == 16

    def test_from_dict(self):
        assert _small_grid() == ExperimentGrid.from_dict(dict(
            dims=[2], n_private=200, m_values=[5, 10], epsilons=[0.5, 1.0], repeats=2,
            master_seed=3, j_features=64, rff_max_iters=5, rff_candidates=100))
        with pytest.raises(ValueError, match="unknown"):
            ExperimentGrid.from_dict({"dims": [2], "n_private": 1, "m_values": [1],
                                      "epsilons": [1], "bogus": 1})
        with pytest.raises(ValueError):
            _small_grid(scenario="nope")

    @pytest.mark.parametrize("scenario", ["publishable_subset", "no_publishable"])
    def test_rows_and_worker_independence(self, tmp_path, scenario):
        g = _small_grid(scenario=scenario)
        run_grid(g, tmp_path / "a.csv", workers=1)
        run_grid(g, tmp_path / "b.csv", workers=2)
        a, b = (tmp_path / "a.csv").read_bytes(), (tmp_path / "b.csv").read_bytes()
        assert a == b
        rows = read_results(tmp_path / "a.csv")
        assert len(rows) == 8 * 2
        assert {r.algorithm for r in rows} == set(g.algorithms)
        assert all(r.error == "" and r.delta_rkhs >= 0 for r in rows)

    def test_wall_time_optional(self):
        rows = run_grid(_small_grid(record_wall_time=True, m_values=(5,), epsilons=(1.0,),
                                    repeats=1), workers=1)
        assert all(r.wall_ms is not None and r.wall_ms >= 0 for r in rows)

    def test_failed_cell_becomes_nan_row(self, tmp_path):
        # M larger than N: a public subset of 300 rows cannot be taken from 200
        g = _small_grid(m_values=(5, 300), epsilons=(1.0,), repeats=1)
        rows = run_grid(g, tmp_path / "r.csv", workers=1)
        bad = [r for r in rows if r.m == 300]
        assert bad and all(math.isnan(r.delta_rkhs) and r.error for r in bad)
        assert all(r.error == "" for r in rows if r.m == 5)
        back = read_results(tmp_path / "r.csv")
        assert sum(math.isnan(r.delta_rkhs) for r in back) == len(bad)

    def test_kme_threads(self, monkeypatch):
        from dpkme import eval as ev

        monkeypatch.setenv("KME_THREADS", "3")
        assert ev._default_workers() == 3

    def test_mean_delta(self):
        rows = [ResultRow(2, "a", 1.0, 5, r, d, None, 0) for r, d in enumerate([1.0, 3.0])]
        assert mean_delta(rows, algorithm="a", m=5) == 2.0
        with pytest.raises(KeyError):
            mean_delta(rows, algorithm="b")

    def test_results_header_checked(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text("x,y\n")
        with pytest.raises(ValueError):
            read_results(p)
        write_results([], p)
        assert read_results(p) == []
