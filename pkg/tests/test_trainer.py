import numpy as np
import pytest

from mv3mr.graph import knn_adjacency, scalar_laplacian
from mv3mr.kernels import DistanceMetric, add_ridge
from mv3mr.synth import SyntheticSpec, generate_synthetic
from mv3mr.trainer import (
    Dataset,
    DegenerateLabelWarning,
    ModelState,
    TrainConfig,
    View,
    decision_function,
    fit,
    fit_uniform_baseline,
    predict,
    predict_dataset,
    transductive_scores,
)
from oracles import lapsvm_reference


def two_moons(seed, N=60, l=10):
    """Two interleaved half circles plus a second view of pure noise."""
    rng = np.random.default_rng(seed)
    half = N // 2
    t = rng.uniform(0, np.pi, N)
    y = np.r_[np.ones(half), -np.ones(N - half)]
    upper = np.c_[np.cos(t), np.sin(t)]
    lower = np.c_[1 - np.cos(t), 0.5 - np.sin(t)]
    X = np.where(y[:, None] > 0, upper, lower) + 0.1 * rng.standard_normal((N, 2))
    noise = rng.standard_normal((N, 2))
    perm = rng.permutation(N)
    X, noise, y = X[perm], noise[perm], y[perm]
    lab = np.r_[np.flatnonzero(y > 0)[: l // 2], np.flatnonzero(y < 0)[: l // 2]]
    unl = np.setdiff1d(np.arange(N), lab)
    Y = np.zeros((N, 1))
    Y[lab, 0] = y[lab]
    views = [View("moons", "features", X, DistanceMetric.L2), View("noise", "features", noise, DistanceMetric.L2)]
    return Dataset(views, Y, lab, unl, truth=y[:, None])


def small(seed=0, informativeness=(1.0, 0.5), **kw):
    spec = SyntheticSpec(seed=seed, n_labeled=12, n_unlabeled=24, n_test=10, n_labels=2,
                         informativeness=informativeness, **kw)
    return generate_synthetic(spec)


def _simplex(w):
    return np.all(w >= 0) and abs(w.sum() - 1) < 1e-12


class TestConfig:
    @pytest.mark.parametrize("bad", [dict(gamma_A=0), dict(gamma_O=1.5), dict(loss="huber"), dict(k_in=0), dict(gamma_I=-1)])
    def test_rejects(self, bad):
        with pytest.raises(ValueError):
            TrainConfig(**bad)

    def test_replace(self):
        assert TrainConfig().replace(gamma_O=0.5).gamma_O == 0.5


class TestDataset:
    def test_unlabeled_row_with_label(self):
        Y = np.array([[1.0], [1.0]])
        with pytest.raises(ValueError, match="row 1"):
            Dataset([View("x", "features", np.eye(2), DistanceMetric.L2)], Y, [0], [1])

    def test_overlap(self):
        with pytest.raises(ValueError, match="disjoint"):
            Dataset([View("x", "features", np.eye(2), DistanceMetric.L2)], np.array([[1.0], [0.0]]), [0], [0, 1])

    def test_view_rows(self):
        with pytest.raises(ValueError, match="rows"):
            Dataset([View("x", "features", np.eye(3), DistanceMetric.L2)], np.array([[1.0], [0.0]]), [0], [1])


class TestSingleView:
    def test_weights_are_one(self):
        data = small(informativeness=(1.0,))
        m = fit(data, TrainConfig())
        np.testing.assert_array_equal(m.beta, [1.0])
        np.testing.assert_array_equal(m.theta, [1.0])

    def test_uniform_identical(self):
        data = small(informativeness=(1.0,))
        m, u = fit(data, TrainConfig()), fit_uniform_baseline(data, TrainConfig())
        np.testing.assert_array_equal(m.a, u.a)
        np.testing.assert_array_equal(m.b, u.b)


class TestIdenticalViews:
    def test_beta_stays_uniform(self):
        base = small(informativeness=(1.0,))
        v = base.views[0]
        data = Dataset([v, View("copy", v.kind, v.data.copy(), v.metric)], base.Y, base.labeled, base.unlabeled, base.test)
        m = fit(data, TrainConfig())
        np.testing.assert_allclose(m.beta, [0.5, 0.5], atol=1e-6)
        u = fit_uniform_baseline(data, TrainConfig())
        np.testing.assert_allclose(transductive_scores(m), transductive_scores(u), atol=1e-8)


def test_two_moons_prefers_informative_view():
    wins = 0
    for seed in range(10):
        m = fit(two_moons(seed), TrainConfig())
        wins += m.beta[0] > m.beta[1]
    assert wins >= 9


@pytest.fixture(scope="module")
def model():
    return fit(small(3, (1.0, 0.5, 0.0)), TrainConfig(gamma_O=0.5))


@pytest.fixture(scope="module")
def fitted():
    data = small(5, (1.0, 0.3))
    return data, fit(data, TrainConfig())


class TestInvariants:
    def test_simplex(self, model):
        assert _simplex(model.beta) and _simplex(model.theta)

    def test_trace_monotone(self, model):
        assert np.all(np.diff(model.objective_trace) <= 1e-12)

    def test_trace_starts_at_zero_classifier(self, model):
        assert model.objective_trace[0] > model.objective_trace[-1]

    def test_Q_psd(self, model):
        assert np.linalg.eigvalsh(model.Q).min() >= -1e-10

    def test_coef_shape(self, model):
        assert model.coef.shape == (36, 2)


class TestPrediction:
    def test_zero_coef_gives_bias(self, fitted):
        data, m = fitted
        z = ModelState(np.zeros_like(m.a), np.array([0.3, -0.2]), m.beta, m.theta, m.kernels, m.Q,
                       m.config, m.n_labeled, m.train_index, m.objective_trace)
        s = predict_dataset(z, data, data.test)
        np.testing.assert_array_equal(s, np.tile([0.3, -0.2], (data.test.size, 1)))

    def test_transductive_matches_inductive(self, fitted):
        data, m = fitted
        np.testing.assert_allclose(predict_dataset(m, data, m.train_index), transductive_scores(m), atol=1e-10, rtol=0)

    def test_signs(self, fitted):
        data, m = fitted
        inputs = [data.view_rows(v, data.test, m.train_index) for v in range(2)]
        s, yhat = predict(m, inputs)
        np.testing.assert_array_equal(yhat, np.where(s > 0, 1, -1))

    def test_dimension_mismatch(self, fitted):
        data, m = fitted
        with pytest.raises(ValueError, match="dimensionality"):
            decision_function(m, [np.ones((2, 3)), data.views[1].data[:2]])

    def test_view_count(self, fitted):
        data, m = fitted
        with pytest.raises(ValueError, match="view inputs"):
            decision_function(m, [data.views[0].data[:2]])

    def test_precomputed_view(self, fitted):
        data, m = fitted
        X = data.views[0].data
        G = np.exp(-np.linalg.norm(X[:, None] - X[None], axis=2))
        gdata = Dataset([View("g", "gram", G)], data.Y, data.labeled, data.unlabeled, data.test)
        gm = fit(gdata, TrainConfig())
        np.testing.assert_allclose(predict_dataset(gm, gdata, gm.train_index), transductive_scores(gm), atol=1e-10, rtol=0)


def test_degenerate_label_warns():
    data = small(7)
    Y = data.Y.copy()
    Y[data.labeled, 1] = 1.0
    d2 = Dataset(data.views, Y, data.labeled, data.unlabeled, data.test)
    with pytest.warns(DegenerateLabelWarning):
        m = fit(d2, TrainConfig())
    assert np.all(np.isfinite(m.a))


def test_least_squares_mode():
    data = small(2)
    m = fit(data, TrainConfig(loss="least_squares"))
    np.testing.assert_array_equal(m.b, 0.0)
    assert np.all(np.diff(m.objective_trace) <= 1e-12)
    assert _simplex(m.beta) and _simplex(m.theta)


def test_initial_weights_checked():
    data = small(1)
    with pytest.raises(ValueError):
        fit(data, TrainConfig(), beta0=[0.2, 0.2])
    with pytest.raises(ValueError):
        fit(data, TrainConfig(), theta0=[0.2, 0.3, 0.5])


def test_deterministic():
    data = small(4)
    a, b = fit(data, TrainConfig()), fit(data, TrainConfig())
    np.testing.assert_array_equal(a.a, b.a)
    np.testing.assert_array_equal(a.beta, b.beta)


def test_single_view_single_label_matches_laplacian_svm():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(6, 2))
    truth = np.array([1.0, -1.0, 1.0, -1.0, 1.0, -1.0])
    X[truth > 0] += 1.0
    Y = np.zeros((6, 1))
    Y[:4, 0] = truth[:4]
    data = Dataset([View("x", "features", X, DistanceMetric.L2)], Y, np.arange(4), np.arange(4, 6))
    cfg = TrainConfig(gamma_A=1e-3, gamma_I=1e-3, gamma_O=0.0)
    m = fit(data, cfg)
    G = m.kernels[0].gram()
    L = scalar_laplacian(knn_adjacency(G, 5), cfg.normalized_laplacian)
    f_ref, b_ref, _ = lapsvm_reference(add_ridge(G, cfg.ridge_scale), L, truth[:4], cfg.gamma_A, cfg.gamma_I)
    np.testing.assert_allclose(transductive_scores(m)[:, 0], f_ref + b_ref, atol=1e-6, rtol=0)
