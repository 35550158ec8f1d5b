import numpy as np
import pytest

from sleepstager.model import (
    LinearPipelineModel,
    LogisticModel,
    apply_quantile,
    fit_logistic,
    fit_pca,
    fit_pipeline,
    fit_quantile,
    load_model_json,
    logistic_loss_grad,
    predict,
    predict_proba,
    project_pca,
    save_model_json,
)


def make_blobs(seed=0, n=5000, d=20, k=5, spread=4.0):
    rng = np.random.default_rng(seed)
    centers = rng.normal(scale=spread, size=(k, d))
    y = rng.integers(0, k, size=n)
    X = centers[y] + rng.standard_normal((n, d))
    return X, y


class TestQuantileFit:
    def test_constant_column_all_references_equal_and_transform_zero(self):
        X = np.column_stack([np.full(100, 3.0), np.arange(100.0)])
        q = fit_quantile(X)
        assert (q.references[0] == 3.0).all()
        t = apply_quantile(q, X)
        assert (t[:, 0] == 0.0).all()

    def test_median_reference_of_1_to_1000(self):
        X = np.arange(1.0, 1001.0).reshape(-1, 1)
        q = fit_quantile(X)
        assert q.references[0, 50] == pytest.approx(500.5)

    def test_references_non_decreasing(self):
        X = np.random.default_rng(0).standard_normal((500, 7))
        q = fit_quantile(X)
        assert (np.diff(q.references, axis=1) >= 0).all()

    def test_needs_two_rows(self):
        with pytest.raises(ValueError, match="2 rows"):
            fit_quantile(np.ones((1, 3)))


class TestQuantileApply:
    def test_training_extremes_map_to_exact_endpoints(self):
        X = np.random.default_rng(1).standard_normal((300, 4))
        q = fit_quantile(X)
        t = apply_quantile(q, X)
        for j in range(4):
            assert t[np.argmin(X[:, j]), j] == 0.0
            assert t[np.argmax(X[:, j]), j] == 1.0

    def test_training_marginals_uniform_ks(self):
        # KS statistic of the transformed training column against U(0,1)
        rng = np.random.default_rng(1234)
        X = np.exp(rng.standard_normal((10000, 1)))  # heavily skewed on purpose
        q = fit_quantile(X)
        t = np.sort(apply_quantile(q, X)[:, 0])
        n = len(t)
        grid_hi = np.arange(1, n + 1) / n
        grid_lo = np.arange(0, n) / n
        ks = max(np.abs(t - grid_hi).max(), np.abs(t - grid_lo).max())
        assert ks <= 0.02

    def test_outliers_clip(self):
        X = np.random.default_rng(2).standard_normal((100, 1))
        q = fit_quantile(X)
        t = apply_quantile(q, np.array([[1e12], [-1e12]]))
        assert t[0, 0] == 1.0
        assert t[1, 0] == 0.0

    def test_monotone_per_column(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((400, 1))
        q = fit_quantile(X)
        probe = np.sort(rng.standard_normal((1000, 1)), axis=0)
        t = apply_quantile(q, probe)
        assert (np.diff(t[:, 0]) >= 0).all()

    def test_values_in_unit_interval(self):
        rng = np.random.default_rng(4)
        X = rng.standard_normal((200, 3))
        q = fit_quantile(X)
        t = apply_quantile(q, rng.standard_normal((500, 3)) * 10)
        assert (t >= 0.0).all() and (t <= 1.0).all()

    def test_column_count_mismatch_raises(self):
        q = fit_quantile(np.random.default_rng(5).standard_normal((50, 3)))
        with pytest.raises(ValueError, match="columns"):
            apply_quantile(q, np.zeros((5, 4)))


class TestLogistic:
    def test_gradient_matches_central_differences(self):
        rng = np.random.default_rng(7)
        X = rng.standard_normal((50, 20))
        y = rng.integers(0, 5, size=50)
        params = rng.normal(scale=0.1, size=5 * 20 + 5)
        _, analytic = logistic_loss_grad(params, X, y, 5, 1.0)
        h = 1e-6
        numeric = np.empty_like(params)
        for i in range(len(params)):
            up, down = params.copy(), params.copy()
            up[i] += h
            down[i] -= h
            fu, _ = logistic_loss_grad(up, X, y, 5, 1.0)
            fd, _ = logistic_loss_grad(down, X, y, 5, 1.0)
            numeric[i] = (fu - fd) / (2 * h)
        rel = np.linalg.norm(analytic - numeric) / np.linalg.norm(analytic)
        assert rel <= 1e-5

    def test_separable_blobs_training_accuracy(self):
        X, y = make_blobs(seed=11)
        model = fit_logistic(X, y)
        acc = (predict(model, X) == y).mean()
        assert acc >= 0.95

    def test_refit_is_bitwise_identical(self):
        X, y = make_blobs(seed=12, n=800, d=10)
        a = fit_logistic(X, y)
        b = fit_logistic(X, y)
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.biases, b.biases)

    def test_row_duplication_with_matched_l2_keeps_optimum(self):
        # moderate class overlap keeps the optimum well conditioned, so both
        # runs converge far enough for a 1e-6 comparison
        X, y = make_blobs(seed=13, n=400, d=8, spread=1.0)
        tight = dict(grad_tol=1e-10, max_iter=5000)
        a = fit_logistic(X, y, l2_strength=1.0, **tight)
        b = fit_logistic(np.vstack([X, X]), np.concatenate([y, y]), l2_strength=2.0, **tight)
        np.testing.assert_allclose(b.weights, a.weights, atol=1e-6)
        np.testing.assert_allclose(b.biases, a.biases, atol=1e-6)

    def test_fitted_loss_below_zero_weight_loss(self):
        X, y = make_blobs(seed=14, n=500, d=6)
        model = fit_logistic(X, y)
        params = np.concatenate([model.weights.ravel(), model.biases])
        fitted, _ = logistic_loss_grad(params, X, y, 5, 1.0)
        zero, _ = logistic_loss_grad(np.zeros_like(params), X, y, 5, 1.0)
        assert fitted < zero

    def test_single_class_rejected(self):
        with pytest.raises(ValueError, match="class"):
            fit_logistic(np.random.default_rng(15).standard_normal((10, 3)), np.zeros(10, int))

    def test_non_finite_rejected(self):
        X = np.zeros((4, 2))
        X[0, 0] = np.inf
        with pytest.raises(ValueError, match="finite"):
            fit_logistic(X, np.array([0, 1, 0, 1]))


class TestPredictProba:
    def test_zero_model_gives_uniform(self):
        model = LogisticModel(np.zeros((5, 3)), np.zeros(5), ("a", "b", "c", "d", "e"), 1.0)
        p = predict_proba(model, np.random.default_rng(16).standard_normal((7, 3)))
        np.testing.assert_allclose(p, 0.2)

    def test_rows_sum_to_one(self):
        X, y = make_blobs(seed=17, n=300, d=5)
        model = fit_logistic(X, y)
        p = predict_proba(model, X)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)

    def test_score_shift_invariance(self):
        rng = np.random.default_rng(18)
        W = rng.standard_normal((5, 4))
        model_a = LogisticModel(W, np.zeros(5), ("a", "b", "c", "d", "e"), 1.0)
        model_b = LogisticModel(W, np.full(5, 3.7), ("a", "b", "c", "d", "e"), 1.0)
        X = rng.standard_normal((20, 4))
        np.testing.assert_allclose(predict_proba(model_a, X), predict_proba(model_b, X), atol=1e-12)

    def test_tie_broken_by_class_order(self):
        model = LogisticModel(np.zeros((5, 2)), np.zeros(5), ("a", "b", "c", "d", "e"), 1.0)
        assert (predict(model, np.ones((3, 2))) == 0).all()


class TestPca:
    def test_line_data_one_component(self):
        rng = np.random.default_rng(19)
        direction = rng.standard_normal(6)
        X = np.outer(rng.standard_normal(100), direction) + rng.standard_normal(6)
        X += 1e-8 * rng.standard_normal(X.shape)  # avoid exact rank-1 rejection
        pca = fit_pca(X)
        ratio = pca.explained_variance[0] / pca.explained_variance.sum()
        assert ratio >= 0.999

    def test_mean_projects_to_origin(self):
        X = np.random.default_rng(20).standard_normal((50, 4))
        pca = fit_pca(X)
        np.testing.assert_allclose(project_pca(pca, X.mean(axis=0)[None, :]), 0.0, atol=1e-9)

    def test_components_orthonormal(self):
        X = np.random.default_rng(21).standard_normal((200, 10))
        pca = fit_pca(X)
        gram = pca.components @ pca.components.T
        np.testing.assert_allclose(gram, np.eye(2), atol=1e-9)

    def test_explained_variance_non_increasing(self):
        X = np.random.default_rng(22).standard_normal((200, 10))
        pca = fit_pca(X)
        assert pca.explained_variance[0] >= pca.explained_variance[1]

    def test_two_components_reconstruct_no_worse_than_one(self):
        X = np.random.default_rng(23).standard_normal((100, 8))
        pca = fit_pca(X)
        Z = project_pca(pca, X)
        recon2 = pca.mean + Z @ pca.components
        recon1 = pca.mean + np.outer(Z[:, 0], pca.components[0])
        err2 = np.linalg.norm(X - recon2)
        err1 = np.linalg.norm(X - recon1)
        assert err2 <= err1

    def test_sign_convention(self):
        X = np.random.default_rng(24).standard_normal((100, 5))
        pca = fit_pca(X)
        for row in pca.components:
            assert row[np.argmax(np.abs(row))] > 0

    def test_rank_deficient_rejected(self):
        X = np.tile(np.arange(5.0), (10, 1)) * np.arange(1.0, 11.0)[:, None]
        with pytest.raises(ValueError, match="rank"):
            fit_pca(X)


class TestPipelineModel:
    def _fit(self, seed=25):
        X, y = make_blobs(seed=seed, n=300, d=6)
        return fit_pipeline(X, y, schema_hash="abc123", training_meta={"dataset": "blobs"}), X, y

    def test_json_round_trip_exact(self, tmp_path):
        model, X, _ = self._fit()
        save_model_json(model, tmp_path / "model.json")
        again = load_model_json(tmp_path / "model.json")
        assert np.array_equal(again.logistic.weights, model.logistic.weights)
        assert np.array_equal(again.logistic.biases, model.logistic.biases)
        assert np.array_equal(again.quantile.references, model.quantile.references)
        assert again.schema_hash == model.schema_hash
        assert again.training_meta == model.training_meta
        np.testing.assert_array_equal(again.predict_proba(X), model.predict_proba(X))

    def test_schema_hash_checked_at_predict(self):
        model, X, _ = self._fit()
        with pytest.raises(ValueError, match="schema"):
            model.predict_proba(X, schema_hash="something-else")
        model.predict_proba(X, schema_hash="abc123")

    def test_predict_invariant_under_monotone_column_transform(self):
        # with 101 training rows every row sits exactly on a quantile knot, so
        # rank statistics fully determine the transformed matrix
        rng = np.random.default_rng(26)
        X = rng.standard_normal((101, 4))
        y = rng.integers(0, 5, size=101)
        y[:5] = np.arange(5)
        warped = np.exp(3.0 * X)
        a = fit_pipeline(X, y, schema_hash="s")
        b = fit_pipeline(warped, y, schema_hash="s")
        np.testing.assert_allclose(
            apply_quantile(a.quantile, X), apply_quantile(b.quantile, warped), atol=1e-12
        )
        assert np.array_equal(a.predict(X), b.predict(warped))
