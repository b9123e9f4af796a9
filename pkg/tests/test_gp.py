import numpy as np
import pytest

from gpbarrier import benchmark, dynamics, gp


def _random_instance(rng, dim, n):
    """Training sets carry one measured output per state coordinate."""
    kernels = [gp.KernelSpec(float(rng.uniform(0.5, 5.0)),
                             rng.uniform(0.3, 2.0, dim)) for _ in range(dim)]
    X = rng.uniform(-2.0, 2.0, (n, dim))
    Y = rng.normal(0.0, 1.0, (n, dim))
    noise = float(rng.uniform(0.1, 0.5))
    return kernels, X, Y, noise


def _dense_mean_var(kernel, X, y, noise, Xq):
    """Textbook posterior by direct dense solve, no Cholesky, no jitter."""
    K = gp.kernel_eval(kernel, X)
    A = K + noise**2 * np.eye(len(X))
    Kq = gp.kernel_eval(kernel, Xq, X)
    mean = Kq @ np.linalg.solve(A, y)
    var = kernel.signal_var - np.einsum(
        "qn,nq->q", Kq, np.linalg.solve(A, Kq.T))
    return mean, var


class TestKernel:
    def test_hand_value(self):
        # s^2 exp(-sum (xd - xd')^2 / (2 ld^2)) at unit separation
        k = gp.KernelSpec(2.0, [1.0])
        K = gp.kernel_eval(k, np.array([[0.0]]), np.array([[1.0]]))
        assert K[0, 0] == pytest.approx(2.0 * np.exp(-0.5), rel=1e-14)

    def test_anisotropic_lengthscales(self):
        k = gp.KernelSpec(1.0, [1.0, 10.0])
        a = np.array([[0.0, 0.0]])
        K = gp.kernel_eval(k, a, np.array([[1.0, 0.0]]))
        K2 = gp.kernel_eval(k, a, np.array([[0.0, 10.0]]))
        assert K[0, 0] == pytest.approx(np.exp(-0.5), rel=1e-14)
        assert K2[0, 0] == pytest.approx(np.exp(-0.5), rel=1e-14)

    def test_gram_exactly_symmetric(self):
        rng = np.random.default_rng(0)
        k = gp.KernelSpec(1.3, [0.7, 1.1, 0.4])
        X = rng.uniform(-1, 1, (40, 3))
        K = gp.kernel_eval(k, X)
        assert np.array_equal(K, K.T)
        assert np.allclose(np.diag(K), 1.3, rtol=1e-14)

    def test_validation(self):
        with pytest.raises(ValueError):
            gp.KernelSpec(-1.0, [1.0])
        with pytest.raises(ValueError):
            gp.KernelSpec(1.0, [0.0])


class TestPosterior:
    def test_matches_dense_solve(self):
        rng = np.random.default_rng(42)
        for _ in range(10):
            dim = int(rng.integers(1, 4))
            n = int(rng.integers(5, 40))
            kernels, X, Y, noise = _random_instance(rng, dim, n)
            data = dynamics.TrainingSet(X, Y, noise, 0)
            post = gp.fit_posterior(kernels, data)
            Xq = rng.uniform(-2.5, 2.5, (30, dim))
            got_mean = post.mean(Xq)
            got_var = post.variance(Xq)
            for j in range(dim):
                mean, var = _dense_mean_var(kernels[j], X, Y[:, j], noise, Xq)
                # normwise relative error: pointwise ratios are meaningless
                # where the mean crosses zero
                mean_err = np.abs(got_mean[:, j] - mean).max()
                var_err = np.abs(got_var[:, j] - var).max()
                assert mean_err <= 1e-8 * max(np.abs(mean).max(), 1e-6)
                assert var_err <= 1e-8 * max(var.max(), 1e-6)

    def test_interpolates_at_low_noise(self):
        rng = np.random.default_rng(1)
        X = rng.uniform(-1, 1, (12, 1))
        y = np.sin(3 * X[:, 0])
        data = dynamics.TrainingSet(X, y[:, None], 1e-4, 0)
        post = gp.fit_posterior([gp.KernelSpec(1.0, [0.5])], data)
        assert np.allclose(post.mean(X)[:, 0], y, atol=1e-3)
        assert post.variance(X).max() < 1e-4

    def test_reverts_to_prior_far_away(self):
        rng = np.random.default_rng(2)
        X = rng.uniform(-1, 1, (10, 1))
        data = dynamics.TrainingSet(X, rng.normal(size=(10, 1)), 0.1, 0)
        post = gp.fit_posterior([gp.KernelSpec(2.0, [0.3])], data)
        far = np.array([[50.0]])
        assert abs(post.mean(far)[0, 0]) < 1e-10
        assert post.variance(far)[0, 0] == pytest.approx(2.0, rel=1e-10)

    def test_prior_with_no_data(self):
        post = gp.fit_posterior([gp.KernelSpec(3.0, [1.0])], None,
                                noise_std=0.0)
        assert post.is_prior
        Xq = np.array([[0.0], [5.0]])
        assert np.array_equal(post.mean(Xq), np.zeros((2, 1)))
        assert np.allclose(post.variance(Xq), 3.0)
        assert post.rkhs_mean_norm(0) == 0.0

    def test_multi_output_independent_heads(self):
        # output j depends only on kernel j and column j of Y
        rng = np.random.default_rng(3)
        X = rng.uniform(-1, 1, (15, 2))
        Y = rng.normal(size=(15, 2))
        kernels = [gp.KernelSpec(1.0, [0.5, 0.5]), gp.KernelSpec(4.0, [1.0, 2.0])]
        post = gp.fit_posterior(kernels, dynamics.TrainingSet(X, Y, 0.1, 0))
        Y2 = Y.copy()
        Y2[:, 0] = rng.normal(size=15)
        post2 = gp.fit_posterior(kernels, dynamics.TrainingSet(X, Y2, 0.1, 0))
        Xq = rng.uniform(-1, 1, (8, 2))
        assert np.array_equal(post.mean(Xq)[:, 1], post2.mean(Xq)[:, 1])
        assert not np.array_equal(post.mean(Xq)[:, 0], post2.mean(Xq)[:, 0])
        assert np.array_equal(post.variance(Xq), post2.variance(Xq))

    def test_kernel_count_must_match_outputs(self):
        data = dynamics.TrainingSet(np.zeros((3, 2)), np.zeros((3, 2)), 0.1, 0)
        with pytest.raises(ValueError):
            gp.fit_posterior([gp.KernelSpec(1.0, [1.0, 1.0])], data)

    def test_extrapolation_warning(self):
        box = dynamics.Box([-1.0], [1.0])
        rng = np.random.default_rng(4)
        X = rng.uniform(-1, 1, (5, 1))
        data = dynamics.TrainingSet(X, np.zeros((5, 1)), 0.1, 0)
        post = gp.fit_posterior([gp.KernelSpec(1.0, [1.0])], data,
                                state_box=box)
        with pytest.warns(gp.ExtrapolationWarning):
            post.mean(np.array([[2.0]]))
        import warnings
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            post.mean(np.array([[0.5]]))

    def test_rkhs_mean_norm(self):
        # alpha' K alpha with alpha = A^{-1} y, computed densely
        rng = np.random.default_rng(5)
        kernels, X, Y, noise = _random_instance(rng, 2, 20)
        post = gp.fit_posterior(kernels, dynamics.TrainingSet(X, Y, noise, 0))
        for j in range(2):
            K = gp.kernel_eval(kernels[j], X)
            alpha = np.linalg.solve(K + noise**2 * np.eye(20), Y[:, j])
            assert post.rkhs_mean_norm(j) == pytest.approx(
                float(np.sqrt(alpha @ K @ alpha)), rel=1e-8)


class TestCholeskyJitter:
    def test_clean_matrix_gets_minimal_jitter(self):
        A = np.eye(4) + 0.1
        L, jitter = gp._chol_with_jitter(A)
        assert jitter == 1e-10
        assert np.allclose(L @ L.T, A + jitter * np.eye(4))

    def test_escalation_on_near_singular(self):
        # eigenvalue -1e-7 defeats jitters below 1e-7; where exactly the
        # factorization starts to succeed is a LAPACK boundary case, so
        # only the escalation itself is pinned
        q = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2.0)
        A = q @ np.diag([1.0, -1e-7]) @ q.T
        A = 0.5 * (A + A.T)
        L, jitter = gp._chol_with_jitter(A)
        assert 1e-8 < jitter <= 1e-6

    def test_indefinite_raises(self):
        A = np.array([[1.0, 2.0], [2.0, 1.0]])  # eigenvalues 3, -1
        with pytest.raises(gp.IllConditionedError):
            gp._chol_with_jitter(A)


class TestHyperparameterFit:
    def test_nll_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(6)
        X = rng.uniform(-1, 1, (25, 2))
        y = np.sin(X[:, 0]) + 0.1 * rng.normal(size=25)
        theta = np.log(np.array([0.8, 0.6, 1.3]))
        _, grad = gp._nll_and_grad(theta, X, y, 0.01)
        for i in range(3):
            e = np.zeros(3)
            e[i] = 1e-6
            hi, _ = gp._nll_and_grad(theta + e, X, y, 0.01)
            lo, _ = gp._nll_and_grad(theta - e, X, y, 0.01)
            fd = (hi - lo) / 2e-6
            assert grad[i] == pytest.approx(fd, rel=1e-5, abs=1e-7)

    def test_recovers_synthetic_lengthscale(self):
        # sample a function from a known kernel, fit, check the scale back
        rng = np.random.default_rng(7)
        true = gp.KernelSpec(4.0, [0.5])
        X = np.sort(rng.uniform(-2, 2, (40, 1)), axis=0)
        K = gp.kernel_eval(true, X) + 1e-12 * np.eye(40)
        y = np.linalg.cholesky(K) @ rng.normal(size=40)
        data = dynamics.TrainingSet(X, y[:, None], 0.01, 0)
        kernels, info = gp.fit_hyperparameters(data, seed=0)
        assert len(kernels) == 1
        fit_l = kernels[0].lengthscales[0]
        assert 0.25 < fit_l < 1.0
        assert np.isfinite(info["nll"][0])

    def test_requires_positive_noise(self):
        data = dynamics.TrainingSet(np.zeros((3, 1)), np.zeros((3, 1)), 0.0, 0)
        with pytest.raises(gp.HyperparameterFitError):
            gp.fit_hyperparameters(data)

    def test_fit_is_seeded(self):
        rng = np.random.default_rng(8)
        X = rng.uniform(-1, 1, (15, 1))
        y = np.tanh(2 * X)
        data = dynamics.TrainingSet(X, y, 0.05, 0)
        a, _ = gp.fit_hyperparameters(data, seed=3, n_restarts=2)
        b, _ = gp.fit_hyperparameters(data, seed=3, n_restarts=2)
        assert a[0].signal_var == b[0].signal_var
        assert np.array_equal(a[0].lengthscales, b[0].lengthscales)


class TestStdBound:
    def test_prior_bound_is_signal_std(self):
        post = gp.fit_posterior([gp.KernelSpec(4.0, [1.0, 1.0])], None,
                                noise_std=0.0)
        bound = gp.max_std_bound(post, dynamics.Box([0, 0], [1, 1]))
        assert bound.values[0] == pytest.approx(2.0, rel=1e-9)

    def test_bound_dominates_dense_sampling(self, jet):
        posterior, _, _, problem = jet
        bound = gp.max_std_bound(posterior, problem.state_box, per_dim=201)
        rng = np.random.default_rng(11)
        pts = problem.state_box.sample(rng, 4000)
        stds = posterior.std(pts)
        for j in range(2):
            assert stds[:, j].max() <= bound.values[j] + 1e-12
        assert (bound.margins > 0).all()

    def test_grid_and_branch_bound_agree(self, jet):
        posterior, _, _, problem = jet
        grid = gp.max_std_bound(posterior, problem.state_box, per_dim=201)
        bnb = gp.max_std_bound(posterior, problem.state_box, mode="interval-bnb",
                               tol=1e-4)
        for j in range(2):
            # both are upper bounds on the same supremum, tight to their tol
            attained = max(grid.values[j] - grid.margins[j], 0.0)
            assert bnb.values[j] >= attained
            assert bnb.values[j] <= grid.values[j] + 1e-3

    def test_benchmark_regression_value(self, jet):
        # frozen from a verified run of this configuration
        posterior, _, _, problem = jet
        bound = gp.max_std_bound(posterior, problem.state_box, per_dim=201)
        assert bound.values.max() == pytest.approx(0.03577089, abs=1e-6)

    def test_refinement_tightens(self, jet):
        posterior, _, _, problem = jet
        coarse = gp.max_std_bound(posterior, problem.state_box, per_dim=51)
        fine = gp.max_std_bound(posterior, problem.state_box, per_dim=201)
        assert (fine.values <= coarse.values + 1e-12).all()


class TestModelSerialization:
    def test_round_trip_bit_identical(self, tmp_path, jet):
        posterior, _, _, problem = jet
        path = tmp_path / "model.json"
        gp.save_model(posterior, path)
        loaded = gp.load_model(path)
        rng = np.random.default_rng(12)
        Xq = problem.state_box.sample(rng, 200)
        assert np.array_equal(loaded.mean(Xq), posterior.mean(Xq))
        assert np.array_equal(loaded.variance(Xq), posterior.variance(Xq))

    def test_tampered_alphas_rejected(self, tmp_path, jet):
        import json
        posterior, _, _, _ = jet
        path = tmp_path / "model.json"
        gp.save_model(posterior, path)
        blob = json.loads(path.read_text())
        blob["alphas"][0][0] = blob["alphas"][0][0] + 1.0
        path.write_text(json.dumps(blob))
        with pytest.raises(gp.IllConditionedError):
            gp.load_model(path)
