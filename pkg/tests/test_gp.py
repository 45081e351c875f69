import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mobo import gp
from mobo.gp import Hyperparams, condition, fit, kernel_eval, log_marginal_likelihood, predict
from mobo.optimizers import numeric_gradient

E05 = math.exp(-0.5)


def sample_gp(rng, N, lengthscale, signal=1.0, noise=0.01):
    X = rng.random((N, 1))
    K = signal ** 2 * np.exp(-0.5 * (X - X.T) ** 2 / lengthscale ** 2)
    y = np.linalg.cholesky(K + 1e-8 * np.eye(N)) @ rng.normal(size=N) + noise * rng.normal(size=N)
    return X, y


class TestKernel:
    def test_same_point(self):
        hp = Hyperparams(1.0, [0.3, 2.0], 0.0)
        assert kernel_eval([0.1, 0.2], [0.1, 0.2], hp) == 1.0

    def test_unit_distance(self):
        assert kernel_eval([0.0], [1.0], Hyperparams(1.0, [1.0])) == pytest.approx(0.60653, abs=1e-5)

    def test_noise_delta(self):
        hp = Hyperparams(1.0, [1.0], 0.1)
        assert kernel_eval([0.4], [0.4], hp, same_point=True) == pytest.approx(1.01, abs=1e-14)
        assert kernel_eval([0.4], [0.4], hp, same_point=False) == pytest.approx(1.0, abs=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            kernel_eval([0.0, 1.0], [0.0], Hyperparams(1.0, [1.0, 1.0]))
        with pytest.raises(ValueError):
            kernel_eval([0.0, 1.0], [0.0, 1.0], Hyperparams(1.0, [1.0]))

    @given(
        x=st.lists(st.floats(-5, 5), min_size=3, max_size=3),
        xp=st.lists(st.floats(-5, 5), min_size=3, max_size=3),
        ls=st.lists(st.floats(0.05, 10), min_size=3, max_size=3),
    )
    @settings(max_examples=50, deadline=None)
    def test_symmetry(self, x, xp, ls):
        hp = Hyperparams(1.3, ls)
        assert kernel_eval(x, xp, hp) == kernel_eval(xp, x, hp)

    def test_matrix_matches_pairwise(self, rng):
        hp = Hyperparams(1.7, [0.3, 1.1, 2.0])
        A, B = rng.random((5, 3)), rng.random((4, 3))
        K = gp.kernel_matrix(A, B, hp)
        ref = np.array([[kernel_eval(a, b, hp) for b in B] for a in A])
        np.testing.assert_allclose(K, ref, rtol=1e-12)

    def test_invalid_hyperparams(self):
        with pytest.raises(ValueError):
            Hyperparams(0.0, [1.0])
        with pytest.raises(ValueError):
            Hyperparams(1.0, [1.0, -1.0])
        with pytest.raises(ValueError):
            Hyperparams(1.0, [1.0], -0.1)

    def test_log_roundtrip(self):
        hp = Hyperparams(2.0, [0.5, 3.0], 0.01)
        back = Hyperparams.from_log(hp.to_log())
        assert back.signal_std == pytest.approx(2.0)
        np.testing.assert_allclose(back.lengthscales, [0.5, 3.0])
        assert back.noise_std == pytest.approx(0.01)


class TestLikelihood:
    def test_single_zero_target(self):
        val = log_marginal_likelihood([[0.0]], [0.0], Hyperparams(1.0, [1.0]))
        assert val == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-8)

    def test_two_zero_targets(self):
        hp = Hyperparams(1.4, [0.7], 0.2)
        X = np.array([[0.0], [0.5]])
        K = np.array([[kernel_eval(a, b, hp, same_point=i == j) for j, b in enumerate(X)] for i, a in enumerate(X)])
        expected = -0.5 * math.log(np.linalg.det(K)) - math.log(2 * math.pi)
        assert log_marginal_likelihood(X, [0.0, 0.0], hp) == pytest.approx(expected, abs=1e-8)

    def test_two_point_hand_solve(self):
        # K = [[1, e], [e, 1]], f = (0, 1): f'K^-1 f = 1/(1-e^2), |K| = 1-e^2
        det = 1 - E05 ** 2
        expected = -0.5 / det - 0.5 * math.log(det) - math.log(2 * math.pi)
        val = log_marginal_likelihood([[0.0], [1.0]], [0.0, 1.0], Hyperparams(1.0, [1.0], 0.0))
        assert val == pytest.approx(expected, abs=1e-8)

    def test_gradient_matches_finite_differences(self, rng):
        for _ in range(5):
            n = int(rng.integers(1, 4))
            X, y = rng.random((25, n)), rng.normal(size=25)
            theta = np.concatenate([[rng.uniform(-1, 1)], rng.uniform(-1.5, 0.5, n), [rng.uniform(-4, -1)]])
            analytic = gp.log_marginal_likelihood_grad(X, y, theta)
            fd = numeric_gradient(lambda t: log_marginal_likelihood(X, y, Hyperparams.from_log(t)), theta, h=1e-5)
            np.testing.assert_allclose(analytic, fd, rtol=1e-4, atol=1e-5)

    def test_non_pd_raises(self):
        with pytest.raises(gp.NonPDKernelError, match="non-PD"):
            gp._cholesky_with_jitter(-np.eye(3))

    def test_jitter_rescues_duplicates(self):
        X = np.array([[0.2], [0.2], [0.7]])
        m = condition(X, [1.0, 1.0, 0.0], Hyperparams(1.0, [0.3], 0.0))
        assert m.jitter > 0
        L = m.chol_factor
        K = gp.kernel_matrix(X, X, m.hyperparams) + m.jitter * np.eye(3)
        np.testing.assert_allclose(L @ L.T, K, rtol=1e-8)


class TestPredict:
    def test_two_point_dense_oracle(self):
        X, f = np.array([[0.0], [1.0]]), np.array([0.0, 1.0])
        K = np.array([[1.0, E05], [E05, 1.0]])
        k = np.array([math.exp(-0.125)] * 2)
        mean = k @ np.linalg.solve(K, f)
        var = 1.0 - k @ np.linalg.solve(K, k)
        p = predict(condition(X, f, Hyperparams(1.0, [1.0], 0.0)), [0.5])
        assert p.mean == pytest.approx(mean, abs=1e-7)
        assert p.std == pytest.approx(math.sqrt(var), abs=1e-6)

    def test_noiseless_interpolation(self, rng):
        X = rng.random((20, 2))
        y = np.sin(3 * X[:, 0]) + X[:, 1] ** 2
        m = condition(X, y, Hyperparams(1.0, [0.4, 0.4], 0.0))
        for x, t in zip(X, y):
            p = predict(m, x)
            assert abs(p.mean - t) < 1e-5
            assert p.std <= 1e-3

    def test_prior_reversion(self):
        m = condition([[0.0], [0.1]], [0.5, -0.3], Hyperparams(1.3, [0.2], 0.0))
        p = predict(m, [50.0])
        assert abs(p.mean) < 1e-3
        assert p.std == pytest.approx(1.3, abs=1e-3)

    def test_dimension_mismatch(self):
        m = condition([[0.0, 0.0], [1.0, 1.0]], [0.0, 1.0], Hyperparams(1.0, [1.0, 1.0]))
        with pytest.raises(ValueError):
            predict(m, [0.5])

    def test_variance_non_negative(self, rng):
        for seed in range(5):
            local = np.random.default_rng(seed)
            X = local.random((30, 3))
            y = local.normal(size=30)
            m = fit(X, y, restarts=2, rng=local)
            _, std = m.predict_batch(rng.uniform(-0.5, 1.5, (1000, 3)))
            assert np.all(std >= 0)

    def test_batch_matches_single(self, rng):
        X, y = rng.random((10, 2)), rng.normal(size=10)
        m = condition(X, y, Hyperparams(1.0, [0.5, 0.5], 0.05), standardise=True)
        Q = rng.random((4, 2))
        means, stds = m.predict_batch(Q)
        for q, mu, s in zip(Q, means, stds):
            p = predict(m, q)
            assert p.mean == pytest.approx(mu, rel=1e-12)
            assert p.std == pytest.approx(s, rel=1e-12)


class TestFit:
    def test_lengthscale_recovery(self):
        rng = np.random.default_rng(7)
        X, y = sample_gp(rng, 100, 0.5)
        m = fit(X, y, restarts=10, rng=rng)
        assert 0.25 <= m.hyperparams.lengthscales[0] <= 1.0

    def test_more_restarts_never_worse(self):
        for seed in range(3):
            X, y = sample_gp(np.random.default_rng(seed), 40, 0.3)
            one = fit(X, y, restarts=1, rng=np.random.default_rng(seed))
            ten = fit(X, y, restarts=10, rng=np.random.default_rng(seed))
            assert ten.log_likelihood >= one.log_likelihood - 1e-9

    def test_constant_targets(self, rng):
        X = rng.random((10, 2))
        m = fit(X, np.full(10, 3.0), restarts=2, rng=rng)
        p = predict(m, [0.5, 0.5])
        assert p.mean == pytest.approx(3.0, abs=1e-6)
        # far from the data the std reverts to the fitted signal level
        far = predict(m, [1e6, 1e6])
        assert far.std == pytest.approx(m.hyperparams.signal_std * m.y_scale, rel=1e-3)

    def test_input_rescaling(self, rng):
        X = rng.random((15, 1))
        y = np.sin(6 * X[:, 0])
        hp = Hyperparams(1.2, [0.3], 0.01)
        unit = condition(X, y, hp, standardise=True)
        scaled = condition(10 * X - 5, y, hp, bounds=[[-5, 5]], standardise=True)
        assert unit.log_likelihood == pytest.approx(scaled.log_likelihood, rel=1e-10)
        assert predict(unit, [0.3]).mean == pytest.approx(predict(scaled, [-2.0]).mean, abs=1e-9)
        # fitting on the rescaled box lands on an equivalent optimum
        a = fit(X, y, restarts=3, rng=np.random.default_rng(1))
        b = fit(10 * X - 5, y, restarts=3, rng=np.random.default_rng(1), bounds=[[-5, 5]])
        assert a.log_likelihood == pytest.approx(b.log_likelihood, rel=1e-2)

    def test_cholesky_reconstructs(self, rng):
        X, y = rng.random((20, 2)), rng.normal(size=20)
        m = fit(X, y, restarts=2, rng=rng)
        hp = m.hyperparams
        K = gp.kernel_matrix(m.train_inputs, m.train_inputs, hp) + (hp.noise_std ** 2 + m.jitter) * np.eye(20)
        np.testing.assert_allclose(m.chol_factor @ m.chol_factor.T, K, rtol=1e-8, atol=1e-12)

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            fit([[0.0]], [1.0])
        with pytest.raises(ValueError):
            fit([[0.0], [1.0]], [1.0, 2.0], restarts=0)

    def test_all_restarts_failing(self, monkeypatch, rng):
        def broken(*args, **kwargs):
            raise gp.NonPDKernelError("non-PD kernel matrix (forced)")

        monkeypatch.setattr(gp, "quasi_newton_maximise", broken)
        with pytest.raises(gp.GpFitError, match="forced"):
            fit(rng.random((5, 1)), rng.normal(size=5), restarts=3)
