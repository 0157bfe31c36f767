import json
import unittest

import numpy as np

from dpci.demand_model import DemandFamily, FeatureMap, ModelSpec, design_matrix, default_logistic_spec
from dpci.estimator import pilot_sequence
from dpci.inference import (
    ConfidenceBand,
    DebiasedEstimate,
    SingularInformationError,
    WaldFit,
    debias,
    decompose_error,
    empirical_quantile,
    normalized_errors,
    pointwise_ci,
    uniform_ci,
    uniform_grid,
    uniform_halfwidths,
    wald_ci,
    wald_fit,
    wald_uniform_ci,
)
from dpci.linalg_kernel import mvn_sample
from dpci.pricing_env import ContextProcess, History, Policy, run_episode
from dpci.whitening import default_eta, whiten, whiten_gradients


def scalar_spec(noise_std=0.0):
    """One-parameter linear model f(p) = theta p."""
    return ModelSpec(
        DemandFamily("linear", noise_std=noise_std), FeatureMap(kind="concat", context_dim=0), theta0=[1.0]
    )


def fixed_estimate(spec, theta, cov):
    theta = np.asarray(theta, dtype=float)
    return DebiasedEstimate(
        theta_d=theta,
        theta_p=theta,
        whitening=None,
        D_hat=np.zeros(0),
        cov_hat=np.asarray(cov, dtype=float),
        residuals=np.zeros(0),
        spec=spec,
    )


class Debias_Tester(unittest.TestCase):
    def setUp(self):
        self.spec = scalar_spec()
        self.history = History([1.0, 1.0, 1.0], np.zeros((3, 0)), [1.0, 0.7, 7.8], 1)

    def test_hand_instance(self):
        w = whiten_gradients(np.ones((3, 1)), eta=0.5)
        est = debias([0.8], w, self.history, self.spec)
        np.testing.assert_allclose(est.residuals, [0.2, -0.1, 7.0], atol=1e-12)
        self.assertAlmostEqual(est.theta_d[0], 0.85, places=12)

    def test_zero_correction(self):
        w = whiten_gradients(np.ones((3, 1)), eta=0.5)
        history = History([1.0, 1.0, 1.0], np.zeros((3, 0)), [0.8, 0.8, 0.8], 1)
        est = debias([0.8], w, history, self.spec)
        np.testing.assert_equal(est.theta_d, est.theta_p)

    def test_zero_whitening_flags_covariance(self):
        w = whiten_gradients(np.zeros((3, 1)), eta=0.5)
        with self.assertLogs("dpci.inference", level="WARNING"):
            est = debias([0.8], w, self.history, self.spec)
        np.testing.assert_equal(est.theta_d, [0.8])
        self.assertTrue(est.cov_clipped)

    def test_shape_mismatch(self):
        w = whiten_gradients(np.ones((2, 1)), eta=0.5)
        with self.assertRaises(ValueError):
            debias([0.8], w, self.history, self.spec)

    def test_identity_on_episode(self):
        spec = default_logistic_spec()
        history = run_episode(spec, Policy(), ContextProcess(), 150, seed=3)
        pilots = pilot_sequence(history, spec)
        w = whiten(history, pilots, spec, default_eta(150))
        est = debias(pilots.final, w, history, spec)
        np.testing.assert_allclose(est.theta_d - est.theta_p, w.W @ est.residuals, atol=1e-12)
        np.testing.assert_allclose(est.cov_hat, est.cov_hat.T)
        f = 1.0 / (1.0 + np.exp(-design_matrix(spec, history.prices, history.contexts) @ pilots.final))
        np.testing.assert_allclose(est.D_hat, f * (1 - f), rtol=1e-10)


class Pointwise_Tester(unittest.TestCase):
    def setUp(self):
        self.spec = ModelSpec(DemandFamily("linear"), FeatureMap(kind="concat"), theta0=[1.0, 2.0])

    def test_identity_covariance(self):
        est = fixed_estimate(self.spec, [0.3, -0.4], np.eye(2))
        band = pointwise_ci(est, 1.0, [0.0], 0.05)
        self.assertAlmostEqual(band.upper - 0.3, 1.959963984540054, places=8)
        self.assertAlmostEqual(0.3 - band.lower, 1.959963984540054, places=8)
        self.assertEqual(band.kind, "pointwise")
        self.assertAlmostEqual(band.metadata["std"], 1.0)
        self.assertTrue(band.contains(1.5))
        self.assertFalse(band.contains(2.3))
        self.assertEqual(band.query, (1.0, (0.0,)))

    def test_saturated_gradient(self):
        spec = ModelSpec(theta0=[0.0, 1000.0])
        est = fixed_estimate(spec, spec.theta0, np.eye(2))
        band = pointwise_ci(est, 0.5, [1.0], 0.1)
        self.assertEqual(band.lower, band.upper)
        self.assertEqual(band.width, 0.0)

    def test_invalid_alpha(self):
        est = fixed_estimate(self.spec, [0.3, -0.4], np.eye(2))
        for alpha in (0.0, 1.0, -0.2):
            with self.assertRaises(ValueError):
                pointwise_ci(est, 1.0, [0.0], alpha)

    def test_not_psd(self):
        est = fixed_estimate(self.spec, [0.3, -0.4], -np.eye(2))
        with self.assertRaises(np.linalg.LinAlgError):
            pointwise_ci(est, 1.0, [0.0], 0.05)

    def test_band_validation(self):
        with self.assertRaises(ValueError):
            ConfidenceBand(kind="pointwise", alpha=0.1, lower=1.0, upper=0.0)
        band = ConfidenceBand(kind="pointwise", alpha=0.1, lower=0.0, upper=1.0, query=(0.5, (0.0,)))
        out = json.loads(band.to_json())
        self.assertEqual(out["center"], 0.5)
        self.assertEqual(out["query"], {"p": 0.5, "x": [0.0]})


class Uniform_Tester(unittest.TestCase):
    def setUp(self):
        self.spec = scalar_spec()
        self.single = (np.array([1.0]), np.zeros((1, 0)))

    def test_grid(self):
        prices, contexts = uniform_grid(default_logistic_spec(), 3, 5)
        self.assertEqual(prices.shape, (15,))
        self.assertEqual(contexts.shape, (15, 1))
        self.assertEqual(contexts.min(), -1.0)
        prices, contexts = uniform_grid(self.spec, 4)
        self.assertEqual(contexts.shape, (4, 0))

    def test_zero_covariance(self):
        est = fixed_estimate(self.spec, [1.0], np.zeros((1, 1)))
        with self.assertWarns(UserWarning):
            band = uniform_ci(est, 0.1, 200, self.single, None, np.random.default_rng(0))
        # eigenvalues are lifted to 1e-12, so the band is at most a few 1e-6 wide
        self.assertGreater(band.half_width, 0.0)
        self.assertLess(band.half_width, 1e-5)
        self.assertTrue(band.contains(0.7, 0.7, np.zeros(0)))

    def test_single_point_matches_draws(self):
        est = fixed_estimate(self.spec, [1.0], np.eye(1))
        band = uniform_ci(est, 0.05, 5000, self.single, None, np.random.default_rng(4))
        draws = mvn_sample(np.zeros(1), np.eye(1), np.random.default_rng(4), size=5000)
        self.assertEqual(band.half_width, empirical_quantile(np.abs(draws[:, 0]), 0.95))
        self.assertEqual(band.width, 2 * band.half_width)

    def test_single_point_normal_quantile(self):
        est = fixed_estimate(self.spec, [1.0], np.eye(1))
        band = uniform_ci(est, 0.05, 50000, self.single, None, np.random.default_rng(1))
        self.assertAlmostEqual(band.half_width, 1.959963984540054, delta=0.06)

    def test_sup_dominates_pointwise(self):
        spec = default_logistic_spec()
        est = fixed_estimate(spec, spec.theta0, np.diag([0.02, 0.01]))
        grid = uniform_grid(spec, 11, 21)
        s = uniform_halfwidths(est, [0.1, 0.05], 2000, grid, np.random.default_rng(2))
        self.assertLess(s[0.1], s[0.05])
        half = max(pointwise_ci(est, p, x, 0.1).width / 2 for p, x in zip(*grid))
        self.assertGreaterEqual(s[0.1], 0.9 * half)

    def test_draw_count(self):
        est = fixed_estimate(self.spec, [1.0], np.eye(1))
        with self.assertRaises(ValueError):
            uniform_ci(est, 0.05, 99, self.single, None, np.random.default_rng(0))
        with self.assertRaises(ValueError):
            uniform_halfwidths(est, [0.05], 0, self.single, np.random.default_rng(0))
        with self.assertRaises(ValueError):
            uniform_ci(est, 0.05, 100, (np.zeros(0), np.zeros((0, 0))), None, np.random.default_rng(0))


class Wald_Tester(unittest.TestCase):
    def setUp(self):
        self.spec = ModelSpec(
            DemandFamily("linear", noise_std=0.5),
            FeatureMap(kind="concat"),
            theta0=[1.0, 0.5],
            price_range=(-1.0, 1.0),
        )
        prices = np.array([1.0, 1.0, -1.0, -1.0])
        contexts = np.array([[1.0], [-1.0], [1.0], [-1.0]])
        noise = np.array([0.1, -0.2, 0.3, 0.0])
        demands = design_matrix(self.spec, prices, contexts) @ self.spec.theta0 + noise
        self.history = History(prices, contexts, demands, 2)

    def test_orthogonal_design(self):
        fit = wald_fit(self.history, self.spec)
        np.testing.assert_allclose(fit.theta, [0.9, 0.65], atol=1e-12)
        np.testing.assert_allclose(fit.cov, 0.0625 * np.eye(2), atol=1e-12)
        np.testing.assert_allclose(fit.information, 16 * np.eye(2), atol=1e-10)

    def test_interval(self):
        band = wald_ci(self.history, self.spec, 1.0, [0.0], 0.05)
        self.assertEqual(band.kind, "wald_pointwise")
        self.assertAlmostEqual(band.upper - 0.9, 0.25 * 1.959963984540054, places=10)

    def test_uniform(self):
        grid = uniform_grid(self.spec, 5, 5)
        band = wald_uniform_ci(self.history, self.spec, 0.1, 500, grid, np.random.default_rng(0))
        self.assertEqual(band.metadata["method"], "wald")
        self.assertGreater(band.half_width, 0.0)

    def test_singular(self):
        history = History([0.5, 0.5, 0.5], [[0.0], [0.0], [0.0]], [0.1, 0.2, 0.3], 2)
        spec = ModelSpec(DemandFamily("linear", noise_std=0.5), FeatureMap(kind="concat"), theta0=[1.0, 0.5])
        with self.assertRaises(SingularInformationError) as ctx:
            wald_fit(history, spec)
        self.assertIn("condition number", str(ctx.exception))

    def test_separable_logistic(self):
        spec = default_logistic_spec()
        history = History([0.1, 0.2, 0.8, 0.9], [[-1.0], [-0.5], [0.5], [1.0]], [0.0, 0.0, 1.0, 1.0], 2)
        with self.assertRaises(SingularInformationError):
            wald_fit(history, spec)


class Errors_Tester(unittest.TestCase):
    def test_zero_error_at_truth(self):
        spec = default_logistic_spec()
        fit = WaldFit(theta=spec.theta0, information=100 * np.eye(2), cov=0.01 * np.eye(2), spec=spec)
        errors = normalized_errors(fit, spec.theta0, None, [(0.5, (0.0,)), (1.0, (1.0,))])
        self.assertEqual(errors.method, "wald")
        np.testing.assert_allclose(errors.estimation, 0.0, atol=1e-15)
        np.testing.assert_allclose(errors.prediction, 0.0, atol=1e-15)

    def test_standardization(self):
        spec = ModelSpec(DemandFamily("linear"), FeatureMap(kind="concat"), theta0=[0.0, 0.0])
        est = fixed_estimate(spec, [0.2, -0.3], np.diag([0.04, 0.09]))
        errors = normalized_errors(est, spec.theta0, None, [(1.0, (0.0,))])
        np.testing.assert_allclose(errors.estimation, [1.0, -1.0], atol=1e-12)
        np.testing.assert_allclose(errors.prediction, [1.0], atol=1e-12)

    def test_empirical_quantile(self):
        values = [3.0, 1.0, 2.0, 5.0, 4.0]
        self.assertEqual(empirical_quantile(values, 0.5), 3.0)
        self.assertEqual(empirical_quantile(values, 0.9), 5.0)
        self.assertEqual(empirical_quantile(values, 0.2), 1.0)
        self.assertEqual(empirical_quantile(np.arange(1, 101), 0.95), 95.0)
        with self.assertRaises(ValueError):
            empirical_quantile([], 0.5)
        with self.assertRaises(ValueError):
            empirical_quantile(values, 1.0)


class Decompose_Tester(unittest.TestCase):
    def _estimate(self, spec, T, seed):
        history = run_episode(spec, Policy(epsilon=0.2), ContextProcess(), T, seed=seed)
        pilots = pilot_sequence(history, spec)
        w = whiten(history, pilots, spec, default_eta(T))
        return history, debias(pilots.final, w, history, spec)

    def test_linear_remainder_vanishes(self):
        spec = ModelSpec(DemandFamily("linear", noise_std=0.3), theta0=[1.0, -0.5])
        history, est = self._estimate(spec, 200, 4)
        linear, noise, remainder = decompose_error(est, history, spec, spec.theta0)
        np.testing.assert_allclose(remainder, 0.0, atol=1e-10)
        np.testing.assert_allclose(linear + noise, est.theta_d - spec.theta0, atol=1e-10)

    def test_logistic_remainder_is_second_order(self):
        spec = default_logistic_spec()
        history, est = self._estimate(spec, 300, 9)
        _, _, remainder = decompose_error(est, history, spec, spec.theta0)
        err = np.linalg.norm(est.theta_p - spec.theta0)
        phi_sq = np.sum(design_matrix(spec, history.prices, history.contexts) ** 2, axis=1)
        # |sigmoid''| <= 0.0963
        bound = np.sum(est.whitening.column_norms * 0.5 * 0.0963 * phi_sq) * err ** 2
        self.assertLessEqual(np.linalg.norm(remainder), bound + 1e-12)


suite = unittest.TestSuite()
test_classes = [
    Debias_Tester,
    Pointwise_Tester,
    Uniform_Tester,
    Wald_Tester,
    Errors_Tester,
    Decompose_Tester,
]
for i in test_classes:
    a = unittest.TestLoader().loadTestsFromTestCase(i)
    suite.addTest(a)
del i

if __name__ == "__main__":
    runner = unittest.TextTestRunner()
    runner.run(suite)
