import os
import tempfile
import unittest

import numpy as np

from dpci.demand_model import (
    DemandFamily,
    ModelSpec,
    default_logistic_spec,
    design_matrix,
    mean_demand,
)
from dpci.pricing_env import (
    ContextProcess,
    History,
    Policy,
    epsilon_greedy_price,
    exploit_price,
    next_context,
    run_episode,
    ucb_price,
)


class Pricing_Tester(unittest.TestCase):
    def setUp(self):
        self.spec = default_logistic_spec()

    def test_exploit_price(self):
        # revenue p * sigmoid(-(0.9 + 0.1 p)) increases on [0, 1]
        self.assertEqual(exploit_price(self.spec.theta0, [0.0], self.spec), 1.0)

    def test_exploit_ties_go_to_smaller_price(self):
        linear = ModelSpec(DemandFamily("linear"), theta0=[1.0, 0.0], price_range=(0.2, 0.8))
        self.assertEqual(exploit_price(np.zeros(2), [0.0], linear), 0.2)

    def test_epsilon_greedy(self):
        rng = np.random.default_rng(0)
        self.assertEqual(epsilon_greedy_price(self.spec.theta0, [0.0], self.spec, 0.0, rng), 1.0)
        prices = [epsilon_greedy_price(self.spec.theta0, [0.0], self.spec, 1.0, rng) for _ in range(200)]
        self.assertTrue(all(0.0 <= p <= 1.0 for p in prices))
        self.assertGreater(len(set(prices)), 100)

    def test_pure_exploration_mean(self):
        rng = np.random.default_rng(8)
        prices = np.array(
            [epsilon_greedy_price(self.spec.theta0, [0.0], self.spec, 1.0, rng) for _ in range(100000)]
        )
        self.assertAlmostEqual(prices.mean(), 0.5, delta=0.01)
        self.assertTrue(np.all((prices >= 0.0) & (prices <= 1.0)))

    def test_ucb_without_uncertainty_exploits(self):
        V = 1e12 * np.eye(2)
        for x in (-1.0, 0.0, 0.5):
            self.assertEqual(
                ucb_price(self.spec.theta0, V, [x], self.spec, 1.0, 10),
                exploit_price(self.spec.theta0, [x], self.spec),
            )

    def test_ucb_literal_max(self):
        V = 1e12 * np.eye(2)
        price = ucb_price(np.array([-3.0, 0.0]), V, [0.0], self.spec, 1.0, 10, literal_max=True)
        self.assertEqual(price, 1.0)

    def test_ucb_bonus_active_in_first_period(self):
        # with theta_hat = 0 and V = I the bonus alone decides the price
        price = ucb_price(np.zeros(2), np.eye(2), [0.0], self.spec, 5.0, 1)
        self.assertEqual(price, 1.0)


class ContextProcess_Tester(unittest.TestCase):
    def test_walk(self):
        proc = ContextProcess()
        np.testing.assert_equal(proc.initial_context(), [0.0])
        np.testing.assert_allclose(next_context(proc, 0.5, 1.0, 0.3), [0.7])
        np.testing.assert_allclose(next_context(proc, 0.5, 1.0, 0.3), [1.0])
        np.testing.assert_allclose(proc.state, [1.4])
        np.testing.assert_allclose(next_context(proc, 0.5, 0.0, 0.9), [0.5])

    def test_iid(self):
        proc = ContextProcess(kind="iid_uniform", dim=3, clip_bound=2.0)
        rng = np.random.default_rng(3)
        x = next_context(proc, 0.5, 1.0, 0.2, rng)
        self.assertEqual(x.shape, (3,))
        self.assertTrue(np.all(np.abs(x) <= 2.0))
        with self.assertRaises(ValueError):
            next_context(proc, 0.5, 1.0, 0.2)

    def test_invalid(self):
        with self.assertRaises(ValueError):
            ContextProcess(kind="ar1")
        with self.assertRaises(ValueError):
            Policy(kind="thompson")
        with self.assertRaises(ValueError):
            Policy(epsilon=1.5)


class Episode_Tester(unittest.TestCase):
    def setUp(self):
        self.spec = default_logistic_spec()

    def test_episode(self):
        for policy in (Policy(), Policy(kind="ucb"), Policy(kind="fixed_random")):
            history = run_episode(self.spec, policy, ContextProcess(), 150, seed=1)
            self.assertEqual(len(history), 150)
            self.assertEqual(history.contexts.shape, (150, 1))
            self.assertTrue(np.all((history.prices >= 0.0) & (history.prices <= 1.0)))
            self.assertTrue(np.all(np.abs(history.contexts) <= 1.0))
            history.validate(self.spec)

    def test_deterministic(self):
        a = run_episode(self.spec, Policy(), ContextProcess(), 100, seed=5)
        b = run_episode(self.spec, Policy(), ContextProcess(), 100, seed=5)
        c = run_episode(self.spec, Policy(), ContextProcess(), 100, seed=6)
        np.testing.assert_equal(a.prices, b.prices)
        np.testing.assert_equal(a.demands, b.demands)
        np.testing.assert_equal(a.contexts, b.contexts)
        self.assertFalse(np.array_equal(a.demands, c.demands))

    def test_replayed_prefix(self):
        full = run_episode(self.spec, Policy(), ContextProcess(), 120, seed=13)
        short = run_episode(self.spec, Policy(), ContextProcess(), 70, seed=13)
        prefix = full.prefix(70)
        np.testing.assert_equal(short.prices, prefix.prices)
        np.testing.assert_equal(short.contexts, prefix.contexts)
        np.testing.assert_equal(short.demands, prefix.demands)
        np.testing.assert_equal(short.policy_fits.thetas, prefix.policy_fits.thetas)

    def test_walk_uses_only_past_shocks(self):
        history = run_episode(self.spec, Policy(), ContextProcess(), 200, seed=3)
        f = mean_demand(self.spec, self.spec.theta0, history.prices, history.contexts)
        z = np.cumsum(history.demands - f)[:-1]
        self.assertEqual(history.contexts[0, 0], 0.0)
        np.testing.assert_allclose(history.contexts[1:, 0], z / np.maximum(1.0, np.abs(z)), atol=1e-12)

    def test_exploration_excites_features(self):
        T = 2000
        history = run_episode(
            self.spec, Policy(epsilon=1.0), ContextProcess(kind="iid_uniform"), T, seed=21
        )
        phi = design_matrix(self.spec, history.prices, history.contexts)
        self.assertGreater(np.linalg.eigvalsh(phi.T @ phi / T)[0], 0.01)

    def test_policy_fits(self):
        T = 80
        history = run_episode(self.spec, Policy(), ContextProcess(), T, seed=1)
        fits = history.policy_fits
        self.assertEqual(fits.thetas.shape, (T, 2))
        self.assertTrue(np.all(np.isnan(fits.thetas[0])))
        self.assertEqual(int(np.isfinite(fits.grad_norms).sum()), T - 1 - history.fallback_count)
        self.assertEqual(fits.ridge, 1e-4)
        self.assertEqual(history.prefix(30).policy_fits.thetas.shape, (30, 2))
        idle = run_episode(self.spec, Policy(kind="fixed_random"), ContextProcess(), T, seed=1)
        self.assertTrue(np.all(np.isnan(idle.policy_fits.thetas)))

    def test_invalid_episode(self):
        with self.assertRaises(ValueError):
            run_episode(self.spec, Policy(), ContextProcess(), 0, seed=1)
        with self.assertRaises(ValueError):
            run_episode(self.spec, Policy(), ContextProcess(dim=2), 10, seed=1)


class History_Tester(unittest.TestCase):
    def setUp(self):
        self.history = run_episode(default_logistic_spec(), Policy(), ContextProcess(), 40, seed=2)

    def test_csv(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "history.csv")
            self.history.to_csv(path)
            loaded = History.from_csv(path, 2)
        np.testing.assert_equal(loaded.prices, self.history.prices)
        np.testing.assert_equal(loaded.contexts, self.history.contexts)
        np.testing.assert_equal(loaded.demands, self.history.demands)
        self.assertEqual(list(self.history.to_frame().columns), ["t", "p", "x1", "d"])

    def test_bytes(self):
        loaded = History.from_bytes(self.history.to_bytes())
        np.testing.assert_equal(loaded.contexts, self.history.contexts)
        self.assertEqual(loaded.fallback_count, self.history.fallback_count)

    def test_prefix_and_validation(self):
        self.assertEqual(len(self.history.prefix(10)), 10)
        with self.assertRaises(ValueError):
            History([0.1, 0.2], [[0.0]], [1.0, 0.0], 2)
        bad = History([0.5], [[0.0]], [0.5], 2)
        with self.assertRaises(ValueError):
            bad.validate(default_logistic_spec())


suite = unittest.TestSuite()
test_classes = [Pricing_Tester, ContextProcess_Tester, Episode_Tester, History_Tester]
for i in test_classes:
    a = unittest.TestLoader().loadTestsFromTestCase(i)
    suite.addTest(a)
del i

if __name__ == "__main__":
    runner = unittest.TextTestRunner()
    runner.run(suite)
