import json
import tempfile
import unittest
from pathlib import Path

import numpy as np

from dpci.demand_model import DemandFamily, FeatureMap, ModelSpec
from dpci.harness import (
    ConfigError,
    ExperimentConfig,
    ExperimentError,
    bundled_configs,
    clopper_pearson,
    coverage_experiment,
    error_distribution_experiment,
    load_config,
    run_trial,
    scaling_experiment,
)
from dpci.pricing_env import ContextProcess, Policy
from dpci.utils import read_csv


def small_config(**overrides):
    settings = dict(
        name="small",
        T=150,
        n_trials=4,
        alphas=(0.3, 0.1),
        price_points=5,
        context_points=5,
        M=100,
        base_seed=11,
        max_failure_rate=1.0,
    )
    settings.update(overrides)
    return ExperimentConfig(**settings)


def stuck_context_config(**overrides):
    # noiseless demand never moves the walk, so the context column stays zero
    model = ModelSpec(DemandFamily("linear"), FeatureMap(kind="concat"), theta0=[1.0, 0.5])
    settings = dict(model=model, T=30, n_trials=2, uniform=False, max_failure_rate=0.1)
    settings.update(overrides)
    return small_config(**settings)


class Config_Tester(unittest.TestCase):
    def test_validation(self):
        with self.assertRaises(ConfigError):
            ExperimentConfig(T=0)
        with self.assertRaises(ConfigError):
            ExperimentConfig(alphas=(1.2,))
        with self.assertRaises(ConfigError):
            ExperimentConfig(M=50)
        self.assertEqual(ExperimentConfig(M=50, uniform=False).M, 50)
        with self.assertRaises(ConfigError):
            ExperimentConfig(context=ContextProcess(dim=2))
        with self.assertRaises(ConfigError):
            ExperimentConfig(queries=[(0.5, (0.0, 1.0))])
        with self.assertRaises(ConfigError):
            ExperimentConfig(workers=0)
        with self.assertRaises(ConfigError):
            ExperimentConfig(upsilon=0.5)
        with self.assertRaises(ConfigError):
            ExperimentConfig(pilot_min_curvature=-0.1)
        with self.assertRaises(ConfigError):
            ExperimentConfig(whitening_budget="adaptive")
        config = ExperimentConfig(pilot_min_curvature=0.01, whitening_budget="relative")
        rebuilt = ExperimentConfig.from_dict(config.to_dict())
        self.assertEqual((rebuilt.pilot_min_curvature, rebuilt.whitening_budget), (0.01, "relative"))

    def test_dict_round_trip(self):
        config = small_config(policy=Policy(kind="ucb"))
        rebuilt = ExperimentConfig.from_dict(config.to_dict())
        self.assertEqual(rebuilt.to_dict(), config.to_dict())
        self.assertNotIn("workers", config.to_dict(runtime=False))

    def test_from_dict_errors(self):
        with self.assertRaises(ConfigError):
            ExperimentConfig.from_dict({"T": 10, "horizon": 5})
        with self.assertRaises(ConfigError):
            ExperimentConfig.from_dict({"policy": {"kind": "thompson"}})
        with self.assertRaises(ConfigError):
            ExperimentConfig.from_dict({"queries": [[0.5]]})

    def test_overrides(self):
        config = small_config().with_overrides(T=None, n_trials=7)
        self.assertEqual((config.T, config.n_trials), (150, 7))
        with self.assertRaises(ConfigError):
            small_config().with_overrides(horizon=3)
        with self.assertRaises(ConfigError):
            small_config().with_overrides(T=-1)
        with self.assertRaises(ConfigError):
            small_config().with_overrides(base_seed=-1)
        self.assertEqual(small_config().with_overrides(base_seed=0).base_seed, 0)

    def test_bundled(self):
        names = bundled_configs()
        self.assertEqual(
            names, ["linear_noiseless", "logistic_walk", "logistic_walk_full", "logistic_walk_ucb"]
        )
        for name in names:
            config = load_config(name)
            self.assertEqual(config.name, name)
        self.assertEqual(load_config("logistic_walk").queries[1], (0.5, (1.0,)))
        self.assertEqual(load_config("logistic_walk_full").workers, -1)
        for name in ("logistic_walk", "logistic_walk_full", "logistic_walk_ucb"):
            config = load_config(name)
            self.assertEqual(config.whitening_budget, "relative")
            self.assertEqual(config.pilot_min_curvature, 0.001)
        self.assertEqual(load_config("linear_noiseless").whitening_budget, "absolute")

    def test_alias(self):
        alias = load_config("paper_logistic")
        self.assertEqual(alias.to_dict(), load_config("logistic_walk").to_dict())
        self.assertEqual(alias.name, "logistic_walk")

    def test_load_errors(self):
        with self.assertRaises(ConfigError):
            load_config("no_such_config")
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "bad.json"
            path.write_text("{not json")
            with self.assertRaises(ConfigError):
                load_config(path)
            path.write_text("[1, 2]")
            with self.assertRaises(ConfigError):
                load_config(path)


class Trial_Tester(unittest.TestCase):
    def test_deterministic(self):
        config = small_config()
        a, b = run_trial(config, 2), run_trial(config, 2)
        self.assertFalse(a.failed)
        self.assertEqual(a.cells, b.cells)
        self.assertEqual(a.errors, b.errors)
        self.assertNotEqual(run_trial(config, 3).cells, a.cells)

    def test_cells(self):
        config = small_config()
        record = run_trial(config, 0)
        # 3 queries x 2 levels point-wise, 2 uniform levels, for both methods
        self.assertEqual(len(record.cells), 2 * (3 * 2 + 2))
        self.assertEqual({c["method"] for c in record.cells}, {"debiased", "wald"})
        self.assertIn("uniform", {c["target"] for c in record.cells})
        self.assertEqual([e["method"] for e in record.errors], ["debiased", "wald"])
        self.assertIn("eps2", record.errors[0])
        self.assertIn("pred[p=0.5,x=(1)]", record.errors[0])
        self.assertIn("iwg_opnorm", record.diagnostics)

    def test_noiseless_linear_is_exact(self):
        config = load_config("linear_noiseless").with_overrides(n_trials=3)
        for i in range(config.n_trials):
            record = run_trial(config, i)
            self.assertFalse(record.failed)
            self.assertTrue(all(c["hit"] for c in record.cells))
            self.assertTrue(all(c["width"] < 1e-8 for c in record.cells))

    def test_failure_is_recorded(self):
        record = run_trial(stuck_context_config(), 0)
        self.assertTrue(record.failed)
        self.assertIn("SingularInformationError", record.error)
        self.assertFalse(run_trial(stuck_context_config(wald=False), 0).failed)


class Coverage_Tester(unittest.TestCase):
    def test_accounting(self):
        config = small_config()
        report = coverage_experiment(config)
        cells = report.cells
        self.assertEqual(len(cells), 2 * (3 + 1) * 2)
        np.testing.assert_array_equal(
            cells.hits + cells.misses + cells.failures, config.n_trials
        )
        self.assertTrue(np.all((cells.ci_lower <= cells.coverage) & (cells.coverage <= cells.ci_upper)))
        self.assertEqual(
            report.coverage("debiased", "uniform", 0.1),
            float(cells[(cells.method == "debiased") & (cells.target == "uniform") & (cells.alpha == 0.1)].coverage.iloc[0]),
        )
        with self.assertRaises(KeyError):
            report.coverage("debiased", "uniform", 0.5)

    def test_workers_do_not_change_report(self):
        config = small_config(n_trials=3)
        serial = coverage_experiment(config, workers=1).to_json()
        parallel = coverage_experiment(config, workers=2).to_json()
        self.assertEqual(serial, parallel)

    def test_noiseless_full_coverage(self):
        report = coverage_experiment(load_config("linear_noiseless").with_overrides(n_trials=4))
        np.testing.assert_array_equal(report.cells.coverage, 1.0)
        self.assertEqual(report.failures, [])

    def test_failure_rate(self):
        with self.assertRaises(ExperimentError):
            coverage_experiment(stuck_context_config())
        report = coverage_experiment(stuck_context_config(max_failure_rate=1.0))
        self.assertEqual(len(report.failures), 2)
        self.assertTrue(report.cells.empty)

    def test_write(self):
        report = coverage_experiment(small_config(n_trials=2))
        with tempfile.TemporaryDirectory() as tmp:
            paths = report.write(tmp)
            data = json.loads(paths["report"].read_text())
            frame, metadata = read_csv(paths["coverage"])
            trials, _ = read_csv(paths["trials"])
        self.assertEqual(data["metadata"]["schema_version"], 1)
        self.assertEqual(data["n_trials"], 2)
        self.assertEqual(metadata["config"]["name"], "small")
        self.assertEqual(len(frame), len(report.cells))
        self.assertEqual(list(trials.columns), ["trial", "method", "target", "alpha", "hit", "width"])

    def test_clopper_pearson(self):
        lower, upper = clopper_pearson(0, 10)
        self.assertEqual(lower, 0.0)
        self.assertAlmostEqual(upper, 1 - 0.025 ** 0.1, places=10)
        lower, upper = clopper_pearson(10, 10)
        self.assertAlmostEqual(lower, 0.025 ** 0.1, places=10)
        self.assertEqual(upper, 1.0)
        lower, upper = clopper_pearson(5, 10)
        self.assertAlmostEqual(lower, 0.18709, places=4)
        self.assertAlmostEqual(upper, 0.81291, places=4)
        self.assertTrue(all(np.isnan(clopper_pearson(0, 0))))


class ErrorTable_Tester(unittest.TestCase):
    def test_noiseless_errors_vanish(self):
        table = error_distribution_experiment(load_config("linear_noiseless").with_overrides(n_trials=3))
        self.assertEqual(sorted(table.frame.method.unique()), ["debiased", "wald"])
        self.assertEqual(len(table.frame), 6)
        for column in table.error_columns:
            np.testing.assert_allclose(table.values("debiased", column), 0.0, atol=1e-6)
            np.testing.assert_allclose(table.values("wald", column), 0.0, atol=1e-6)

    def test_summary(self):
        table = error_distribution_experiment(small_config(n_trials=5))
        self.assertEqual(list(table.frame.columns[:2]), ["trial", "method"])
        entry = table.summary["debiased"]["eps1"]
        self.assertEqual(entry["n"], 5)
        self.assertTrue(0.0 <= entry["ks_pvalue"] <= 1.0)
        with tempfile.TemporaryDirectory() as tmp:
            paths = table.write(tmp)
            frame, metadata = read_csv(paths["errors"])
        np.testing.assert_allclose(frame["eps1"], table.frame["eps1"], rtol=1e-15)
        self.assertEqual(metadata["config"]["n_trials"], 5)


class Scaling_Tester(unittest.TestCase):
    def test_scaling(self):
        table = scaling_experiment(small_config(), [60, 120], n_trials=2)
        self.assertEqual(len(table.frame), 4)
        self.assertEqual(list(table.summary().index), [60, 120])
        eta = 120 ** -0.6
        rows = table.frame[table.frame["T"] == 120]
        np.testing.assert_allclose(rows.iwg_scaled, rows.iwg_opnorm / (eta * np.sqrt(120)))
        self.assertEqual(sorted(table.to_dict()["medians"]), [60, 120])

    def test_invalid_horizons(self):
        with self.assertRaises(ConfigError):
            scaling_experiment(small_config(), [])
        with self.assertRaises(ConfigError):
            scaling_experiment(small_config(), [0, 10])


suite = unittest.TestSuite()
test_classes = [
    Config_Tester,
    Trial_Tester,
    Coverage_Tester,
    ErrorTable_Tester,
    Scaling_Tester,
]
for i in test_classes:
    a = unittest.TestLoader().loadTestsFromTestCase(i)
    suite.addTest(a)
del i

if __name__ == "__main__":
    runner = unittest.TextTestRunner()
    runner.run(suite)
