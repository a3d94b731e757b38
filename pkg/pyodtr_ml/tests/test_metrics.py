#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
test_metrics.py
シミュレーション研究（積分バイアス・RMSE と複製の実行）のテスト
"""

import os
import sys
import unittest
import logging
from pathlib import Path

import numpy as np

# プロジェクトルートをパスに追加して、モジュールをインポートできるようにする
project_root = Path(__file__).parent.parent.parent
sys.path.insert(0, str(project_root))

from pyodtr_ml.dgp import DgpParams, oracle_truth, sample_dataset
from pyodtr_ml.crossfit import oracle_nuisances
from pyodtr_ml.errors import ParameterError, ReplicationError
from pyodtr_ml.learners import LearnerConfig
from pyodtr_ml.metrics import (
    MAX_FAILURE_RATE,
    SimReport,
    fit_estimator,
    integrated_bias_rmse,
    replicate_seed,
    rule_agreement,
    run_replications,
    run_study,
    study_frame,
)

# ロガーの設定
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s [%(levelname)s] %(message)s',
)
logger = logging.getLogger(__name__)

GLM = LearnerConfig(nuisance_learner="glm", calibrate=False)

# 時間のかかるテストは PYODTR_SLOW_TESTS=1 のときだけ実行する
SLOW = os.environ.get("PYODTR_SLOW_TESTS") == "1"


class TestIntegratedMetrics(unittest.TestCase):
    """積分バイアス・RMSE の計算のテスト"""

    def test_exact_estimates(self):
        truth = np.array([0.1, -0.2, 0.3])
        probs = np.array([0.2, 0.3, 0.5])
        bias, rmse, cell_bias, cell_rmse = integrated_bias_rmse(np.tile(truth, (4, 1)), truth, probs)
        self.assertEqual((bias, rmse), (0.0, 0.0))
        np.testing.assert_array_equal(cell_bias, 0.0)
        np.testing.assert_array_equal(cell_rmse, 0.0)

    def test_known_values(self):
        estimates = np.array([[1.0, 0.0], [3.0, 0.0]])
        bias, rmse, cell_bias, cell_rmse = integrated_bias_rmse(estimates, [1.0, 1.0], [0.5, 0.5])
        np.testing.assert_allclose(cell_bias, [1.0, 1.0])
        np.testing.assert_allclose(cell_rmse, [np.sqrt(2.0), 1.0])
        self.assertAlmostEqual(bias, 1.0)
        self.assertAlmostEqual(rmse, (np.sqrt(2.0) + 1.0) / 2)

    def test_rmse_dominates_bias(self):
        rng = np.random.default_rng(5)
        truth = rng.normal(size=16)
        probs = rng.dirichlet(np.ones(16))
        estimates = truth + rng.normal(0.05, 0.2, size=(50, 16))
        bias, rmse, cell_bias, cell_rmse = integrated_bias_rmse(estimates, truth, probs)
        self.assertTrue(np.all(cell_rmse >= cell_bias))
        self.assertGreaterEqual(rmse, bias)
        self.assertGreaterEqual(bias, 0.0)

    def test_shape_errors(self):
        with self.assertRaises(ParameterError):
            integrated_bias_rmse(np.zeros((3, 4)), np.zeros(5), np.zeros(5))
        with self.assertRaises(ParameterError):
            integrated_bias_rmse(np.zeros((0, 4)), np.zeros(4), np.zeros(4))

    def test_rule_agreement(self):
        truth = np.array([0.2, -0.3, 0.01])
        estimates = np.array([[0.1, -0.1, -0.5], [0.1, 0.1, 0.5], [0.3, -0.2, 0.2]])
        # 3列目は |τ̃| <= 0.05 なので評価しない
        self.assertAlmostEqual(rule_agreement(estimates, truth), 2 / 3)
        self.assertEqual(rule_agreement(estimates, np.zeros(3)), 1.0)


class TestReplications(unittest.TestCase):
    """run_replications のテスト"""

    @classmethod
    def setUpClass(cls):
        cls.truth = oracle_truth(DgpParams(seed=81), replicates=10**6)

    def setUp(self):
        logger.info("テスト開始")

    def tearDown(self):
        logger.info("テスト終了")

    def run_small(self, **kwargs):
        options = {"config": GLM, "folds": 2, "seed": 17}
        options.update(kwargs)
        return run_replications(800, 3, self.truth, **options)

    def test_report_structure(self):
        report = self.run_small()
        self.assertIsInstance(report, SimReport)
        self.assertEqual(report.estimators, ("drlearner", "plugin"))
        self.assertTrue(report.valid)
        for name in report.estimators:
            self.assertEqual(report.summaries[name].estimates.shape, (3, 16))
            self.assertGreaterEqual(report.rmse(name), report.bias(name))
        self.assertEqual(list(report.to_frame().columns), ["n", "estimator", "bias", "rmse"])
        self.assertEqual(len(report.cells_frame()), 32)
        self.assertEqual(set(report.duration_stats()), {"total", "mean", "max"})

    def test_seed_ledger(self):
        report = self.run_small()
        expected = [replicate_seed(17, k) for k in range(3)]
        np.testing.assert_array_equal(report.seeds, np.array(expected, dtype=np.uint64))
        frame = report.seeds_frame()
        self.assertEqual(list(frame.columns), ["n", "k", "seed", "ok"])
        self.assertTrue(np.all(frame["ok"] == 1))

    def test_same_seed_same_report(self):
        a = self.run_small()
        b = self.run_small(n_jobs=2)
        for name in a.estimators:
            np.testing.assert_array_equal(a.summaries[name].estimates, b.summaries[name].estimates)
            self.assertEqual(a.bias(name), b.bias(name))

    def test_cate_estimator_ignores_v2(self):
        report = self.run_small(estimators=("cate",))
        self.assertEqual(report.estimators, ("cate",))
        cells = report.summaries["cate"].estimates
        np.testing.assert_array_equal(cells[:, 0::2], cells[:, 1::2])

    def test_unknown_estimator(self):
        with self.assertRaises(ParameterError):
            self.run_small(estimators=("forest",))
        data = sample_dataset(DgpParams(n=100, seed=1))
        with self.assertRaises(ParameterError):
            fit_estimator("forest", data, oracle_nuisances(data, DgpParams()))

    def test_all_failures(self):
        # 5件では学習用部分集合が空になり、すべての複製が失敗する
        with self.assertRaises(ReplicationError) as ctx:
            run_replications(5, 3, self.truth, config=GLM, folds=2)
        self.assertEqual(ctx.exception.details["failures"], 3)

    def test_failure_rate_threshold(self):
        report = self.run_small()
        limit = int(MAX_FAILURE_RATE * 200)
        ok = SimReport(800, 200, 0, 2, report.summaries, report.seeds, report.durations, [(k, "x") for k in range(limit)])
        bad = SimReport(800, 200, 0, 2, report.summaries, report.seeds, report.durations,
                        [(k, "x") for k in range(limit + 1)])
        self.assertTrue(ok.valid)
        self.assertFalse(bad.valid)

    def test_study_frame(self):
        reports = run_study((600, 800), 2, self.truth, config=GLM, folds=2, seed=3)
        frame = study_frame(reports)
        self.assertEqual(list(frame["n"]), [600, 600, 800, 800])

    @unittest.skipUnless(SLOW, "PYODTR_SLOW_TESTS=1 のときのみ実行")
    def test_bias_at_500(self):
        truth = oracle_truth(DgpParams(seed=91), replicates=10**7, n_jobs=-1)
        report = run_replications(500, 200, truth, seed=2024, n_jobs=-1)
        self.assertAlmostEqual(report.bias("drlearner"), 0.006, delta=0.01)
        self.assertAlmostEqual(report.bias("plugin"), 0.032, delta=0.01)
        self.assertLess(report.bias("drlearner"), report.bias("plugin"))

    @unittest.skipUnless(SLOW, "PYODTR_SLOW_TESTS=1 のときのみ実行")
    def test_large_sample_rmse_and_rule_agreement(self):
        truth = oracle_truth(DgpParams(seed=92), replicates=10**7, n_jobs=-1)
        report = run_replications(10000, 100, truth, seed=2025, n_jobs=-1)
        self.assertLess(report.rmse("drlearner"), report.rmse("plugin"))
        self.assertGreaterEqual(report.summaries["drlearner"].rule_agreement, 0.95)


if __name__ == "__main__":
    unittest.main()
