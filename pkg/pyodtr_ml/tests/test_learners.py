#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
test_learners.py
基本回帰学習器（LASSO・ロジスティック回帰・セル平均・等張キャリブレーション）のテスト
"""

import itertools
import sys
import unittest
import logging
from pathlib import Path

import numpy as np

# プロジェクトルートをパスに追加して、モジュールをインポートできるようにする
project_root = Path(__file__).parent.parent.parent
sys.path.insert(0, str(project_root))

from pyodtr_ml.errors import ConvergenceError, ParameterError
from pyodtr_ml.learners import (
    DesignSpec,
    LearnerConfig,
    fit_cell_means,
    fit_intercept_only,
    fit_linear_lasso,
    fit_logistic,
    fit_logistic_lasso,
    isotonic_calibrate,
    learner_from_text,
)
from pyodtr_ml.utils import expit, logit

# ロガーの設定
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s [%(levelname)s] %(message)s',
)
logger = logging.getLogger(__name__)


def exhaustive_isotonic(y):
    """連続ブロックへの全分割から、単調で二乗誤差最小の当てはめを探す"""
    n = len(y)
    best, best_sse = None, np.inf
    for cuts in itertools.product((False, True), repeat=n - 1):
        bounds = [0] + [i + 1 for i, cut in enumerate(cuts) if cut] + [n]
        means = [np.mean(y[lo:hi]) for lo, hi in zip(bounds[:-1], bounds[1:])]
        if any(b < a - 1e-12 for a, b in zip(means, means[1:])):
            continue
        fit = np.concatenate([np.full(hi - lo, m) for lo, hi, m in zip(bounds[:-1], bounds[1:], means)])
        sse = float(np.sum((y - fit) ** 2))
        if sse < best_sse - 1e-12:
            best, best_sse = fit, sse
    return best


class TestDesignSpec(unittest.TestCase):
    """計画行列の仕様のテスト"""

    def test_saturated_width(self):
        spec = DesignSpec(("a", "b", "c", "d"), ("x",), "saturated")
        self.assertEqual(spec.width, 2**4 - 1 + 1)
        self.assertEqual(len(set(spec.column_names())), spec.width)

    def test_main_effects_width(self):
        spec = DesignSpec(("a", "b", "c"), ("x",), "main")
        self.assertEqual(spec.column_names(), ["a", "b", "c", "x"])

    def test_expand_products(self):
        spec = DesignSpec(("a", "b"), (), "saturated")
        X = spec.expand({"a": np.array([1, 1, 0]), "b": np.array([1, 0, 1])})
        np.testing.assert_array_equal(X, [[1, 1, 1], [1, 0, 0], [0, 1, 0]])

    def test_rejects_duplicates(self):
        with self.assertRaises(ParameterError):
            DesignSpec(("a", "a"), ())

    def test_missing_column(self):
        with self.assertRaises(ParameterError):
            DesignSpec(("a",), ()).expand({"b": np.zeros(3)})

    def test_cell_grid_round_trip(self):
        spec = DesignSpec(("a", "b", "c"), (), "main")
        np.testing.assert_array_equal(spec.cell_index(spec.cell_grid()), np.arange(8))


class TestLogisticLasso(unittest.TestCase):
    """L1正則化ロジスティック回帰のテスト"""

    def setUp(self):
        logger.info("テスト開始")
        self.rng = np.random.default_rng(12345)

    def tearDown(self):
        logger.info("テスト終了")

    def test_lambda_max_zeroes_slopes(self):
        X = self.rng.normal(size=(2000, 4))
        y = (self.rng.random(2000) < 0.3).astype(float)
        first = fit_logistic_lasso(X, y, cv_folds=None, config=LearnerConfig(lambda_grid_size=3))
        lam_max = first.diagnostics["lambda_max"]
        model = fit_logistic_lasso(X, y, lambda_grid=[lam_max], cv_folds=None)
        np.testing.assert_array_equal(model.coef, np.zeros(4))
        self.assertAlmostEqual(model.intercept, logit(y.mean()), places=10)

    def test_matches_newton_oracle_at_small_lambda(self):
        n = 10**5
        x = self.rng.normal(size=n)
        y = (self.rng.random(n) < expit(0.5 - 0.2 * x)).astype(float)
        oracle = fit_logistic(x[:, None], y)
        lasso = fit_logistic_lasso(x[:, None], y, lambda_grid=[1e-6], cv_folds=None)
        self.assertAlmostEqual(oracle.coef[0], -0.2, delta=0.02)
        self.assertAlmostEqual(lasso.coef[0], oracle.coef[0], delta=0.02)
        self.assertAlmostEqual(lasso.intercept, oracle.intercept, delta=0.02)

    def test_objective_trace_is_non_increasing(self):
        X = self.rng.normal(size=(3000, 6))
        eta = 0.3 + X @ np.array([0.8, -0.5, 0.0, 0.0, 0.3, 0.0])
        y = (self.rng.random(3000) < expit(eta)).astype(float)
        model = fit_logistic_lasso(X, y, lambda_grid=[1e-3], cv_folds=None)
        trace = np.array(model.diagnostics["objective_trace"])
        self.assertGreater(len(trace), 1)
        self.assertTrue(np.all(np.diff(trace) <= 1e-12))

    def test_cross_validation_selects_a_grid_value(self):
        X = self.rng.normal(size=(1500, 3))
        y = (self.rng.random(1500) < expit(X[:, 0])).astype(float)
        config = LearnerConfig(lambda_grid_size=10, cv_folds=5)
        model = fit_logistic_lasso(X, y, cv_folds=5, seed=4, config=config)
        path = model.diagnostics["lambda_path"]
        self.assertIn(model.lam, path)
        self.assertEqual(len(model.diagnostics["cv_loss"]), 10)
        # 真の信号がある列は残る
        self.assertNotEqual(model.coef[0], 0.0)

    def test_same_seed_same_fit(self):
        X = self.rng.normal(size=(800, 3))
        y = (self.rng.random(800) < expit(X[:, 1])).astype(float)
        config = LearnerConfig(lambda_grid_size=8)
        a = fit_logistic_lasso(X, y, cv_folds=4, seed=9, config=config)
        b = fit_logistic_lasso(X, y, cv_folds=4, seed=9, config=config)
        np.testing.assert_array_equal(a.coef, b.coef)

    def test_predictions_are_probabilities(self):
        X = self.rng.normal(size=(500, 2)) * 10
        y = (self.rng.random(500) < expit(X[:, 0])).astype(float)
        model = fit_logistic_lasso(X, y, cv_folds=None, config=LearnerConfig(lambda_grid_size=5))
        p = model.predict(X)
        self.assertTrue(np.all((p >= 0) & (p <= 1)))

    def test_near_separation_converges(self):
        # 2値列がすべて1のセルでは結果が常に1（ほぼ分離）
        spec = DesignSpec(("a", "b", "c", "d"), (), "saturated")
        columns = {name: (self.rng.random(250) < 0.5).astype(float) for name in spec.binary}
        y = (self.rng.random(250) < 0.3).astype(float)
        y[spec.cell_index(columns) == 15] = 1.0
        model = fit_logistic_lasso(spec.expand(columns), y, cv_folds=5, seed=3, design=spec)
        self.assertEqual(len(model.diagnostics["lambda_path"]), LearnerConfig().lambda_grid_size)
        trace = np.array(model.diagnostics["objective_trace"])
        self.assertTrue(np.all(np.diff(trace) <= 1e-12))
        p = model.predict(columns)
        self.assertTrue(np.all(np.isfinite(p) & (p >= 0) & (p <= 1)))
        # 最小の λ まで経路を辿っても失敗しない
        smallest = fit_logistic_lasso(
            spec.expand(columns), y, lambda_grid=model.diagnostics["lambda_path"], cv_folds=None, design=spec
        )
        self.assertTrue(np.all(np.isfinite(smallest.coef)))

    def test_convergence_error_carries_progress(self):
        X = self.rng.normal(size=(1000, 3))
        y = (self.rng.random(1000) < expit(X @ np.array([1.0, -1.0, 0.5]))).astype(float)
        config = LearnerConfig(max_newton_steps=1, tol=1e-12, objective_tol=1e-12)
        with self.assertRaises(ConvergenceError) as ctx:
            fit_logistic_lasso(X, y, lambda_grid=[1e-4], cv_folds=None, config=config)
        details = ctx.exception.details
        self.assertEqual(details["lam"], 1e-4)
        self.assertGreater(details["objective_change"], 0.0)
        self.assertGreater(details["sweeps"], 0)

    def test_single_class_rejected(self):
        with self.assertRaises(ParameterError):
            fit_logistic_lasso(np.zeros((10, 1)), np.ones(10))

    def test_invalid_grid_rejected(self):
        X = self.rng.normal(size=(50, 1))
        y = (self.rng.random(50) < 0.5).astype(float)
        with self.assertRaises(ParameterError):
            fit_logistic_lasso(X, y, lambda_grid=[0.1, -1.0])

    def test_text_round_trip(self):
        spec = DesignSpec(("a", "b"), ("x",), "saturated")
        columns = {
            "a": (self.rng.random(1000) < 0.5).astype(float),
            "b": (self.rng.random(1000) < 0.5).astype(float),
            "x": self.rng.random(1000),
        }
        y = (self.rng.random(1000) < expit(columns["a"] - columns["x"])).astype(float)
        model = fit_logistic_lasso(spec.expand(columns), y, cv_folds=None, design=spec,
                                   config=LearnerConfig(lambda_grid_size=5))
        restored = learner_from_text(model.to_text())
        np.testing.assert_array_equal(restored.predict(columns), model.predict(columns))


class TestOtherLearners(unittest.TestCase):
    """線形 LASSO・切片のみ・セル平均のテスト"""

    def setUp(self):
        logger.info("テスト開始")
        self.rng = np.random.default_rng(777)

    def tearDown(self):
        logger.info("テスト終了")

    def test_linear_lasso_recovers_slope(self):
        x = self.rng.normal(size=(5000, 2))
        y = 1.0 + 2.0 * x[:, 0] + self.rng.normal(scale=0.1, size=5000)
        model = fit_linear_lasso(x, y, lambda_grid=[1e-6], cv_folds=None)
        self.assertAlmostEqual(model.coef[0], 2.0, delta=0.01)
        self.assertAlmostEqual(model.coef[1], 0.0, delta=0.01)
        self.assertAlmostEqual(model.intercept, 1.0, delta=0.01)

    def test_intercept_only(self):
        y = np.array([0, 1, 1, 1], dtype=float)
        model = fit_intercept_only(y, p=3)
        np.testing.assert_allclose(model.predict(np.zeros((2, 3))), [0.75, 0.75])

    def test_cell_means_and_unseen_cells(self):
        model = fit_cell_means([0, 0, 2, 2, 2], [1.0, 3.0, 0.0, 0.0, 3.0])
        np.testing.assert_allclose(model.predict(np.array([0, 2, 1])), [2.0, 1.0, 1.4])

    def test_cell_means_length_mismatch(self):
        with self.assertRaises(ParameterError):
            fit_cell_means([0, 1], [1.0])


class TestIsotonicCalibration(unittest.TestCase):
    """等張キャリブレーションのテスト"""

    def setUp(self):
        logger.info("テスト開始")
        self.rng = np.random.default_rng(2718)

    def tearDown(self):
        logger.info("テスト終了")

    def test_matches_exhaustive_search(self):
        for n in range(2, 9):
            for trial in range(20):
                raw = np.sort(self.rng.random(n))
                outcomes = (self.rng.random(n) < raw).astype(float)
                with self.subTest(n=n, trial=trial):
                    calibrated = isotonic_calibrate(raw, outcomes, clip=0.0)
                    np.testing.assert_allclose(
                        calibrated.calibrate(raw), exhaustive_isotonic(outcomes), atol=1e-12
                    )

    def test_map_is_non_decreasing_and_clipped(self):
        raw = self.rng.random(500)
        outcomes = (self.rng.random(500) < raw).astype(float)
        calibrated = isotonic_calibrate(raw, outcomes, clip=0.01)
        grid = np.linspace(-0.5, 1.5, 401)
        values = calibrated.calibrate(grid)
        self.assertTrue(np.all(np.diff(values) >= 0))
        self.assertTrue(np.all((values >= 0.01) & (values <= 0.99)))

    def test_step_function_is_right_continuous(self):
        calibrated = isotonic_calibrate([0.1, 0.2, 0.3, 0.4], [0.0, 0.0, 1.0, 1.0], clip=0.0)
        # 閾値の値以上では次のブロック、範囲より下は最初のブロック
        np.testing.assert_allclose(calibrated.calibrate([0.0, 0.25, 0.3, 0.9]), [0.0, 0.0, 1.0, 1.0])

    def test_wraps_base_learner(self):
        x = self.rng.normal(size=(2000, 1))
        y = (self.rng.random(2000) < expit(x[:, 0])).astype(float)
        base = fit_logistic(x, y)
        calibrated = isotonic_calibrate(base.predict(x), y, base=base)
        np.testing.assert_allclose(calibrated.predict(x), calibrated.calibrate(base.predict(x)))

    def test_length_mismatch(self):
        with self.assertRaises(ParameterError):
            isotonic_calibrate([0.1, 0.2], [1.0])


if __name__ == "__main__":
    unittest.main()
