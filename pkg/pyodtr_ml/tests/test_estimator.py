#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
test_estimator.py
FusedODTR（学習・決定・ルールの価値評価）の統合テスト
"""

import sys
import unittest
import logging
from pathlib import Path

import numpy as np

# プロジェクトルートをパスに追加して、モジュールをインポートできるようにする
project_root = Path(__file__).parent.parent.parent
sys.path.insert(0, str(project_root))

from pyodtr_ml.dgp import DgpParams, sample_dataset
from pyodtr_ml.errors import ParameterError
from pyodtr_ml.estimator import RULE_IDS, FusedODTR
from pyodtr_ml.learners import LearnerConfig

# ロガーの設定
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s [%(levelname)s] %(message)s',
)
logger = logging.getLogger(__name__)

GLM = LearnerConfig(nuisance_learner="glm", calibrate=False)


class TestFusedODTR(unittest.TestCase):
    """FusedODTR のテスト"""

    @classmethod
    def setUpClass(cls):
        cls.data = sample_dataset(DgpParams(n=3000, seed=61)).masked()
        cls.odtr = FusedODTR(config=GLM, folds=2, seed=5).fit(cls.data)

    def setUp(self):
        logger.info("テスト開始")

    def tearDown(self):
        logger.info("テスト終了")

    def test_unfit_estimator(self):
        odtr = FusedODTR(config=GLM)
        with self.assertRaises(ParameterError):
            _ = odtr.cpe_model
        with self.assertRaises(ParameterError):
            odtr.decide()

    def test_invalid_estimator_name(self):
        with self.assertRaises(ParameterError):
            FusedODTR(estimator="forest")

    def test_models_share_folds(self):
        self.assertEqual(self.odtr.folds.J, 2)
        self.assertEqual(self.odtr.fits.v2_levels, (0, 1))
        self.assertEqual(self.odtr.cpe_model.kind, "drlearner")
        self.assertTrue(self.odtr.cate_model.ignores_v2)

    def test_decisions(self):
        decisions = self.odtr.decide()
        self.assertEqual(decisions.n, self.data.n)
        np.testing.assert_array_equal(decisions.observed, self.data.s == 1)
        self.assertTrue(np.all(decisions.lower <= decisions.upper))
        # 決定的なレコードでは楽観的ルールと悲観的ルールが一致する
        np.testing.assert_array_equal(decisions.d1[decisions.decisive], decisions.d0[decisions.decisive])

    def test_rules(self):
        rules = self.odtr.rules()
        self.assertEqual(tuple(rules), RULE_IDS)
        for rule in rules.values():
            self.assertEqual(rule.shape, (self.data.n,))
            self.assertTrue(np.all((rule == 0) | (rule == 1)))
        np.testing.assert_array_equal(rules["static_1"], 1)

    def test_evaluate_and_contrasts(self):
        estimates = self.odtr.evaluate()
        self.assertEqual(tuple(estimates), RULE_IDS)
        stratum_n = int(np.sum(self.data.s == 1))
        for estimate in estimates.values():
            self.assertEqual(estimate.n, stratum_n)
            self.assertEqual(estimate.stratum, 1)
            self.assertTrue(0.0 <= estimate.psi <= 1.0)
            self.assertLessEqual(estimate.ci[0], estimate.psi)
            self.assertGreaterEqual(estimate.ci[1], estimate.psi)
        contrasts = self.odtr.contrasts(estimates)
        self.assertEqual([c.rule_id for c in contrasts], ["d1", "d0", "cate", "static_1"])
        for contrast in contrasts:
            self.assertEqual(contrast.reference_id, "static_0")
            self.assertAlmostEqual(contrast.rr, estimates[contrast.rule_id].psi / estimates["static_0"].psi)

    def test_unknown_rule(self):
        with self.assertRaises(ParameterError):
            self.odtr.evaluate(("d1", "forest"))

    def test_plugin_estimator(self):
        odtr = FusedODTR(config=GLM, folds=2, seed=5, estimator="plugin").fit(self.data)
        self.assertEqual(odtr.cpe_model.kind, "plugin")
        # 同じシードでは局外パラメータは DR-Learner の場合と同じ
        np.testing.assert_array_equal(odtr.fits.mhat, self.odtr.fits.mhat)


if __name__ == "__main__":
    unittest.main()
