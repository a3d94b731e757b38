#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
融合試験データの最適治療ルール推定の統一インターフェース

クロスフィット → CPE 推定（DR-Learner・プラグイン・V2 を無視した CATE）→
治療ルール → TMLE によるルールの価値評価、を1つのクラスで実行します。
"""

import logging

from .crossfit import fit_nuisances, fold_schedule, make_folds
from .drlearner import fit_cate_v1_only, fit_drlearner, fit_plugin
from .errors import ParameterError
from .learners import LearnerConfig
from .policyvalue import evaluate_rules, policy_contrasts
from .rules import decide_all, static_rule

logger = logging.getLogger(__name__)

RULE_IDS = ("d1", "d0", "cate", "static_0", "static_1")


class FusedODTR:
    """
    融合試験データから最適治療ルールを推定するクラス

    すべての推定量は同じフォールド分割と同じ局外パラメータを共有します。
    """

    def __init__(
        self,
        config=None,
        folds=None,
        v2_levels=None,
        estimator="drlearner",
        stratum=1,
        seed=0,
        debug=False,
    ):
        """
        初期化

        Args:
            config (LearnerConfig): 学習器の設定
            folds (int): フォールド数（省略時はサンプルサイズに応じて決める）
            v2_levels (sequence of int): CPE を推定する V2 の水準（省略時は観測された全水準）
            estimator (str): ルールに使う推定量（'drlearner' または 'plugin'）
            stratum (int): ルールの価値を評価する S の層（None は全データ）
            seed (int): マスターシード
            debug (bool): デバッグモードを有効にするかどうか
        """
        if estimator not in ("drlearner", "plugin"):
            raise ParameterError("推定量は 'drlearner' または 'plugin' です", name="estimator", value=estimator)
        self.config = config or LearnerConfig()
        self.n_folds = folds
        self.v2_levels = v2_levels
        self.estimator = estimator
        self.stratum = stratum
        self.seed = seed
        self.debug = debug
        if debug:
            logger.setLevel(logging.DEBUG)

        self.data = None
        self.folds = None
        self.fits = None
        self.models = {}

    def fit(self, data):
        """
        局外パラメータと CPE モデルを学習する

        Args:
            data (Dataset): 融合試験データ

        Returns:
            FusedODTR: self
        """
        levels = data.v2_levels() if self.v2_levels is None else tuple(self.v2_levels)
        J = self.n_folds or fold_schedule(data.n)
        self.data = data
        self.folds = make_folds(data.n, J, self.seed)
        self.fits = fit_nuisances(data, self.folds, levels, self.config, self.seed)
        self.models = {
            "drlearner": fit_drlearner(data, self.fits, levels, self.config, self.seed),
            "plugin": fit_plugin(data, self.fits, levels, self.config, self.seed),
            "cate": fit_cate_v1_only(data, self.fits, self.config, self.seed),
        }
        logger.info(f"学習が完了しました: n={data.n}, J={J}, V2水準={levels}")
        return self

    def _require_fit(self):
        if self.fits is None:
            raise ParameterError("fit() を先に呼び出してください", name="fits")

    @property
    def cpe_model(self):
        """ルールに使う CPE モデル"""
        self._require_fit()
        return self.models[self.estimator]

    @property
    def cate_model(self):
        self._require_fit()
        return self.models["cate"]

    def decide(self, data=None):
        """治療決定（DecisionTable）"""
        return decide_all(self.cpe_model, self.data if data is None else data)

    def rules(self):
        """学習データの各レコードに対するルールの割り付け"""
        decisions = self.decide()
        n = self.data.n
        return {
            "d1": decisions.d1,
            "d0": decisions.d0,
            "cate": decide_all(self.cate_model, self.data).d1,
            "static_0": static_rule(n, 0),
            "static_1": static_rule(n, 1),
        }

    def evaluate(self, rule_ids=RULE_IDS):
        """
        ルールの価値を TMLE で評価する

        Args:
            rule_ids (sequence of str): 評価するルール

        Returns:
            dict: ルール名から PolicyValueEstimate への辞書
        """
        available = self.rules()
        unknown = [rule_id for rule_id in rule_ids if rule_id not in available]
        if unknown:
            raise ParameterError("未知のルールです", name="rule_ids", value=unknown)
        rules = {rule_id: available[rule_id] for rule_id in rule_ids}
        return evaluate_rules(self.data, rules, self.folds, self.config, self.stratum, self.seed)

    @staticmethod
    def contrasts(estimates, reference="static_0"):
        """reference に対するリスク比と減少率"""
        return policy_contrasts(estimates, reference)
