#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
pyodtr-ml パッケージ

一部の試験でしか効果修飾因子 V2 が測定されていない融合無作為化試験データから、
条件付き代理効果（CPE）の DR-Learner で最適治療ルールを推定し、TMLE で
ルールの価値を評価するためのツールを提供します。
"""

__version__ = "0.1.0"
__author__ = "pyodtr-ml開発チーム"

# エラー定義
from .errors import (
    ODTRBaseError,
    ParameterError,
    ConfigError,
    DataFormatError,
    FileOperationError,
    ConvergenceError,
    NuisanceFitError,
    PositivityError,
    OracleError,
    RuleError,
    TargetingError,
    ReplicationError,
)

# データ
from .dataset import Dataset, Observation, make_dataset
from .data_converter import read_dataset_csv, write_dataset_csv

# データ生成機構と真値
from .dgp import DgpParams, TruthTable, oracle_truth, sample_dataset

# 学習器
from .learners import LearnerConfig, fit_logistic_lasso, isotonic_calibrate

# 推定
from .crossfit import FoldPlan, NuisanceFits, fit_nuisances, fold_schedule, make_folds, oracle_nuisances
from .drlearner import CpeModel, compute_pseudo_outcome, fit_cpe, fit_drlearner, fit_plugin
from .rules import decide, decide_all, decision_summary
from .policyvalue import PolicyValueEstimate, evaluate_rules, policy_contrasts, tmle_policy_value
from .metrics import SimReport, integrated_bias_rmse, run_replications

# 統一インターフェース
from .estimator import FusedODTR

__all__ = [
    "ODTRBaseError",
    "ParameterError",
    "ConfigError",
    "DataFormatError",
    "FileOperationError",
    "ConvergenceError",
    "NuisanceFitError",
    "PositivityError",
    "OracleError",
    "RuleError",
    "TargetingError",
    "ReplicationError",
    "Dataset",
    "Observation",
    "make_dataset",
    "read_dataset_csv",
    "write_dataset_csv",
    "DgpParams",
    "TruthTable",
    "oracle_truth",
    "sample_dataset",
    "LearnerConfig",
    "fit_logistic_lasso",
    "isotonic_calibrate",
    "FoldPlan",
    "NuisanceFits",
    "fit_nuisances",
    "fold_schedule",
    "make_folds",
    "oracle_nuisances",
    "CpeModel",
    "compute_pseudo_outcome",
    "fit_cpe",
    "fit_drlearner",
    "fit_plugin",
    "decide",
    "decide_all",
    "decision_summary",
    "PolicyValueEstimate",
    "evaluate_rules",
    "policy_contrasts",
    "tmle_policy_value",
    "SimReport",
    "integrated_bias_rmse",
    "run_replications",
    "FusedODTR",  # 統一インターフェース
]
