#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
実行設定

コマンドの設定はフラットなキーと値の JSON ファイルで与え、コマンドラインの
フラグで上書きします。未知のキーや不正な値は ConfigError になります。
"""

import dataclasses
import logging
from dataclasses import dataclass
from typing import Any, Dict, Mapping, Optional, Tuple

from .dgp import DgpParams, MIN_ORACLE_REPLICATES
from .errors import ConfigError, ParameterError
from .learners import LearnerConfig
from .utils import json_file_to_dict

logger = logging.getLogger(__name__)

DEFAULT_SIZES = (500, 1000, 2500, 10000)

# 出力ファイルに影響しない実行時の項目（resolved_config.json には書かない）
RUNTIME_FIELDS = ("workers", "outdir", "verbose")


@dataclass(frozen=True)
class RunConfig:
    """
    コマンドの解決済み設定

    Attributes
    ----------
    n : int
        生成するレコード数（simulate）
    K : int
        複製数（study）
    J : int or None
        フォールド数（None はサンプルサイズに応じて決める）
    seed : int
        マスターシード
    v2_levels : tuple of int or None
        CPE を推定する V2 の水準（None は観測された全水準）
    nuisance_learner, second_stage, calibrate, clip, lambda_grid_size, cv_folds, calibration_folds
        LearnerConfig に渡す学習器の設定
    replicates : int
        真値オラクルの複製数（truth、study）
    sizes : tuple of int
        シミュレーション研究のサンプルサイズ（study）
    estimator : str
        ルールに使う推定量 'drlearner' または 'plugin'（estimate）
    stratum : int or None
        ルールの価値を評価する S の層（None または "pooled" は全データ）
    zero_effect : bool
        治療効果なしのデータ生成機構を使うかどうか
    workers : int
        並列ワーカー数
    outdir : str
        出力ディレクトリ
    input : str or None
        入力データセット CSV（estimate）
    verbose : bool
        DEBUG ログを出力するかどうか
    """

    n: int = 1000
    K: int = 200
    J: Optional[int] = None
    seed: int = 0
    v2_levels: Optional[Tuple[int, ...]] = None
    nuisance_learner: str = "lasso"
    second_stage: str = "cell_means"
    calibrate: bool = True
    clip: float = 0.01
    lambda_grid_size: int = 50
    cv_folds: int = 10
    calibration_folds: int = 5
    replicates: int = 10**7
    sizes: Tuple[int, ...] = DEFAULT_SIZES
    estimator: str = "drlearner"
    stratum: Optional[int] = 1
    zero_effect: bool = False
    workers: int = 1
    outdir: str = "out"
    input: Optional[str] = None
    verbose: bool = False

    def __post_init__(self):
        if self.stratum == "pooled":
            object.__setattr__(self, "stratum", None)
        for name in ("v2_levels", "sizes"):
            value = getattr(self, name)
            if isinstance(value, list):
                object.__setattr__(self, name, tuple(value))
        self._validate()

    def _validate(self):
        checks = [
            ("n", _is_int(self.n) and self.n >= 1),
            ("K", _is_int(self.K) and self.K >= 1),
            ("J", self.J is None or (_is_int(self.J) and self.J >= 2)),
            ("seed", _is_int(self.seed) and 0 <= self.seed < 2**64),
            (
                "v2_levels",
                self.v2_levels is None
                or (
                    isinstance(self.v2_levels, tuple)
                    and len(self.v2_levels) > 0
                    and all(_is_int(v) and v >= 0 for v in self.v2_levels)
                ),
            ),
            ("nuisance_learner", isinstance(self.nuisance_learner, str)),
            ("second_stage", isinstance(self.second_stage, str)),
            ("calibrate", isinstance(self.calibrate, bool)),
            ("clip", isinstance(self.clip, (int, float)) and not isinstance(self.clip, bool)),
            ("lambda_grid_size", _is_int(self.lambda_grid_size)),
            ("cv_folds", _is_int(self.cv_folds)),
            ("calibration_folds", _is_int(self.calibration_folds)),
            ("replicates", _is_int(self.replicates) and self.replicates >= MIN_ORACLE_REPLICATES),
            (
                "sizes",
                isinstance(self.sizes, tuple)
                and len(self.sizes) > 0
                and all(_is_int(v) and v >= 1 for v in self.sizes),
            ),
            ("estimator", self.estimator in ("drlearner", "plugin")),
            ("stratum", self.stratum is None or (_is_int(self.stratum) and self.stratum in (0, 1))),
            ("zero_effect", isinstance(self.zero_effect, bool)),
            ("workers", _is_int(self.workers) and self.workers != 0),
            ("outdir", isinstance(self.outdir, str) and self.outdir != ""),
            ("input", self.input is None or isinstance(self.input, str)),
            ("verbose", isinstance(self.verbose, bool)),
        ]
        for name, ok in checks:
            if not ok:
                raise ConfigError("設定値が不正です", field=name, value=getattr(self, name))
        try:
            self.learner_config()
        except ParameterError as e:
            name = e.details.get("name")
            raise ConfigError("学習器の設定値が不正です", field=name, value=e.details.get("value")) from e

    def learner_config(self, n_jobs=None):
        """学習器の設定（n_jobs 省略時は workers）"""
        return LearnerConfig(
            lambda_grid_size=self.lambda_grid_size,
            cv_folds=self.cv_folds,
            calibration_folds=self.calibration_folds,
            calibrate=self.calibrate,
            clip=self.clip,
            nuisance_learner=self.nuisance_learner,
            second_stage=self.second_stage,
            n_jobs=self.workers if n_jobs is None else n_jobs,
        )

    def dgp_params(self, n=None, seed=None):
        """データ生成機構のパラメータ"""
        params = DgpParams(seed=self.seed if seed is None else seed, n=self.n if n is None else n)
        return params.zero_treatment_effect() if self.zero_effect else params

    def to_dict(self, runtime=True):
        """設定の辞書。runtime=False では結果に影響しない実行時の項目を除く"""
        result = {}
        for f in dataclasses.fields(self):
            if not runtime and f.name in RUNTIME_FIELDS:
                continue
            value = getattr(self, f.name)
            result[f.name] = list(value) if isinstance(value, tuple) else value
        return result


def _is_int(value):
    return isinstance(value, int) and not isinstance(value, bool)


def _field_names():
    return {f.name for f in dataclasses.fields(RunConfig)}


def resolve_config(values: Optional[Mapping[str, Any]] = None, overrides: Optional[Mapping[str, Any]] = None):
    """
    設定値の辞書とコマンドラインの上書きから RunConfig を作る

    overrides の値が None のキーは無視します（フラグ未指定）。

    Parameters
    ----------
    values : Mapping, optional
        設定ファイルの内容
    overrides : Mapping, optional
        コマンドラインの値

    Returns
    -------
    RunConfig

    Raises
    ------
    ConfigError
        未知のキー、または不正な値がある場合
    """
    merged: Dict[str, Any] = {}
    known = _field_names()
    for source in (values or {}, overrides or {}):
        for key, value in source.items():
            if key not in known:
                raise ConfigError("未知の設定キーです", field=key, value=value)
            if source is overrides and value is None:
                continue
            merged[key] = value
    try:
        return RunConfig(**merged)
    except TypeError as e:
        raise ConfigError(f"設定値の型が不正です: {e}") from e


def load_run_config(path=None, overrides=None):
    """
    JSON 設定ファイルを読み込み、上書きを適用した RunConfig を返す

    Parameters
    ----------
    path : str or Path, optional
        設定ファイル（省略時は既定値だけを使う）
    overrides : Mapping, optional
        コマンドラインの値

    Returns
    -------
    RunConfig
    """
    values = {}
    if path is not None:
        values = json_file_to_dict(path)
        if not isinstance(values, dict):
            raise ConfigError("設定ファイルはJSONオブジェクトである必要があります", field="config", value=str(path))
        logger.debug(f"設定ファイルを読み込みました: {path}")
    return resolve_config(values, overrides)
