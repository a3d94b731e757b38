#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
クロスフィッティングによる局外パラメータの推定

フォールド分割と、4つの局外パラメータ

- g(a) = P(A=a | V1, W)
- m(a) = E[Y | A=a, V1, W]
- b(a, v2) = P(V2=v2 | Y=1, A=a, V1, W, S=1)
- r(a) = P(Y=1 | A=a, S=1, V1, W) · P(A=a | S=1, V1, W) · P(S=1 | V1, W)

のフォールド外予測を提供します。各予測はそのレコードのフォールドを除いた
学習データだけで学習した学習器から得られます。
"""

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .dgp import record_probabilities
from .errors import NuisanceFitError, ParameterError
from .learners import (
    DesignSpec,
    LearnerConfig,
    fit_binary,
    fit_intercept_only,
    isotonic_calibrate,
    refit_like,
)
from .utils import STREAM_CALIBRATION, STREAM_FOLDS, derive_seed, make_generator

logger = logging.getLogger(__name__)

# 局外パラメータの計画行列: (V1, W1) の飽和展開 + W2 の線形項
NUISANCE_DESIGN = DesignSpec(("v11", "v12", "v13", "w1"), ("w2",), "saturated")
MAIN_EFFECTS_DESIGN = DesignSpec(("v11", "v12", "v13", "w1"), ("w2",), "main")


def nuisance_design(config, extra_binary=()):
    """設定に応じた局外パラメータの計画仕様（extra_binary は先頭に追加する2値列）"""
    base = MAIN_EFFECTS_DESIGN if config.nuisance_learner == "glm" else NUISANCE_DESIGN
    if not extra_binary:
        return base
    return DesignSpec(tuple(extra_binary) + base.binary, base.continuous, base.expansion)


@dataclass(frozen=True, eq=False)
class FoldPlan:
    """フォールド分割。assignment[i] はレコード i のフォールド番号"""

    J: int
    assignment: np.ndarray
    seed: Optional[int] = None

    @property
    def n(self):
        return int(self.assignment.shape[0])

    def test_index(self, j):
        return np.flatnonzero(self.assignment == j)

    def train_index(self, j):
        return np.flatnonzero(self.assignment != j)

    def sizes(self):
        return np.bincount(self.assignment, minlength=self.J)

    def restrict(self, mask):
        """マスクしたレコードだけの分割（フォールド番号は維持）"""
        return FoldPlan(self.J, self.assignment[np.asarray(mask)], self.seed)


def make_folds(n, J, seed=0):
    """
    一様ランダムで大きさのそろったフォールド分割を作る

    Parameters
    ----------
    n : int
        レコード数
    J : int
        フォールド数（2 <= J <= n）
    seed : int
        乱数シード

    Returns
    -------
    FoldPlan
        フォールドの大きさの差は1以下

    Raises
    ------
    ParameterError
        J が範囲外の場合
    """
    n, J = int(n), int(J)
    if J < 2 or J > n:
        raise ParameterError(f"フォールド数は 2 以上 n={n} 以下である必要があります", name="J", value=J)
    perm = make_generator(seed, STREAM_FOLDS).permutation(n)
    assignment = np.empty(n, dtype=np.int64)
    assignment[perm] = np.arange(n) % J
    return FoldPlan(J, assignment, int(seed))


def fold_schedule(n):
    """
    サンプルサイズに応じたフォールド数

    n < 1000 は20、1000 <= n < 10000 は10、それ以上は2
    （n=500→20、n=1000, 2500→10、n=10000→2）。
    """
    if n < 1000:
        J = 20
    elif n < 10000:
        J = 10
    else:
        J = 2
    return max(2, min(J, int(n)))


@dataclass(frozen=True, eq=False)
class NuisanceFits:
    """
    各レコード・各治療群 a ∈ {0, 1} の局外パラメータ予測

    ghat, mhat, rhat は形状 (n, 2)、bhat は V2 水準から形状 (n, 2) 配列への辞書です。
    clip は下限 εclip（オラクルの真値では None）。
    """

    ghat: np.ndarray
    mhat: np.ndarray
    bhat: Dict[int, np.ndarray]
    rhat: np.ndarray
    fold: np.ndarray
    clip: Optional[float] = 0.01
    calibrated: Dict[str, bool] = field(default_factory=dict)
    r_factors: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def n(self):
        return int(self.ghat.shape[0])

    @property
    def v2_levels(self):
        return tuple(sorted(self.bhat))

    def b(self, level):
        if level not in self.bhat:
            raise ParameterError("この V2 水準の b は推定されていません", name="v2_level", value=level)
        return self.bhat[level]

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_frame(self, level):
        """監査用CSV `i,fold,a,ghat,mhat,bhat,rhat`（レコード×治療群の縦長形式）"""
        n = self.n
        b = self.b(level)
        return pd.DataFrame(
            {
                "i": np.repeat(np.arange(n), 2),
                "fold": np.repeat(self.fold, 2),
                "a": np.tile([0, 1], n),
                "ghat": self.ghat.ravel(),
                "mhat": self.mhat.ravel(),
                "bhat": b.ravel(),
                "rhat": self.rhat.ravel(),
            }
        )


def _inner_oof(learner, X, y, config, seed):
    """学習データ内の入れ子クロスフィットによるフォールド外予測"""
    k = config.calibration_folds
    n = len(y)
    if n < 2 * k:
        return None
    perm = make_generator(seed, STREAM_CALIBRATION).permutation(n)
    ids = np.empty(n, dtype=np.int64)
    ids[perm] = np.arange(n) % k
    oof = np.empty(n)
    for f in range(k):
        test = ids == f
        train = ~test
        if np.unique(y[train]).size < 2:
            inner = fit_intercept_only(y[train], p=X.shape[1])
        else:
            inner = refit_like(learner, X[train], y[train], config)
        oof[test] = inner.predict(X[test])
    return oof


def fit_predict(X_train, y_train, X_test, config, seed=0, label=""):
    """
    2値応答の学習器を学習し、テストデータを予測する（キャリブレーション込み）

    応答が1種類しかない場合は切片のみのモデルにフォールバックし、警告を出します。
    キャリブレーションは学習データ自身の入れ子クロスフィット予測に等張回帰を
    当てはめ、その写像をテストデータの予測に適用します。切り詰めは呼び出し側で行います。

    Parameters
    ----------
    X_train, X_test : numpy.ndarray
        計画行列
    y_train : numpy.ndarray
        2値応答
    config : LearnerConfig
        学習器の設定
    seed : int
        交差検証・入れ子フォールドのシード
    label : str
        ログ用の名前

    Returns
    -------
    (numpy.ndarray, bool)
        テストデータの予測確率と、キャリブレーションしたかどうか
    """
    y_train = np.asarray(y_train, dtype=np.float64)
    if np.unique(y_train).size < 2:
        logger.warning(f"{label}: 応答が1種類しかないため切片のみのモデルを使います (n={len(y_train)})")
        learner = fit_intercept_only(y_train, p=X_train.shape[1])
        return learner.predict(X_test), False
    learner = fit_binary(X_train, y_train, config, seed=seed)
    pred = learner.predict(X_test)
    if not config.calibrate:
        return pred, False
    oof = _inner_oof(learner, X_train, y_train, config, seed)
    if oof is None:
        logger.debug(f"{label}: 学習データが少ないためキャリブレーションを省略します")
        return pred, False
    calibrated = isotonic_calibrate(oof, y_train, learner, clip=0.0)
    return calibrated.calibrate(pred), True


def _fit_fold(X, data, folds, j, levels, config, seed):
    """フォールド j の学習データで全局外パラメータを学習し、テストデータを予測"""
    train = folds.train_index(j)
    test = folds.test_index(j)
    Xtr, Xte = X[train], X[test]
    a, y, s, v2 = data.a[train], data.y[train], data.s[train], data.v2[train]
    flags = {}

    def clip(p):
        return np.clip(p, config.clip, 1.0 - config.clip)

    def factor(rows, response, name, arm=None, level=None):
        if not np.any(rows):
            raise NuisanceFitError("学習データの部分集合が空です", fold=j, arm=arm, nuisance=name)
        key_seed = derive_seed(seed, j, name, f"a={arm}", f"v2={level}")
        pred, calibrated = fit_predict(
            Xtr[rows], response[rows], Xte, config, key_seed, label=f"fold={j} {name} a={arm}"
        )
        flags[name] = flags.get(name, True) and calibrated
        return pred

    everyone = np.ones(len(train), dtype=bool)
    g1 = factor(everyone, a, "g")
    r_a1 = factor(s == 1, a, "r_a")
    r_s = clip(factor(everyone, s, "r_s"))

    out = {
        "test": test,
        "ghat": np.column_stack([clip(1.0 - g1), clip(g1)]),
        "r_a": np.column_stack([clip(1.0 - r_a1), clip(r_a1)]),
        "r_s": r_s,
        "mhat": np.empty((len(test), 2)),
        "r_y": np.empty((len(test), 2)),
        "bhat": {level: np.empty((len(test), 2)) for level in levels},
    }
    for arm in (0, 1):
        out["mhat"][:, arm] = clip(factor(a == arm, y, "m", arm))
        out["r_y"][:, arm] = clip(factor((a == arm) & (s == 1), y, "r_y", arm))
        responders = (a == arm) & (y == 1) & (s == 1)
        for level in levels:
            out["bhat"][level][:, arm] = clip(
                factor(responders, (v2 == level).astype(np.float64), "b", arm, level)
            )
    out["rhat"] = clip(out["r_y"] * out["r_a"] * r_s[:, None])
    out["flags"] = flags
    logger.debug(f"フォールド {j}: 学習={len(train)}, 予測={len(test)}")
    return out


def fit_nuisances(data, folds, v2_levels, config=None, seed=0):
    """
    クロスフィッティングで局外パラメータ g, m, b, r を推定する

    r は3つの因子を別々に学習・キャリブレーションして掛け合わせ、最後に切り詰めます。

    Parameters
    ----------
    data : Dataset
        融合試験データ
    folds : FoldPlan
        フォールド分割
    v2_levels : int or sequence of int
        b を推定する V2 の水準（観測値に含まれている必要がある）
    config : LearnerConfig, optional
        学習器の設定
    seed : int
        学習器のシード

    Returns
    -------
    NuisanceFits
        すべての値は [clip, 1-clip] の範囲

    Raises
    ------
    ParameterError
        V2 水準が観測値にない、またはフォールド分割の大きさが合わない場合
    NuisanceFitError
        いずれかのフォールドで学習用部分集合が空の場合
    """
    config = config or LearnerConfig()
    levels = tuple(sorted({int(v) for v in np.atleast_1d(v2_levels)}))
    observed = set(data.v2_levels())
    for level in levels:
        if level not in observed:
            raise ParameterError("V2 の水準が観測値に含まれていません", name="v2_level", value=level)
    if folds.n != data.n:
        raise ParameterError("フォールド分割とデータの大きさが一致しません", name="folds", value=folds.n)

    X = nuisance_design(config).expand(data.columns())
    logger.info(f"局外パラメータを推定します: n={data.n}, J={folds.J}, V2水準={levels}")
    results = Parallel(n_jobs=config.n_jobs)(
        delayed(_fit_fold)(X, data, folds, j, levels, config, seed) for j in range(folds.J)
    )

    n = data.n
    ghat, mhat, rhat, r_y, r_a = (np.empty((n, 2)) for _ in range(5))
    r_s = np.empty(n)
    bhat = {level: np.empty((n, 2)) for level in levels}
    flags = {}
    for result in results:
        test = result["test"]
        ghat[test], mhat[test], rhat[test] = result["ghat"], result["mhat"], result["rhat"]
        r_y[test], r_a[test], r_s[test] = result["r_y"], result["r_a"], result["r_s"]
        for level in levels:
            bhat[level][test] = result["bhat"][level]
        for name, value in result["flags"].items():
            flags[name] = flags.get(name, True) and value

    calibrated = {
        "g": flags.get("g", False),
        "m": flags.get("m", False),
        "b": flags.get("b", False),
        "r": all(flags.get(name, False) for name in ("r_y", "r_a", "r_s")),
    }
    return NuisanceFits(
        ghat=ghat,
        mhat=mhat,
        bhat=bhat,
        rhat=rhat,
        fold=folds.assignment.copy(),
        clip=config.clip,
        calibrated=calibrated,
        r_factors={"r_y": r_y, "r_a": r_a, "r_s": r_s},
    )


def oracle_nuisances(data, params, v2_levels=(0, 1)):
    """
    データ生成機構から解析的に求めた真の局外パラメータ

    切り詰めは行いません（clip=None）。

    Parameters
    ----------
    data : Dataset
        レコードの (W, V1) を使う
    params : DgpParams
        データ生成機構のパラメータ
    v2_levels : sequence of int
        b を求める V2 の水準（0 または 1）

    Returns
    -------
    NuisanceFits
    """
    probs = record_probabilities(params, data)
    q1, p_s, p_y = probs["q1"], probs["p_s"], probs["p_y"]
    q = {0: 1.0 - q1, 1: q1}
    mhat = np.column_stack([q[0] * p_y[:, a, 0] + q[1] * p_y[:, a, 1] for a in (0, 1)])
    g1 = params.p_treat * p_s
    r_a = np.column_stack([np.full(data.n, 1.0 - params.p_treat), np.full(data.n, params.p_treat)])
    bhat = {
        int(level): np.column_stack([q[level] * p_y[:, a, level] / mhat[:, a] for a in (0, 1)])
        for level in v2_levels
    }
    return NuisanceFits(
        ghat=np.column_stack([1.0 - g1, g1]),
        mhat=mhat,
        bhat=bhat,
        rhat=mhat * r_a * p_s[:, None],
        fold=np.full(data.n, -1, dtype=np.int64),
        clip=None,
        calibrated={"g": False, "m": False, "b": False, "r": False},
        r_factors={"r_y": mhat.copy(), "r_a": r_a, "r_s": p_s},
    )
