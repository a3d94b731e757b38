#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
治療ルールの価値 E[Y_d] の TMLE

クロスフィットした初期推定 ĝ と m̂ を、ルール d に沿った clever covariate
1(A=d)/ĝ(d) を重みとするロジスティック揺らぎで更新し、推定方程式
（効率的影響関数の平均 = 0）を解きます。ルール間の比較は対数リスク比の
デルタ法で行います。

既定では S=1 の層（両治療群が無作為化されている試験）で評価します。
stratum=None で全データ（S を共変量に加える）を使えますが、S=0 の層では
治療群1が割り付けられないため、d(i)=1 となる S=0 のレコードがあると
PositivityError になります。
"""

import logging
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.stats import norm

from .crossfit import fit_predict, nuisance_design
from .errors import ParameterError, PositivityError, TargetingError
from .learners import LearnerConfig
from .utils import derive_seed, expit, logit

logger = logging.getLogger(__name__)

MAX_TARGETING_ITERATIONS = 20
MAX_STEP = 5.0
# logit の発散を防ぐ初期推定の下限
Q_FLOOR = 1e-6
CONFIDENCE = 0.95


@dataclass(frozen=True, eq=False)
class InitialFits:
    """
    層内のクロスフィット初期推定

    ghat は切り詰め前、mhat は [clip, 1-clip] に切り詰め済みです。
    index は元のデータでのレコード番号です。
    """

    index: np.ndarray
    ghat: np.ndarray
    mhat: np.ndarray
    a: np.ndarray
    y: np.ndarray
    s: np.ndarray
    stratum: Optional[int]
    clip: float

    @property
    def n(self):
        return int(self.index.shape[0])


@dataclass(frozen=True, eq=False)
class PolicyValueEstimate:
    """ルール d の価値 E[Y_d] の TMLE 推定値"""

    rule_id: str
    psi: float
    se: float
    ci: Tuple[float, float]
    mean_eif: float
    eif: np.ndarray
    n: int
    stratum: Optional[int]
    epsilon: float
    iterations: int

    def to_row(self):
        return {"rule": self.rule_id, "psi": self.psi, "se": self.se, "lo": self.ci[0], "hi": self.ci[1]}


@dataclass(frozen=True)
class PolicyContrast:
    """ルール間のリスク比（rule / reference）と減少率"""

    rule_id: str
    reference_id: str
    rr: float
    log_rr: float
    se_log_rr: float
    ci: Tuple[float, float]

    @property
    def percent_decrease(self):
        return 100.0 * (1.0 - self.rr)

    @property
    def percent_decrease_ci(self):
        return (100.0 * (1.0 - self.ci[1]), 100.0 * (1.0 - self.ci[0]))

    def to_row(self):
        lo, hi = self.percent_decrease_ci
        return {
            "rule": self.rule_id,
            "reference": self.reference_id,
            "rr": self.rr,
            "lo": self.ci[0],
            "hi": self.ci[1],
            "percent_decrease": self.percent_decrease,
            "pd_lo": lo,
            "pd_hi": hi,
        }


def _z():
    return float(norm.ppf(0.5 + CONFIDENCE / 2.0))


def _initial_fold(X, a, y, folds, j, config, seed):
    test = folds.test_index(j)
    if test.size == 0:
        return None
    train = folds.train_index(j)
    Xtr, Xte = X[train], X[test]
    g1, _ = fit_predict(Xtr, a[train], Xte, config, derive_seed(seed, j, "tmle_g"), label=f"fold={j} tmle g")
    mhat = np.empty((test.size, 2))
    for arm in (0, 1):
        rows = a[train] == arm
        if not np.any(rows):
            # 構造的ゼロ。この群を割り付けるレコードは _check_structural で弾かれる
            mhat[:, arm] = np.nan
            continue
        mhat[:, arm], _ = fit_predict(
            Xtr[rows], y[train][rows], Xte, config, derive_seed(seed, j, "tmle_m", f"a={arm}"),
            label=f"fold={j} tmle m a={arm}",
        )
    return test, g1, mhat


def fit_initial(data, folds, config=None, stratum=1, seed=0):
    """
    TMLE の初期推定 ĝ(a) = P(A=a | S, V1, W) と m̂(a) = E[Y | A=a, S, V1, W]

    どちらも学習フォールドの外で予測し、[clip, 1-clip] に切り詰めます。

    Parameters
    ----------
    data : Dataset
        融合試験データ
    folds : FoldPlan
        全データのフォールド分割（層に制限して使う）
    config : LearnerConfig, optional
        学習器の設定
    stratum : int or None
        評価する S の層（None は全データ）
    seed : int
        学習器のシード

    Returns
    -------
    InitialFits
    """
    config = config or LearnerConfig()
    if folds.n != data.n:
        raise ParameterError("フォールド分割とデータの大きさが一致しません", name="folds", value=folds.n)
    if stratum is None:
        mask = np.ones(data.n, dtype=bool)
        design = nuisance_design(config, extra_binary=("s",))
    else:
        if stratum not in (0, 1):
            raise ParameterError("層は0、1または None です", name="stratum", value=stratum)
        mask = data.s == stratum
        design = nuisance_design(config)
    index = np.flatnonzero(mask)
    if index.size == 0:
        raise ParameterError("評価する層にレコードがありません", name="stratum", value=stratum)

    sub = data.subset(index)
    sub_folds = folds.restrict(mask)
    X = design.expand(sub.columns())
    a = sub.a.astype(np.float64)
    y = sub.y.astype(np.float64)
    logger.info(f"TMLE 初期推定: 層={stratum}, n={sub.n}, J={folds.J}")
    results = Parallel(n_jobs=config.n_jobs)(
        delayed(_initial_fold)(X, a, y, sub_folds, j, config, seed) for j in range(folds.J)
    )
    ghat = np.empty((sub.n, 2))
    mhat = np.empty((sub.n, 2))
    for result in results:
        if result is None:
            continue
        test, g1, m = result
        ghat[test, 0] = np.clip(1.0 - g1, config.clip, 1.0 - config.clip)
        ghat[test, 1] = np.clip(g1, config.clip, 1.0 - config.clip)
        mhat[test] = np.clip(m, config.clip, 1.0 - config.clip)
    return InitialFits(
        index=index,
        ghat=ghat,
        mhat=mhat,
        a=sub.a.astype(np.int64),
        y=y,
        s=sub.s.astype(np.int64),
        stratum=stratum,
        clip=config.clip,
    )


def _check_structural(initial, d):
    """治療群 d(i) が同じ S のレコードで一度も割り付けられていない場合はエラー"""
    bad = np.zeros(initial.n, dtype=bool)
    for s in np.unique(initial.s):
        in_s = initial.s == s
        for arm in (0, 1):
            if not np.any(in_s & (initial.a == arm)):
                bad |= in_s & (d == arm)
    if np.any(bad):
        raise PositivityError(
            "ルールが割り付ける治療群がその試験で一度も割り付けられていません",
            records=initial.index[bad].tolist(),
            quantity="structural",
        )


def _fluctuate(q0, h, y, tolerance):
    """
    logit(Q*) = logit(Q0) + ε の重み付きロジスティック最尤を Newton 法で解く

    Returns
    -------
    (numpy.ndarray, float, int, float)
        Q*、ε、反復回数、EIF 残差の平均
    """
    eta0 = logit(q0)
    eps = 0.0
    q_star = q0
    mean_eif = float(np.mean(h * (y - q_star)))
    iterations = 0
    while abs(mean_eif) >= tolerance:
        if iterations >= MAX_TARGETING_ITERATIONS:
            raise TargetingError(
                "推定方程式を解けませんでした", iterations=iterations, mean_eif=mean_eif
            )
        score = float(np.sum(h * (y - q_star)))
        fisher = float(np.sum(h * q_star * (1.0 - q_star)))
        if fisher <= 0.0:
            raise TargetingError(
                "揺らぎの情報量が0です", iterations=iterations, mean_eif=mean_eif
            )
        eps += float(np.clip(score / fisher, -MAX_STEP, MAX_STEP))
        q_star = expit(eta0 + eps)
        mean_eif = float(np.mean(h * (y - q_star)))
        iterations += 1
        logger.debug(f"揺らぎ {iterations}: ε={eps:.6g}, 平均EIF={mean_eif:.3g}")
    return q_star, eps, iterations, mean_eif


def _rule_for(initial, rule, data_n):
    d = np.asarray(rule, dtype=np.int64)
    if d.shape != (data_n,) or (initial.n and initial.index[-1] >= data_n):
        raise ParameterError("ルールの長さがデータと一致しません", name="rule", value=d.shape)
    if not np.all((d == 0) | (d == 1)):
        raise ParameterError("ルールの値は0または1です", name="rule")
    return d[initial.index]


def target(initial, rule, rule_id="d", data_n=None):
    """
    初期推定を使ってルール d の価値を TMLE で推定する

    Parameters
    ----------
    initial : InitialFits
        fit_initial の結果
    rule : array_like
        元データの全レコードに対する割り付け 0/1
    rule_id : str
        ルール名
    data_n : int, optional
        元データのレコード数（省略時は rule の長さ）

    Returns
    -------
    PolicyValueEstimate

    Raises
    ------
    PositivityError
        構造的ゼロ、または ĝ(d(i)) が下限を下回るレコードがある場合
    TargetingError
        20回の反復で推定方程式を解けない場合
    """
    data_n = len(rule) if data_n is None else data_n
    d = _rule_for(initial, rule, data_n)
    _check_structural(initial, d)

    rows = np.arange(initial.n)
    g_d = initial.ghat[rows, d]
    bad = (g_d < initial.clip) | ~np.isfinite(g_d)
    if np.any(bad):
        raise PositivityError(
            f"ĝ(d) が下限 {initial.clip} を下回っています (rule={rule_id})",
            records=initial.index[bad].tolist(),
            quantity="ghat",
        )
    q0 = initial.mhat[rows, d]
    missing = ~np.isfinite(q0)
    if np.any(missing):
        raise PositivityError(
            f"学習フォールドに治療群 d(i) のレコードがありません (rule={rule_id})",
            records=initial.index[missing].tolist(),
            quantity="mhat",
        )
    q0 = np.clip(q0, Q_FLOOR, 1.0 - Q_FLOOR)
    h = np.where(initial.a == d, 1.0 / g_d, 0.0)
    n = initial.n
    tolerance = 1.0 / (np.sqrt(n) * np.log(n)) if n > 1 else np.inf

    q_star, eps, iterations, mean_eif = _fluctuate(q0, h, initial.y, tolerance)
    psi = float(np.mean(q_star))
    eif = h * (initial.y - q_star) + q_star - psi
    se = float(np.std(eif, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    half = _z() * se
    logger.info(f"ルール {rule_id}: ψ={psi:.4f} (SE={se:.4f}), 反復={iterations}")
    return PolicyValueEstimate(
        rule_id=rule_id,
        psi=psi,
        se=se,
        ci=(psi - half, psi + half),
        mean_eif=mean_eif,
        eif=eif,
        n=n,
        stratum=initial.stratum,
        epsilon=eps,
        iterations=iterations,
    )


def tmle_policy_value(data, rule, folds, config=None, stratum=1, rule_id="d", seed=0):
    """
    固定したルール d の価値 E[Y_d]（stratum を指定すると E[Y_d | S=stratum]）の TMLE

    Parameters
    ----------
    data : Dataset
        融合試験データ
    rule : array_like
        全レコードに対する割り付け 0/1
    folds : FoldPlan
        フォールド分割
    config : LearnerConfig, optional
        学習器の設定
    stratum : int or None
        評価する S の層（既定は1、None は全データ）
    rule_id : str
        ルール名
    seed : int
        学習器のシード

    Returns
    -------
    PolicyValueEstimate
    """
    initial = fit_initial(data, folds, config, stratum, seed)
    return target(initial, rule, rule_id, data.n)


def evaluate_rules(data, rules: Mapping[str, np.ndarray], folds, config=None, stratum=1, seed=0):
    """
    複数のルールを1組の初期推定で評価する

    Returns
    -------
    dict
        ルール名から PolicyValueEstimate への辞書（rules の順序を保つ）
    """
    if not rules:
        raise ParameterError("評価するルールがありません", name="rules")
    initial = fit_initial(data, folds, config, stratum, seed)
    return {rule_id: target(initial, rule, rule_id, data.n) for rule_id, rule in rules.items()}


def policy_contrast(estimate, reference):
    """
    リスク比 ψ_rule / ψ_reference の推定（対数スケールのデルタ法）

    影響関数は EIF_rule/ψ_rule − EIF_ref/ψ_ref です。両者は同じレコード上の
    推定である必要があります。
    """
    if estimate.n != reference.n or estimate.stratum != reference.stratum:
        raise ParameterError(
            "比較するルールは同じレコードで推定されている必要があります",
            name="reference",
            value=reference.rule_id,
        )
    if estimate.psi <= 0.0 or reference.psi <= 0.0:
        raise ParameterError("リスクが0のルールは比較できません", name="psi", value=(estimate.psi, reference.psi))
    log_rr = float(np.log(estimate.psi) - np.log(reference.psi))
    influence = estimate.eif / estimate.psi - reference.eif / reference.psi
    se = float(np.std(influence, ddof=1) / np.sqrt(estimate.n)) if estimate.n > 1 else 0.0
    half = _z() * se
    return PolicyContrast(
        rule_id=estimate.rule_id,
        reference_id=reference.rule_id,
        rr=float(np.exp(log_rr)),
        log_rr=log_rr,
        se_log_rr=se,
        ci=(float(np.exp(log_rr - half)), float(np.exp(log_rr + half))),
    )


def policy_contrasts(estimates: Dict[str, PolicyValueEstimate], reference):
    """reference 以外の各ルールを reference と比較する"""
    if reference not in estimates:
        raise ParameterError("基準ルールがありません", name="reference", value=reference)
    base = estimates[reference]
    return [policy_contrast(est, base) for rule_id, est in estimates.items() if rule_id != reference]


def estimates_frame(estimates):
    """CSV `rule,psi,se,lo,hi`"""
    values = estimates.values() if isinstance(estimates, dict) else estimates
    return pd.DataFrame([est.to_row() for est in values], columns=["rule", "psi", "se", "lo", "hi"])


def contrasts_frame(contrasts):
    """CSV `rule,reference,rr,lo,hi,percent_decrease,pd_lo,pd_hi`"""
    return pd.DataFrame(
        [c.to_row() for c in contrasts],
        columns=["rule", "reference", "rr", "lo", "hi", "percent_decrease", "pd_lo", "pd_hi"],
    )
