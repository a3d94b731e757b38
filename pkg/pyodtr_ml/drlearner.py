#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
CPE の DR-Learner

κ(a, v2) = P(V2=v2, Y_a=1) の非中心化効率的影響関数 ξ を疑似アウトカムとして作り、
V1 に回帰して f̃(a, v1, v2) を推定します。τ̃(v1, v2) = f̃(1, ·) − f̃(0, ·) です。
比較対象としてプラグイン推定量と、V2 を無視した CATE の DR-Learner も提供します。
"""

import json
import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
import pandas as pd

from .dgp import N_V1_CELLS, cell_bits
from .errors import ParameterError, PositivityError, RuleError
from .learners import DesignSpec, LearnerConfig, fit_cell_means, fit_linear_lasso

logger = logging.getLogger(__name__)

# 第2段階回帰の共変量 V1
V1_DESIGN = DesignSpec(("v11", "v12", "v13"), (), "main")


@dataclass(frozen=True, eq=False)
class PseudoOutcome:
    """
    治療群 a・V2 水準 v2 の疑似アウトカム

    xi = phi_b + phi_m + plug が各レコードで厳密に成り立ちます。
    """

    a: int
    v2_level: Optional[int]
    xi: np.ndarray
    phi_b: np.ndarray
    phi_m: np.ndarray
    plug: np.ndarray


def _check_positivity(fits, a, v2_level):
    floor = fits.clip if fits.clip is not None else 0.0
    for name, values in (("rhat", fits.rhat[:, a]), ("ghat", fits.ghat[:, a])):
        bad = np.flatnonzero((values < floor) | (values <= 0.0) | ~np.isfinite(values))
        if bad.size:
            raise PositivityError(
                f"{name} が下限 {floor} を下回っています (a={a}, v2={v2_level})",
                records=bad.tolist(),
                quantity=name,
            )


def compute_pseudo_outcome(data, fits, a, v2_level):
    """
    疑似アウトカム ξ を計算する

    phi_b = 1(A=a, Y=1, S=1)/r · (1(V2=v2)·m − b·m)
    phi_m = 1(A=a)/g · (Y·b − b·m)
    plug  = b·m

    Parameters
    ----------
    data : Dataset
        融合試験データ
    fits : NuisanceFits
        局外パラメータ（全レコード）
    a : int
        治療群
    v2_level : int
        V2 の水準

    Returns
    -------
    PseudoOutcome

    Raises
    ------
    PositivityError
        rhat または ghat が下限を下回る場合
    """
    if fits.n != data.n:
        raise ParameterError("局外パラメータとデータの大きさが一致しません", name="fits", value=fits.n)
    _check_positivity(fits, a, v2_level)
    g = fits.ghat[:, a]
    m = fits.mhat[:, a]
    r = fits.rhat[:, a]
    b = fits.b(v2_level)[:, a]

    treated = data.a == a
    responders = treated & (data.y == 1) & (data.s == 1)
    matches = (data.v2 == v2_level).astype(np.float64)

    plug = b * m
    phi_b = np.where(responders, (matches * m - plug) / r, 0.0)
    phi_m = np.where(treated, (data.y * b - plug) / g, 0.0)
    xi = phi_b + phi_m + plug
    return PseudoOutcome(a, v2_level, xi, phi_b, phi_m, plug)


class CpeModel:
    """
    第2段階の学習済み曲面 f̃(a, v1, v2) と τ̃ の予測

    learners は (a, v2水準) から学習器への辞書です。V2 を無視した CATE モデルでは
    v2水準は None です。
    """

    def __init__(self, learners, kind="drlearner", design=V1_DESIGN):
        self.learners: Dict[Tuple[int, Optional[int]], object] = dict(learners)
        self.kind = kind
        self.design = design
        self.levels = tuple(sorted({level for _, level in self.learners}, key=lambda v: -1 if v is None else v))
        for level in self.levels:
            for a in (0, 1):
                if (a, level) not in self.learners:
                    raise ParameterError("両方の治療群の第2段階モデルが必要です", name="arm", value=(a, level))

    @property
    def ignores_v2(self):
        return self.levels == (None,)

    def _level_key(self, v2_level):
        key = None if self.ignores_v2 else v2_level
        if key not in self.levels:
            raise RuleError("この V2 水準のモデルがありません", v2_level=v2_level)
        return key

    def predict_arm(self, a, v2_level, v1_columns):
        """f̃(a, v1, v2) の予測"""
        return self.learners[(a, self._level_key(v2_level))].predict(v1_columns)

    def predict(self, v1_columns, v2_level=None):
        """τ̃(v1, v2) = f̃(1, ·) − f̃(0, ·) の予測"""
        key = self._level_key(v2_level)
        return self.learners[(1, key)].predict(v1_columns) - self.learners[(0, key)].predict(v1_columns)

    def predict_v1(self, v2_level=None):
        """8つの V1 セルでの予測（セル番号順）"""
        return self.predict(self.design.cell_grid(), v2_level)

    def predict_cells(self):
        """
        16個の (V1, V2) セルでの τ̃ の予測（真値表と同じ順序）

        V2 を無視したモデルでは V2 の両水準に同じ値を入れます。
        """
        out = np.empty(2 * N_V1_CELLS)
        for v2 in (0, 1):
            out[v2::2] = self.predict_v1(v2)
        return out

    def cell_table(self):
        """CSV `v11,v12,v13,v2,tau_tilde_hat`（学習した V2 水準ごと）"""
        rows = []
        levels = (0, 1) if self.ignores_v2 else self.levels
        for level in levels:
            values = self.predict_v1(level)
            for v1 in range(N_V1_CELLS):
                v11, v12, v13, _ = cell_bits(v1 * 2)
                rows.append((v11, v12, v13, level, values[v1]))
        frame = pd.DataFrame(rows, columns=["v11", "v12", "v13", "v2", "tau_tilde_hat"])
        return frame.sort_values(["v11", "v12", "v13", "v2"], kind="stable").reset_index(drop=True)

    def to_text(self):
        """各学習器のテキスト表現（キー付き）"""
        return json.dumps(
            {
                "kind": self.kind,
                "learners": [
                    {"a": a, "v2": level, "learner": learner.to_dict()}
                    for (a, level), learner in sorted(self.learners.items(), key=lambda kv: str(kv[0]))
                ],
            },
            sort_keys=True,
        )


def _second_stage(data, response, config, seed=0):
    """V1 への第2段階回帰"""
    config = config or LearnerConfig()
    columns = data.columns()
    if config.second_stage == "cell_means":
        return fit_cell_means(V1_DESIGN.cell_index(columns), response, design=V1_DESIGN)
    X = V1_DESIGN.expand(columns)
    return fit_linear_lasso(X, response, cv_folds=config.cv_folds, seed=seed, config=config, design=V1_DESIGN)


def fit_cpe(data, pseudo, config=None, seed=0):
    """
    疑似アウトカムを治療群ごとに V1 へ回帰し、CPE モデルを作る

    Parameters
    ----------
    data : Dataset
        融合試験データ
    pseudo : iterable of PseudoOutcome
        各 V2 水準について a=0 と a=1 の両方を含むこと
    config : LearnerConfig, optional
        第2段階学習器の設定
    seed : int
        線形第2段階の交差検証シード

    Returns
    -------
    CpeModel
    """
    learners = {}
    for outcome in pseudo:
        learners[(outcome.a, outcome.v2_level)] = _second_stage(data, outcome.xi, config, seed)
    if not learners:
        raise ParameterError("疑似アウトカムがありません", name="pseudo")
    return CpeModel(learners, kind="drlearner")


def fit_drlearner(data, fits, v2_levels=None, config=None, seed=0):
    """全 V2 水準・両治療群の疑似アウトカムを作って fit_cpe を呼ぶ"""
    levels = fits.v2_levels if v2_levels is None else tuple(np.atleast_1d(v2_levels))
    pseudo = [compute_pseudo_outcome(data, fits, a, int(level)) for level in levels for a in (0, 1)]
    return fit_cpe(data, pseudo, config, seed)


def fit_plugin(data, fits, v2_levels=None, config=None, seed=0):
    """
    プラグイン推定量: b̂(a)·m̂(a) を治療群ごとに V1 へ回帰する

    線形平滑化器（セル平均・最小二乗）では、治療群ごとの回帰の差は
    b̂(1)m̂(1) − b̂(0)m̂(0) の回帰と一致します。
    """
    levels = fits.v2_levels if v2_levels is None else tuple(np.atleast_1d(v2_levels))
    learners = {}
    for level in levels:
        for a in (0, 1):
            plug = fits.b(int(level))[:, a] * fits.mhat[:, a]
            learners[(a, int(level))] = _second_stage(data, plug, config, seed)
    return CpeModel(learners, kind="plugin")


def fit_cate_v1_only(data, fits, config=None, seed=0):
    """
    V2 を無視した CATE τ(v1) の DR-Learner

    治療群ごとの疑似アウトカム 1(A=a)/g·(Y − m) + m を V1 に回帰します。
    """
    learners = {}
    for a in (0, 1):
        g = fits.ghat[:, a]
        floor = fits.clip if fits.clip is not None else 0.0
        bad = np.flatnonzero((g < floor) | (g <= 0.0))
        if bad.size:
            raise PositivityError(f"ghat が下限を下回っています (a={a})", records=bad.tolist(), quantity="ghat")
        m = fits.mhat[:, a]
        treated = data.a == a
        pseudo = np.where(treated, (data.y - m) / g, 0.0) + m
        learners[(a, None)] = _second_stage(data, pseudo, config, seed)
    return CpeModel(learners, kind="cate")


@dataclass(frozen=True)
class RemainderResult:
    """V1 セルごとの2次剰余項の評価"""

    mean: np.ndarray
    se: np.ndarray
    c_b: np.ndarray
    c_m: np.ndarray
    c_kappa: np.ndarray
    count: np.ndarray


def remainder_diagnostic(true_fits, perturbed_fits, data, a, v2_level):
    """
    2次剰余項 Rem = E[−C'_b − C'_m + C'_κ | V1] のモンテカルロ評価

    C'_b = m'(r − r')/r' · (b − b')
    C'_m = b'(g − g')/g' · (m − m')
    C'_κ = (b − b')(m − m')

    ここで ' は摂動した局外パラメータです。f̃ − E[ξ(摂動) | V1] に等しく、
    (g, b)、(r, m)、(b, m) のいずれかの組が正しければ0になります。

    Parameters
    ----------
    true_fits, perturbed_fits : NuisanceFits
        同じ (W, V1) 標本上で評価した真の局外パラメータと摂動したもの
    data : Dataset
        V1 セルの取得に使う標本
    a : int
        治療群
    v2_level : int
        V2 の水準

    Returns
    -------
    RemainderResult
        8つの V1 セルごとの平均・標準誤差・各成分の平均
    """
    g, gp = true_fits.ghat[:, a], perturbed_fits.ghat[:, a]
    m, mp = true_fits.mhat[:, a], perturbed_fits.mhat[:, a]
    r, rp = true_fits.rhat[:, a], perturbed_fits.rhat[:, a]
    b, bp = true_fits.b(v2_level)[:, a], perturbed_fits.b(v2_level)[:, a]

    c_b = mp * (r - rp) / rp * (b - bp)
    c_m = bp * (g - gp) / gp * (m - mp)
    c_kappa = (b - bp) * (m - mp)
    rem = -c_b - c_m + c_kappa

    cells = data.v1_cell_index()
    count = np.bincount(cells, minlength=N_V1_CELLS)
    safe = np.maximum(count, 1)

    def cell_mean(values):
        return np.bincount(cells, weights=values, minlength=N_V1_CELLS) / safe

    mean = cell_mean(rem)
    second = cell_mean(rem**2)
    var = np.maximum(second - mean**2, 0.0)
    se = np.sqrt(var / np.maximum(count - 1, 1))
    return RemainderResult(mean, se, cell_mean(c_b), cell_mean(c_m), cell_mean(c_kappa), count)
