#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
シミュレーションのデータ生成機構と真値オラクル

融合試験データ (W1, W2, V11, V12, V13, V2, S, A, Y) を生成し、
反事実アウトカム Y_0, Y_1 のモンテカルロ・シミュレーションによって
CATE τ(v1, v2)、CPE τ̃(v1, v2)、セル確率 P(v1, v2) の真値表を作ります。
"""

import dataclasses
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy import special

from .dataset import MISSING_V2, make_dataset
from .errors import OracleError, ParameterError
from .utils import STREAM_DATA, STREAM_ORACLE, block_uniforms
from .utils import expit as _expit

logger = logging.getLogger(__name__)

N_CELLS = 16
N_V1_CELLS = 8
ORACLE_BLOCK = 2**18
MIN_ORACLE_REPLICATES = 10**6

# Y モデルの係数のうち治療 A を含む項の位置
_Y_TREATMENT_TERMS = (3, 7, 8, 9, 11)


@dataclass(frozen=True)
class DgpParams:
    """
    データ生成機構のパラメータ

    係数タプルの並び:

    - v11, v12, v13 : (切片, W1, W2)
    - v2 : (切片, V11, V12, V13, W1, W2)
    - s : (切片, W1, W2, V11, V12, V13)
    - y : (切片, W1, W2, A, V11, V12, V13, V11·A, V12·A, V13·A, V2, V2·A)

    P(A=1|S) = p_treat·S なので、S=0 では常に A=0 です。
    """

    seed: int = 0
    n: int = 1000
    p_w1: float = 0.33
    w2_shape: Tuple[float, float] = (2.0, 2.0)
    v11: Tuple[float, ...] = (0.5, -0.2, 0.15)
    v12: Tuple[float, ...] = (-0.3, 0.1, -0.6)
    v13: Tuple[float, ...] = (0.1, 0.3, 0.2)
    v2: Tuple[float, ...] = (-0.5, 0.6, -0.4, 0.3, 0.1, -0.2)
    s: Tuple[float, ...] = (0.0, 0.5, -0.3, 0.2, -0.4, 0.3)
    p_treat: float = 0.5
    y: Tuple[float, ...] = (
        -1.5, 0.3, -0.4, 0.1, 0.5, -0.8, 0.2, 1.0, -1.2, 0.5, 0.9, 1.2
    )

    def __post_init__(self):
        if int(self.n) < 1:
            raise ParameterError("サンプルサイズ n は1以上である必要があります", name="n", value=self.n)
        if not 0 <= int(self.seed) < 2**64:
            raise ParameterError("シードは符号なし64ビット整数である必要があります", name="seed", value=self.seed)
        expected = {"v11": 3, "v12": 3, "v13": 3, "v2": 6, "s": 6, "y": 12, "w2_shape": 2}
        for name, length in expected.items():
            value = getattr(self, name)
            if len(value) != length:
                raise ParameterError(f"{name} の係数の数は {length} である必要があります", name=name, value=value)
            object.__setattr__(self, name, tuple(float(c) for c in value))
        for name in ("p_w1", "p_treat"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ParameterError(f"{name} は確率である必要があります", name=name, value=getattr(self, name))
        if min(self.w2_shape) <= 0:
            raise ParameterError("Beta分布の形状パラメータは正である必要があります", name="w2_shape", value=self.w2_shape)

    def with_overrides(self, **changes):
        """指定したフィールドだけを置き換えたコピー"""
        return dataclasses.replace(self, **changes)

    def zero_treatment_effect(self):
        """Y モデルの治療 A を含む係数をすべて0にしたコピー（治療効果なし）"""
        y = list(self.y)
        for k in _Y_TREATMENT_TERMS:
            y[k] = 0.0
        return self.with_overrides(y=tuple(y))

    def intercept_only(self):
        """すべての構造方程式の傾きを0にし、切片だけを残したコピー"""
        def zero_slopes(coef):
            return (coef[0],) + (0.0,) * (len(coef) - 1)

        return self.with_overrides(
            v11=zero_slopes(self.v11),
            v12=zero_slopes(self.v12),
            v13=zero_slopes(self.v13),
            v2=zero_slopes(self.v2),
            s=zero_slopes(self.s),
            y=zero_slopes(self.y),
        )

    def to_dict(self):
        result = {}
        for field in dataclasses.fields(self):
            value = getattr(self, field.name)
            result[field.name] = list(value) if isinstance(value, tuple) else value
        return result


def expit(x):
    """
    逆ロジット関数 1/(1+e^{-x})

    Parameters
    ----------
    x : float or numpy.ndarray
        有限の実数

    Returns
    -------
    float or numpy.ndarray
        (0, 1) の確率。極端な x では 0 または 1 に飽和
    """
    result = _expit(np.asarray(x, dtype=np.float64))
    return float(result) if np.ndim(result) == 0 else result


def _linear(coef, *terms):
    eta = coef[0]
    for c, t in zip(coef[1:], terms):
        eta = eta + c * t
    return eta


def v1_probabilities(params, w1, w2):
    """P(V1k=1|W) を (p11, p12, p13) として返す"""
    return (
        expit(_linear(params.v11, w1, w2)),
        expit(_linear(params.v12, w1, w2)),
        expit(_linear(params.v13, w1, w2)),
    )


def v2_probability(params, v11, v12, v13, w1, w2):
    """P(V2=1|V1, W)"""
    return expit(_linear(params.v2, v11, v12, v13, w1, w2))


def selection_probability(params, v11, v12, v13, w1, w2):
    """P(S=1|V1, W)"""
    return expit(_linear(params.s, w1, w2, v11, v12, v13))


def outcome_probability(params, a, v11, v12, v13, v2, w1, w2):
    """P(Y=1|A, V1, V2, W)"""
    return expit(
        _linear(
            params.y,
            w1,
            w2,
            a,
            v11,
            v12,
            v13,
            v11 * a,
            v12 * a,
            v13 * a,
            v2,
            v2 * a,
        )
    )


def _draw_structural(params, u):
    """一様乱数の列0..6から (W, V1, V2, S) を生成"""
    w1 = (u[:, 0] < params.p_w1).astype(np.int8)
    w2 = special.betaincinv(params.w2_shape[0], params.w2_shape[1], u[:, 1])
    p11, p12, p13 = v1_probabilities(params, w1, w2)
    v11 = (u[:, 2] < p11).astype(np.int8)
    v12 = (u[:, 3] < p12).astype(np.int8)
    v13 = (u[:, 4] < p13).astype(np.int8)
    v2 = (u[:, 5] < v2_probability(params, v11, v12, v13, w1, w2)).astype(np.int8)
    s = (u[:, 6] < selection_probability(params, v11, v12, v13, w1, w2)).astype(np.int8)
    return w1, w2, v11, v12, v13, v2, s


def sample_dataset(params):
    """
    データ生成機構から n 件の独立なレコードを生成する

    レコードはブロック単位のストリームから生成されるため、同じシードでは
    ビット単位で同じ結果になります。V2 はすべてのレコードで生成され、
    S=1 のときだけ観測済みとしてマークされます（v2_full にマスク前の値）。

    Parameters
    ----------
    params : DgpParams
        パラメータ（seed と n を含む）

    Returns
    -------
    Dataset
    """
    n = int(params.n)
    u = block_uniforms(params.seed, STREAM_DATA, n, 9)
    w1, w2, v11, v12, v13, v2, s = _draw_structural(params, u)
    a = (u[:, 7] < params.p_treat * s).astype(np.int8)
    y = (u[:, 8] < outcome_probability(params, a, v11, v12, v13, v2, w1, w2)).astype(np.int8)
    observed_v2 = np.where(s == 1, v2, MISSING_V2)
    logger.debug(f"データセットを生成しました: n={n}, seed={params.seed}")
    return make_dataset(s, w1, w2, v11, v12, v13, observed_v2, a, y, v2_full=v2)


def record_probabilities(params, data):
    """
    各レコードの (W, V1) における真の条件付き確率

    Returns
    -------
    dict
        'q1' = P(V2=1|V1,W), 'p_s' = P(S=1|V1,W),
        'p_y' = P(Y=1|A=a,V1,V2=v,W) を形状 (n, 2, 2) [a, v] で格納
    """
    v11, v12, v13 = data.v11, data.v12, data.v13
    w1, w2 = data.w1.astype(np.float64), data.w2
    p_y = np.empty((data.n, 2, 2))
    for a in (0, 1):
        for v in (0, 1):
            p_y[:, a, v] = outcome_probability(params, a, v11, v12, v13, v, w1, w2)
    return {
        "q1": v2_probability(params, v11, v12, v13, w1, w2),
        "p_s": selection_probability(params, v11, v12, v13, w1, w2),
        "p_y": p_y,
    }


def cell_bits(cell):
    """セル番号 (0..15) を (v11, v12, v13, v2) に変換"""
    v1 = cell // 2
    return ((v1 >> 2) & 1, (v1 >> 1) & 1, v1 & 1, cell & 1)


@dataclass(frozen=True, eq=False)
class TruthTable:
    """
    真値表

    反事実シミュレーションの計数を (S, セル) ごとに保持し、セル確率・CATE・CPE
    とそのモンテカルロ標準誤差を導出します。セル番号は
    ((v11*2 + v12)*2 + v13)*2 + v2 です。
    """

    counts: np.ndarray  # 形状 (4, 2, 16): [n, y1, y0, disc] × S × セル
    replicates: int
    seed: int

    @property
    def n_cell(self):
        return self.counts[0].sum(axis=0)

    @property
    def n_v1(self):
        return self.n_cell.reshape(N_V1_CELLS, 2).sum(axis=1)

    def _diff(self):
        return (self.counts[1] - self.counts[2]).sum(axis=0)

    def _disc(self):
        return self.counts[3].sum(axis=0)

    def _per_v1(self, values):
        return np.repeat(values, 2)

    @property
    def prob(self):
        return self.n_cell / self.replicates

    @property
    def cate(self):
        return self._diff() / self.n_cell

    @property
    def cpe(self):
        return self._diff() / self._per_v1(self.n_v1)

    @property
    def se_prob(self):
        p = self.prob
        return np.sqrt(p * (1.0 - p) / self.replicates)

    @property
    def se_cate(self):
        n = self.n_cell
        var = np.maximum(self._disc() / n - self.cate**2, 0.0)
        return np.sqrt(var / n)

    @property
    def se_cpe(self):
        n = self._per_v1(self.n_v1)
        var = np.maximum(self._disc() / n - self.cpe**2, 0.0)
        return np.sqrt(var / n)

    @property
    def mc_se(self):
        """セルごとのモンテカルロ標準誤差（確率・CATE・CPE の最大値）"""
        return np.maximum(np.maximum(self.se_prob, self.se_cate), self.se_cpe)

    def f_tilde(self, a):
        """f̃(a, v1, v2) = P(V2=v2, Y_a=1 | V1=v1) を16セル分返す"""
        y_a = self.counts[1 if a == 1 else 2].sum(axis=0)
        return y_a / self._per_v1(self.n_v1)

    def kappa(self, a, v2):
        """
        κ(a, v2) = P(V2=v2, Y_a=1) とその標準誤差

        Returns
        -------
        (float, float)
        """
        y_a = self.counts[1 if a == 1 else 2].sum(axis=0)
        value = float(y_a[v2::2].sum() / self.replicates)
        return value, float(np.sqrt(value * (1.0 - value) / self.replicates))

    def _stratum_counts(self, stratum):
        if stratum is None:
            return self.counts.sum(axis=1)
        return self.counts[:, int(stratum)]

    def counterfactual_mean(self, a, stratum=None):
        """E[Y_a]（stratum を指定すると E[Y_a | S=stratum]）とその標準誤差"""
        counts = self._stratum_counts(stratum)
        total = counts[0].sum()
        value = float(counts[1 if a == 1 else 2].sum() / total)
        return value, float(np.sqrt(value * (1.0 - value) / total))

    def policy_value(self, arms, stratum=None):
        """
        セル単位のルール d の価値 E[Y_d]

        Parameters
        ----------
        arms : array_like
            形状 (16,)（全 S 共通）または (2, 16)（S ごと）の割り付け 0/1
        stratum : int, optional
            指定すると S=stratum の層での価値

        Returns
        -------
        (float, float)
            価値とその標準誤差
        """
        arms = np.broadcast_to(np.asarray(arms, dtype=np.int64), (2, N_CELLS))
        picked = np.where(arms == 1, self.counts[1], self.counts[2])
        if stratum is None:
            total, hits = self.counts[0].sum(), picked.sum()
        else:
            total, hits = self.counts[0, int(stratum)].sum(), picked[int(stratum)].sum()
        value = float(hits / total)
        return value, float(np.sqrt(value * (1.0 - value) / total))

    def v1_probability(self, stratum=None):
        """P(V1=v1)（stratum 指定時は P(V1=v1|S=stratum)）"""
        n = self._stratum_counts(stratum)[0].reshape(N_V1_CELLS, 2).sum(axis=1)
        return n / n.sum()

    def v1_cate(self):
        """V2 を無視した CATE τ(v1)"""
        return self._diff().reshape(N_V1_CELLS, 2).sum(axis=1) / self.n_v1

    def oracle_rule(self):
        """真の CPE の符号ルール 1(τ̃ > 0)（16セル）"""
        return (self.cpe > 0).astype(np.int64)

    def sign_constant_v1(self):
        """V2 の水準をまたいで τ̃ の符号が一定な V1 セル（8要素のブール配列）"""
        positive = (self.cpe > 0).reshape(N_V1_CELLS, 2)
        return positive[:, 0] == positive[:, 1]

    def to_frame(self):
        """CSV `v11,v12,v13,v2,prob,cate,cpe,mc_se` 用の DataFrame"""
        bits = np.array([cell_bits(c) for c in range(N_CELLS)])
        return pd.DataFrame(
            {
                "v11": bits[:, 0],
                "v12": bits[:, 1],
                "v13": bits[:, 2],
                "v2": bits[:, 3],
                "prob": self.prob,
                "cate": self.cate,
                "cpe": self.cpe,
                "mc_se": self.mc_se,
            }
        )


def _oracle_shard(params, block, rows, block_size):
    """1ブロック分の反事実シミュレーションを行い、計数を返す"""
    u = block_uniforms(params.seed, STREAM_ORACLE, rows, 8, start_block=block, block_size=block_size)
    w1, w2, v11, v12, v13, v2, s = _draw_structural(params, u)
    y1 = u[:, 7] < outcome_probability(params, 1, v11, v12, v13, v2, w1, w2)
    y0 = u[:, 7] < outcome_probability(params, 0, v11, v12, v13, v2, w1, w2)
    index = s.astype(np.int64) * N_CELLS + ((v11.astype(np.int64) * 2 + v12) * 2 + v13) * 2 + v2
    size = 2 * N_CELLS
    counts = np.stack(
        [
            np.bincount(index, minlength=size),
            np.bincount(index[y1], minlength=size),
            np.bincount(index[y0], minlength=size),
            np.bincount(index[y1 != y0], minlength=size),
        ]
    )
    return counts.reshape(4, 2, N_CELLS).astype(np.int64)


def oracle_truth(params, replicates=10**7, n_jobs=1, block_size=ORACLE_BLOCK):
    """
    反事実シミュレーションによる真値表

    Y_0 と Y_1 は同じ外生一様乱数を共有します（共通乱数法）。
    複製はブロックに分割され、各ブロックは独立に派生したストリームを使うので、
    ワーカー数に関係なく同じ結果になります（計数の整数和で統合）。

    Parameters
    ----------
    params : DgpParams
        パラメータ（seed を使用、n は無視）
    replicates : int
        シミュレーションするレコード数（10^6 以上）
    n_jobs : int
        joblib のワーカー数
    block_size : int
        1ブロックあたりのレコード数

    Returns
    -------
    TruthTable

    Raises
    ------
    ParameterError
        replicates が 10^6 未満の場合
    OracleError
        占有数0のセルがある場合
    """
    replicates = int(replicates)
    if replicates < MIN_ORACLE_REPLICATES:
        raise ParameterError(
            "真値オラクルの複製数は 10^6 以上である必要があります",
            name="replicates",
            value=replicates,
        )
    blocks = [
        (b, min(block_size, replicates - b * block_size))
        for b in range((replicates + block_size - 1) // block_size)
    ]
    logger.info(f"真値オラクルを実行します: replicates={replicates}, blocks={len(blocks)}")
    shards = Parallel(n_jobs=n_jobs)(
        delayed(_oracle_shard)(params, b, rows, block_size) for b, rows in blocks
    )
    counts = np.zeros((4, 2, N_CELLS), dtype=np.int64)
    for shard in shards:
        counts += shard

    n_cell = counts[0].sum(axis=0)
    empty = np.flatnonzero(n_cell == 0)
    if empty.size:
        raise OracleError("占有数0のセルがあります", cell=cell_bits(int(empty[0])))
    return TruthTable(counts=counts, replicates=replicates, seed=int(params.seed))
