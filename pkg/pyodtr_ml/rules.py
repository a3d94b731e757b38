#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
治療ルール

CPE の推定曲面から各被験者の治療決定を作ります。V2 が欠測している被験者には
V2 の水準にわたる τ̃ の最小値・最大値を上下限とし、符号が一致すれば決定的
（decisive）、異なれば曖昧（ambiguous）とします。曖昧な被験者は、ルール d1 では
治療群1に、ルール d0 では治療群0に割り付けます。τ̃ = 0 は負として扱います（群0）。
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd

from .errors import ParameterError, RuleError

logger = logging.getLogger(__name__)

DECISIVE = "decisive"
AMBIGUOUS = "ambiguous"


@dataclass(frozen=True)
class RuleDecision:
    """1被験者の治療決定"""

    index: int
    lower: float
    upper: float
    status: str
    d1: int
    d0: int
    d_opt: Optional[int] = None

    @property
    def decisive(self):
        return self.status == DECISIVE


@dataclass(frozen=True, eq=False)
class DecisionTable:
    """データセット全体の治療決定（列指向）"""

    lower: np.ndarray
    upper: np.ndarray
    decisive: np.ndarray
    d1: np.ndarray
    d0: np.ndarray
    observed: np.ndarray

    @property
    def n(self):
        return int(self.lower.shape[0])

    def __len__(self):
        return self.n

    def decision(self, i):
        """i 番目の決定を RuleDecision として返す"""
        return RuleDecision(
            index=int(i),
            lower=float(self.lower[i]),
            upper=float(self.upper[i]),
            status=DECISIVE if self.decisive[i] else AMBIGUOUS,
            d1=int(self.d1[i]),
            d0=int(self.d0[i]),
            d_opt=int(self.d1[i]) if self.observed[i] else None,
        )

    def __iter__(self):
        return (self.decision(i) for i in range(self.n))

    def to_frame(self):
        """CSV `i,status,lower,upper,d1,d0`"""
        return pd.DataFrame(
            {
                "i": np.arange(self.n),
                "status": np.where(self.decisive, DECISIVE, AMBIGUOUS),
                "lower": self.lower,
                "upper": self.upper,
                "d1": self.d1,
                "d0": self.d0,
            }
        )


def _levels_for(model, v2_levels=None):
    if model.ignores_v2:
        return (None,)
    levels = tuple(model.levels if v2_levels is None else v2_levels)
    for level in levels:
        if level not in model.levels:
            raise RuleError("CPE モデルにこの V2 水準がありません", v2_level=level)
    return levels


def _require_bounds(model, levels):
    """V2 が欠測した被験者の上下限には2つ以上の水準が必要"""
    if not model.ignores_v2 and len(levels) < 2:
        raise RuleError(
            "V2 が欠測した被験者の上下限には2つ以上の V2 水準が必要です",
            v2_level=levels[0] if levels else None,
        )


def _classify(lower, upper):
    """上下限から (決定的か, d1, d0) を求める"""
    positive_lower = lower > 0
    positive_upper = upper > 0
    decisive = positive_lower == positive_upper
    treat = positive_upper.astype(np.int64)
    d1 = np.where(decisive, treat, 1)
    d0 = np.where(decisive, treat, 0)
    return decisive, d1, d0


def decide(model, subject, index=0, v2_levels=None):
    """
    1被験者の治療決定

    Parameters
    ----------
    model : CpeModel
        すべての V2 水準について学習済みの CPE モデル
    subject : Observation
        V2 が欠測（None）の場合がある被験者
    index : int
        被験者番号
    v2_levels : sequence of int, optional
        上下限を取る V2 の水準（省略時はモデルの水準）

    Returns
    -------
    RuleDecision

    Raises
    ------
    RuleError
        モデルに必要な V2 水準がない場合、または V2 が欠測しているのに水準が1つしかない場合
    """
    columns = {"v11": np.array([subject.v11]), "v12": np.array([subject.v12]), "v13": np.array([subject.v13])}
    levels = _levels_for(model, v2_levels)
    if subject.v2 is not None and not model.ignores_v2:
        if subject.v2 not in model.levels:
            raise RuleError("CPE モデルに被験者の V2 水準がありません", v2_level=subject.v2)
        values = model.predict(columns, subject.v2)
    else:
        _require_bounds(model, levels)
        values = np.concatenate([model.predict(columns, level) for level in levels])
    lower, upper = float(np.min(values)), float(np.max(values))
    decisive, d1, d0 = _classify(np.array([lower]), np.array([upper]))
    observed = subject.v2 is not None
    return RuleDecision(
        index=int(index),
        lower=lower,
        upper=upper,
        status=DECISIVE if decisive[0] else AMBIGUOUS,
        d1=int(d1[0]),
        d0=int(d0[0]),
        d_opt=int(upper > 0) if observed else None,
    )


def decide_all(model, data, v2_levels=None):
    """
    データセット全体の治療決定（decide をベクトル化したもの）

    Returns
    -------
    DecisionTable
    """
    columns = data.columns()
    levels = _levels_for(model, v2_levels)
    surfaces = np.column_stack([model.predict(columns, level) for level in levels])
    lower = surfaces.min(axis=1)
    upper = surfaces.max(axis=1)
    observed = data.v2_observed
    if not np.all(observed):
        _require_bounds(model, levels)
    if not model.ignores_v2 and np.any(observed):
        unknown = set(np.unique(data.v2[observed]).tolist()) - set(model.levels)
        if unknown:
            raise RuleError("CPE モデルに被験者の V2 水準がありません", v2_level=sorted(unknown)[0])
        point = np.empty(data.n)
        for level in model.levels:
            rows = observed & (data.v2 == level)
            point[rows] = model.predict(columns, level)[rows]
        lower = np.where(observed, point, lower)
        upper = np.where(observed, point, upper)
    decisive, d1, d0 = _classify(lower, upper)
    return DecisionTable(lower, upper, decisive, d1, d0, observed.copy())


@dataclass(frozen=True)
class DecisionSummary:
    """状態ごとの件数と割合"""

    total: int
    decisive: int
    ambiguous: int

    @property
    def decisive_proportion(self):
        return self.decisive / self.total

    @property
    def ambiguous_proportion(self):
        return self.ambiguous / self.total

    def to_frame(self):
        return pd.DataFrame(
            {
                "status": [DECISIVE, AMBIGUOUS],
                "count": [self.decisive, self.ambiguous],
                "proportion": [self.decisive_proportion, self.ambiguous_proportion],
            }
        )


def decision_summary(decisions: Union[DecisionTable, Sequence[RuleDecision]], missing_only=False):
    """
    決定の状態（決定的・曖昧）ごとの件数と割合

    Parameters
    ----------
    decisions : DecisionTable or sequence of RuleDecision
        治療決定
    missing_only : bool
        True の場合は V2 が欠測した被験者だけを数える（DecisionTable のみ）

    Raises
    ------
    ParameterError
        決定が空の場合
    """
    if isinstance(decisions, DecisionTable):
        mask = ~decisions.observed if missing_only else np.ones(decisions.n, dtype=bool)
        flags = decisions.decisive[mask]
    else:
        flags = np.array(
            [d.decisive for d in decisions if not (missing_only and d.d_opt is not None)], dtype=bool
        )
    if flags.size == 0:
        raise ParameterError("治療決定が空です", name="decisions", value=0)
    decisive = int(flags.sum())
    return DecisionSummary(total=int(flags.size), decisive=decisive, ambiguous=int(flags.size) - decisive)


def static_rule(n, arm):
    """全員を同じ治療群に割り付けるルール"""
    if arm not in (0, 1):
        raise ParameterError("治療群は0または1です", name="arm", value=arm)
    return np.full(n, arm, dtype=np.int64)
