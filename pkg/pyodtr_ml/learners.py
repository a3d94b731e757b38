#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
基本回帰学習器

局外パラメータと第2段階回帰で使う学習器を提供します。

- L1正則化ロジスティック回帰（交差検証で λ を選択、座標降下法）
- L1正則化線形回帰（ガウス族、同じソルバー）
- 正則化なしロジスティック回帰（ニュートン・ラフソン法）
- 切片のみのモデル、セル平均回帰
- 等張回帰（PAV）によるキャリブレーション
"""

import itertools
import json
import logging
from dataclasses import dataclass, replace
from typing import Mapping, Optional, Sequence, Tuple

import numpy as np
from sklearn.isotonic import IsotonicRegression

from .errors import ConvergenceError, ParameterError
from .utils import STREAM_CV, expit, logit, make_generator

logger = logging.getLogger(__name__)

LEARNER_FORMAT = "pyodtr-learner/1"

# IRLS の重みと切片のみモデルの確率の下限
PROB_FLOOR = 1e-5

_EXPANSIONS = ("saturated", "main")
_NUISANCE_LEARNERS = ("lasso", "glm", "intercept")
_SECOND_STAGES = ("cell_means", "linear")


@dataclass(frozen=True)
class DesignSpec:
    """
    計画行列の仕様

    saturated 展開では、2値列のすべての交互作用（空でない部分集合の積、
    最大 2^k - 1 項）と線形の連続列を作ります。main 展開では各列をそのまま使います。
    """

    binary: Tuple[str, ...] = ()
    continuous: Tuple[str, ...] = ()
    expansion: str = "saturated"

    def __post_init__(self):
        object.__setattr__(self, "binary", tuple(self.binary))
        object.__setattr__(self, "continuous", tuple(self.continuous))
        if self.expansion not in _EXPANSIONS:
            raise ParameterError("未知の展開方法です", name="expansion", value=self.expansion)
        names = self.binary + self.continuous
        if len(set(names)) != len(names):
            raise ParameterError("列名が重複しています", name="columns", value=names)

    def terms(self):
        """各計画列を構成する元の列名のタプルのリスト"""
        if self.expansion == "main":
            interactions = [(name,) for name in self.binary]
        else:
            interactions = [
                combo
                for size in range(1, len(self.binary) + 1)
                for combo in itertools.combinations(self.binary, size)
            ]
        return interactions + [(name,) for name in self.continuous]

    def column_names(self):
        return [":".join(term) for term in self.terms()]

    @property
    def width(self):
        return len(self.terms())

    def expand(self, columns: Mapping[str, np.ndarray]):
        """
        列の辞書から計画行列を作る

        Parameters
        ----------
        columns : Mapping[str, numpy.ndarray]
            列名から値への辞書

        Returns
        -------
        numpy.ndarray
            形状 (n, width) の計画行列
        """
        try:
            base = {name: np.asarray(columns[name], dtype=np.float64) for name in self.binary + self.continuous}
        except KeyError as e:
            raise ParameterError("計画行列に必要な列がありません", name=str(e), value=None) from e
        n = len(next(iter(base.values()))) if base else 0
        out = np.empty((n, self.width), dtype=np.float64)
        for k, term in enumerate(self.terms()):
            col = base[term[0]].copy()
            for name in term[1:]:
                col *= base[name]
            out[:, k] = col
        return out

    def cell_index(self, columns: Mapping[str, np.ndarray]):
        """2値列をビットとみなしたセル番号（先頭の列が最上位ビット）"""
        index = np.zeros(len(columns[self.binary[0]]), dtype=np.int64)
        for name in self.binary:
            index = index * 2 + np.asarray(columns[name], dtype=np.int64)
        return index

    def cell_grid(self):
        """全セルの列辞書（セル番号順）"""
        k = len(self.binary)
        cells = np.arange(2**k)
        return {name: (cells >> (k - 1 - j)) & 1 for j, name in enumerate(self.binary)}

    def to_dict(self):
        return {"binary": list(self.binary), "continuous": list(self.continuous), "expansion": self.expansion}

    @classmethod
    def from_dict(cls, payload):
        return cls(tuple(payload["binary"]), tuple(payload["continuous"]), payload["expansion"])


@dataclass(frozen=True)
class LearnerConfig:
    """
    学習器の設定

    Attributes
    ----------
    lambda_grid_size : int
        λ の格子点数（λmax から lambda_min_ratio·λmax まで対数等間隔）
    cv_folds : int
        λ 選択の交差検証フォールド数
    calibration_folds : int
        キャリブレーション用の入れ子クロスフィットのフォールド数
    calibrate : bool
        等張キャリブレーションを行うかどうか
    clip : float
        分母に現れる確率の下限 εclip（上限は 1-εclip）
    max_sweeps : int
        座標降下法の最大スイープ数（ニュートンステップごと）
    tol : float
        係数変化の収束判定値
    objective_tol : float
        目的関数の相対変化の収束判定値（|目的関数| + 1 に対する比）
    max_newton_steps : int
        λ ごとの近接ニュートン法の最大ステップ数。超えると ConvergenceError
    nuisance_learner : str
        'lasso'、'glm'、'intercept'
    second_stage : str
        'cell_means' または 'linear'
    n_jobs : int
        フォールド並列のワーカー数
    """

    lambda_grid_size: int = 50
    lambda_min_ratio: float = 1e-4
    cv_folds: int = 10
    calibration_folds: int = 5
    calibrate: bool = True
    clip: float = 0.01
    max_sweeps: int = 10000
    tol: float = 1e-7
    objective_tol: float = 1e-7
    max_newton_steps: int = 100
    nuisance_learner: str = "lasso"
    second_stage: str = "cell_means"
    n_jobs: int = 1

    def __post_init__(self):
        checks = [
            ("lambda_grid_size", self.lambda_grid_size >= 1),
            ("lambda_min_ratio", 0 < self.lambda_min_ratio < 1),
            ("cv_folds", self.cv_folds >= 2),
            ("calibration_folds", self.calibration_folds >= 2),
            ("clip", 0 <= self.clip < 0.5),
            ("max_sweeps", self.max_sweeps >= 1),
            ("tol", self.tol > 0),
            ("objective_tol", self.objective_tol > 0),
            ("max_newton_steps", self.max_newton_steps >= 1),
            ("nuisance_learner", self.nuisance_learner in _NUISANCE_LEARNERS),
            ("second_stage", self.second_stage in _SECOND_STAGES),
            ("n_jobs", self.n_jobs != 0),
        ]
        for name, ok in checks:
            if not ok:
                raise ParameterError("学習器の設定が不正です", name=name, value=getattr(self, name))

    def replace(self, **changes):
        return replace(self, **changes)


def _readonly(values, dtype=np.float64):
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


class FittedLearner:
    """学習済みモデルの基底クラス（学習後は不変）"""

    kind = "base"

    def __init__(self, design: Optional[DesignSpec] = None, diagnostics=None):
        self.design = design
        self.diagnostics = dict(diagnostics or {})

    def _columns(self, data):
        if hasattr(data, "columns") and callable(data.columns):
            return data.columns()
        return data

    def predict(self, data):
        raise NotImplementedError

    def params(self):
        raise NotImplementedError

    def to_dict(self):
        return {
            "format": LEARNER_FORMAT,
            "kind": self.kind,
            "design": self.design.to_dict() if self.design is not None else None,
            "params": self.params(),
        }

    def to_text(self):
        """バージョン付きのテキスト形式（JSON）にシリアライズ"""
        return json.dumps(self.to_dict(), sort_keys=True)


class LinearPredictor(FittedLearner):
    """切片と係数ベクトルを持つ一般化線形モデル（binomial / gaussian）"""

    def __init__(self, kind, family, intercept, coef, design=None, lam=None, diagnostics=None):
        super().__init__(design, diagnostics)
        self.kind = kind
        self.family = family
        self.intercept = float(intercept)
        self.coef = _readonly(coef)
        self.lam = None if lam is None else float(lam)

    def linear_predictor(self, data):
        if isinstance(data, np.ndarray):
            X = data
        elif self.design is not None:
            X = self.design.expand(self._columns(data))
        else:
            raise ParameterError("計画仕様のない学習器には行列を渡してください", name="data")
        X = np.atleast_2d(X) if self.coef.size else np.zeros((len(X), 0))
        return self.intercept + X @ self.coef

    def predict(self, data):
        eta = self.linear_predictor(data)
        return expit(eta) if self.family == "binomial" else eta

    def params(self):
        return {
            "family": self.family,
            "intercept": self.intercept,
            "coef": self.coef.tolist(),
            "lambda": self.lam,
        }


class CellMeans(FittedLearner):
    """セル平均回帰。学習時に見ていないセルは全体平均で予測"""

    kind = "cell_means"

    def __init__(self, cells, means, global_mean, counts=None, design=None):
        super().__init__(design)
        self.cells = _readonly(cells, np.int64)
        self.means = _readonly(means)
        self.counts = _readonly(counts if counts is not None else np.zeros(len(cells)), np.int64)
        self.global_mean = float(global_mean)

    def predict(self, data):
        if isinstance(data, np.ndarray) and data.ndim == 1:
            cells = data.astype(np.int64)
        elif self.design is not None:
            cells = self.design.cell_index(self._columns(data))
        else:
            raise ParameterError("セル番号の配列を渡してください", name="data")
        pos = np.clip(np.searchsorted(self.cells, cells), 0, len(self.cells) - 1)
        seen = self.cells[pos] == cells
        return np.where(seen, self.means[pos], self.global_mean)

    def params(self):
        return {
            "cells": self.cells.tolist(),
            "means": self.means.tolist(),
            "counts": self.counts.tolist(),
            "global_mean": self.global_mean,
        }


class CalibratedLearner(FittedLearner):
    """
    等張キャリブレーション付き学習器

    キャリブレーション写像は非減少の階段関数で、問い合わせ値以下で最大の閾値の値を
    返します（最小の閾値より小さい場合は最初のブロックの値）。出力は
    [clip, 1-clip] に切り詰められます。
    """

    kind = "calibrated"

    def __init__(self, base, thresholds, values, clip=0.01):
        super().__init__(base.design if base is not None else None)
        self.base = base
        self.thresholds = _readonly(thresholds)
        self.values = _readonly(values)
        self.clip = float(clip)

    def calibrate(self, raw):
        """生の予測値にキャリブレーション写像を適用"""
        raw = np.asarray(raw, dtype=np.float64)
        pos = np.searchsorted(self.thresholds, raw, side="right") - 1
        pos = np.clip(pos, 0, len(self.thresholds) - 1)
        return np.clip(self.values[pos], self.clip, 1.0 - self.clip)

    def predict(self, data):
        return self.calibrate(self.base.predict(data))

    def params(self):
        return {
            "base": self.base.to_dict() if self.base is not None else None,
            "thresholds": self.thresholds.tolist(),
            "values": self.values.tolist(),
            "clip": self.clip,
        }


def learner_from_text(text):
    """
    to_text() の出力から学習器を復元する

    Raises
    ------
    ParameterError
        形式が異なる場合
    """
    payload = json.loads(text) if isinstance(text, str) else text
    if payload.get("format") != LEARNER_FORMAT:
        raise ParameterError("学習器の形式が一致しません", name="format", value=payload.get("format"))
    design = DesignSpec.from_dict(payload["design"]) if payload.get("design") else None
    params = payload["params"]
    kind = payload["kind"]
    if kind == "cell_means":
        return CellMeans(params["cells"], params["means"], params["global_mean"], params["counts"], design)
    if kind == "calibrated":
        base = learner_from_text(params["base"]) if params["base"] else None
        return CalibratedLearner(base, params["thresholds"], params["values"], params["clip"])
    return LinearPredictor(
        kind, params["family"], params["intercept"], params["coef"], design, params["lambda"]
    )


# ---------------------------------------------------------------------------
# 座標降下法ソルバー
# ---------------------------------------------------------------------------


def _objective(eta, y, beta, lam, family):
    if family == "binomial":
        loss = np.mean(np.logaddexp(0.0, eta) - y * eta)
    else:
        loss = 0.5 * np.mean((y - eta) ** 2)
    return float(loss + lam * np.abs(beta).sum())


def _heldout_loss(eta, y, family):
    if family == "binomial":
        return np.logaddexp(0.0, eta) - y * eta
    return (y - eta) ** 2


def _null_intercept(y, family):
    mean = float(np.mean(y))
    if family == "binomial":
        return float(logit(np.clip(mean, PROB_FLOOR, 1.0 - PROB_FLOOR)))
    return mean


def _standardize(X):
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    keep = sd > 1e-12
    Xs = (X[:, keep] - mean[keep]) / sd[keep]
    return Xs, mean, sd, keep


def _lambda_max(Xs, y):
    if Xs.shape[1] == 0:
        return 0.0
    return float(np.max(np.abs(Xs.T @ (y - y.mean()))) / len(y))


def _coordinate_descent(H, q, lam, beta, max_sweeps, tol, min_decrease=0.0):
    """
    1/2 β'Hβ - q'β + λ|β|_1 を巡回座標降下法で最小化

    係数の最大変化が tol 未満になるか、1スイープでの目的関数の減少が
    min_decrease 未満になった時点で停止します。

    Returns
    -------
    (numpy.ndarray, int, bool)
        解、使用したスイープ数、収束したかどうか
    """
    beta = beta.copy()
    grad = H @ beta - q
    diag = np.diag(H)
    p = len(beta)

    def quadratic(b, g):
        # g = Hb - q なので b'Hb = b'(g + q)
        return 0.5 * float(b @ (g + q)) - float(q @ b) + lam * float(np.abs(b).sum())

    current = quadratic(beta, grad)
    for sweep in range(1, max_sweeps + 1):
        max_change = 0.0
        for j in range(p):
            hjj = diag[j]
            if hjj <= 0.0:
                continue
            old = beta[j]
            rho = hjj * old - grad[j]
            if rho > lam:
                new = (rho - lam) / hjj
            elif rho < -lam:
                new = (rho + lam) / hjj
            else:
                new = 0.0
            if new != old:
                delta = new - old
                grad += delta * H[:, j]
                beta[j] = new
                max_change = max(max_change, abs(delta))
        updated = quadratic(beta, grad)
        if max_change < tol or current - updated < min_decrease:
            return beta, sweep, True
        current = updated
    return beta, max_sweeps, False


def _fit_at_lambda(Xs, y, lam, family, b0, beta, config):
    """
    1つの λ で近接ニュートン法（IRLS の二次近似を座標降下で解く）を実行

    ステップはバックトラッキングで選び、受理したステップごとに目的関数は
    減少しないので、その推移を trace として返します。係数の変化が tol 未満、
    または目的関数の相対変化が objective_tol 未満になった時点で収束とします。
    ほぼ分離したデータでは係数が平坦な方向にゆっくり動き続けるため、後者で止まります。
    """
    n = len(y)
    eta = b0 + Xs @ beta
    obj = _objective(eta, y, beta, lam, family)
    trace = [obj]
    sweeps = 0
    ones = np.ones(n)
    for _ in range(config.max_newton_steps):
        if family == "binomial":
            mu = expit(eta)
            w = np.maximum(mu * (1.0 - mu), PROB_FLOOR)
            z = eta + (y - mu) / w
        else:
            w, z = ones, y
        sw = w.sum()
        xbar = (w @ Xs) / sw
        zbar = float(w @ z) / sw
        Xc = Xs - xbar
        Xw = Xc * w[:, None]
        H = (Xw.T @ Xc) / n
        q = (Xw.T @ (z - zbar)) / n
        scale = abs(obj) + 1.0
        # 座標降下の予算はニュートンステップごと
        beta_new, used, ok = _coordinate_descent(
            H, q, lam, beta, config.max_sweeps, config.tol, 1e-3 * config.objective_tol * scale
        )
        sweeps += used
        if not ok:
            logger.debug(f"λ={lam:.3g}: 座標降下が {config.max_sweeps} スイープで止まりませんでした")
        b0_new = zbar - float(xbar @ beta_new)

        step = 1.0
        while True:
            b0_c = b0 + step * (b0_new - b0)
            beta_c = beta + step * (beta_new - beta)
            eta_c = b0_c + Xs @ beta_c
            obj_c = _objective(eta_c, y, beta_c, lam, family)
            if obj_c <= obj:
                break
            step *= 0.5
            if step < 1e-10:
                # 数値的にこれ以上減少しない
                return b0, beta, trace, sweeps

        change = max(abs(b0_c - b0), float(np.max(np.abs(beta_c - beta))) if beta.size else 0.0)
        objective_change = obj - obj_c
        b0, beta, eta, obj = b0_c, beta_c, eta_c, obj_c
        trace.append(obj)
        if change < config.tol or objective_change < config.objective_tol * scale:
            return b0, beta, trace, sweeps
    raise ConvergenceError(
        "近接ニュートン法が最大ステップ数以内に収束しませんでした",
        objective_change=objective_change,
        max_coef_change=change,
        sweeps=sweeps,
        lam=lam,
    )


def _solve_path(Xs, y, lambdas, family, lam_max, config):
    """
    ウォームスタートで λ の経路を解く

    逸脱度の改善が null 逸脱度の 1e-5 未満になった時点（または説明率 0.999 超）で
    経路を打ち切り、残りの λ には直前の解を使います。
    """
    b0 = _null_intercept(y, family)
    beta = np.zeros(Xs.shape[1])
    null_loss = _objective(np.full(len(y), b0), y, beta, 0.0, family)
    solutions, traces = [], []
    total_sweeps = 0
    prev_loss = null_loss
    stopped = False
    for k, lam in enumerate(lambdas):
        if stopped or lam >= lam_max:
            solutions.append((b0, beta.copy()))
            traces.append([])
            continue
        b0, beta, trace, sweeps = _fit_at_lambda(Xs, y, lam, family, b0, beta, config)
        total_sweeps += sweeps
        solutions.append((b0, beta.copy()))
        traces.append(trace)
        loss = _objective(b0 + Xs @ beta, y, beta, 0.0, family)
        if null_loss > 0 and k >= 5:
            if (prev_loss - loss) < 1e-5 * null_loss or loss < 1e-3 * null_loss:
                stopped = True
        prev_loss = loss
    return solutions, traces, total_sweeps


def _to_original_scale(b0, beta, mean, sd, keep):
    coef = np.zeros(len(keep))
    coef[keep] = beta / sd[keep]
    intercept = b0 - float(np.sum(beta * mean[keep] / sd[keep]))
    return intercept, coef


def _cv_fold_ids(n, folds, seed):
    folds = min(folds, n)
    perm = make_generator(seed, STREAM_CV).permutation(n)
    ids = np.empty(n, dtype=np.int64)
    ids[perm] = np.arange(n) % folds
    return ids


def _cv_losses(X, y, grid, family, fold_ids, config):
    losses = np.zeros(len(grid))
    for f in np.unique(fold_ids):
        test = fold_ids == f
        train = ~test
        Xtr, ytr = X[train], y[train]
        Xs, mean, sd, keep = _standardize(Xtr)
        if family == "binomial" and np.unique(ytr).size < 2:
            eta = np.full(test.sum(), _null_intercept(ytr, family))
            losses += _heldout_loss(eta, y[test], family).sum()
            continue
        solutions, _, _ = _solve_path(Xs, ytr, grid, family, _lambda_max(Xs, ytr), config)
        Xte = (X[test][:, keep] - mean[keep]) / sd[keep]
        for k, (b0, beta) in enumerate(solutions):
            losses[k] += _heldout_loss(b0 + Xte @ beta, y[test], family).sum()
    return losses / len(y)


def _fit_penalized(X, y, family, kind, lambda_grid, cv_folds, seed, fold_ids, config, design):
    config = config or LearnerConfig()
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] != y.shape[0]:
        raise ParameterError("計画行列と応答の長さが一致しません", name="y", value=y.shape[0])
    if family == "binomial" and np.unique(y).size < 2:
        raise ParameterError("応答が1種類の値しか持ちません", name="y", value=float(y[0]) if y.size else None)

    Xs, mean, sd, keep = _standardize(X)
    lam_max = _lambda_max(Xs, y)

    if lambda_grid is None:
        if lam_max <= 0.0:
            return fit_intercept_only(y, family=family, design=design, p=X.shape[1])
        grid = lam_max * np.logspace(0.0, np.log10(config.lambda_min_ratio), config.lambda_grid_size)
    else:
        grid = np.asarray(lambda_grid, dtype=np.float64).ravel()
        if grid.size == 0 or not np.all(np.isfinite(grid)) or np.any(grid <= 0):
            raise ParameterError("λ の格子は空でない正の値の列である必要があります", name="lambda_grid", value=lambda_grid)
        grid = np.sort(grid)[::-1]

    cv_loss = None
    if cv_folds is None or grid.size == 1:
        selected = grid.size - 1
    else:
        if fold_ids is None:
            fold_ids = _cv_fold_ids(len(y), cv_folds, seed)
        cv_loss = _cv_losses(X, y, grid, family, np.asarray(fold_ids), config)
        selected = int(np.argmin(cv_loss))

    solutions, traces, sweeps = _solve_path(
        Xs, y, grid[: selected + 1], family, lam_max, config
    )
    b0, beta = solutions[-1]
    intercept, coef = _to_original_scale(b0, beta, mean, sd, keep)
    diagnostics = {
        "lambda_max": lam_max,
        "lambda_path": grid.tolist(),
        "selected_index": selected,
        "cv_loss": None if cv_loss is None else cv_loss.tolist(),
        "objective_trace": traces[-1],
        "sweeps": sweeps,
    }
    logger.debug(f"{kind}: λ={grid[selected]:.3g} (index={selected}), 非ゼロ係数={int(np.sum(coef != 0))}")
    return LinearPredictor(kind, family, intercept, coef, design, grid[selected], diagnostics)


def fit_logistic_lasso(
    X,
    y,
    lambda_grid: Optional[Sequence[float]] = None,
    cv_folds: Optional[int] = 10,
    seed: int = 0,
    fold_ids=None,
    config: Optional[LearnerConfig] = None,
    design: Optional[DesignSpec] = None,
):
    """
    L1正則化ロジスティック回帰

    説明変数を標準化し、ウォームスタートの λ 経路上で座標降下法により当てはめ、
    交差検証の負の対数尤度が最小の λ を選びます。切片は罰則を受けません。

    Parameters
    ----------
    X : numpy.ndarray
        計画行列 (n, p)
    y : numpy.ndarray
        2値応答
    lambda_grid : sequence of float, optional
        罰則の格子。省略時は λmax から対数等間隔に config.lambda_grid_size 点
    cv_folds : int or None
        交差検証のフォールド数。None の場合は格子の最後の λ を使う
    seed : int
        交差検証フォールドの乱数シード
    fold_ids : numpy.ndarray, optional
        交差検証フォールドの割り当て（指定時は seed を使わない）
    config : LearnerConfig, optional
        収束判定などの設定
    design : DesignSpec, optional
        予測時に列辞書から計画行列を作るための仕様

    Returns
    -------
    LinearPredictor

    Raises
    ------
    ParameterError
        応答が1種類しかない、または格子が不正な場合
    ConvergenceError
        λ ごとの最大ニュートンステップ数以内に収束しない場合
    """
    return _fit_penalized(
        X, y, "binomial", "logistic_lasso", lambda_grid, cv_folds, seed, fold_ids, config, design
    )


def fit_linear_lasso(
    X, y, lambda_grid=None, cv_folds=10, seed=0, fold_ids=None, config=None, design=None
):
    """L1正則化線形回帰（二乗誤差で λ を選択）。引数は fit_logistic_lasso と同じ"""
    return _fit_penalized(
        X, y, "gaussian", "linear_lasso", lambda_grid, cv_folds, seed, fold_ids, config, design
    )


def fit_logistic(X, y, design=None, max_iter=100, tol=1e-10):
    """
    正則化なしロジスティック回帰（ニュートン・ラフソン法、ステップ半減付き）

    完全分離の場合は逸脱度の相対変化が tol 未満になった時点で停止します。
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=np.float64)
    if np.unique(y).size < 2:
        raise ParameterError("応答が1種類の値しか持ちません", name="y")
    Z = np.column_stack([np.ones(len(y)), X])
    beta = np.zeros(Z.shape[1])
    beta[0] = _null_intercept(y, "binomial")

    def nll(b):
        eta = Z @ b
        return float(np.sum(np.logaddexp(0.0, eta) - y * eta))

    current = nll(beta)
    for iteration in range(1, max_iter + 1):
        mu = expit(Z @ beta)
        w = np.maximum(mu * (1.0 - mu), PROB_FLOOR)
        H = (Z * w[:, None]).T @ Z + 1e-10 * np.eye(Z.shape[1])
        direction = np.linalg.solve(H, Z.T @ (y - mu))
        step = 1.0
        while nll(beta + step * direction) > current and step > 1e-10:
            step *= 0.5
        beta = beta + step * direction
        updated = nll(beta)
        if abs(current - updated) < tol * (abs(updated) + 0.1):
            current = updated
            break
        current = updated
    else:
        logger.warning(f"ロジスティック回帰が {max_iter} 回で収束しませんでした")
    return LinearPredictor(
        "logistic", "binomial", beta[0], beta[1:], design, None, {"iterations": iteration, "nll": current}
    )


def fit_intercept_only(y, family="binomial", design=None, p=None):
    """切片のみのモデル（予測は学習データの平均）"""
    y = np.asarray(y, dtype=np.float64)
    if y.size == 0:
        raise ParameterError("学習データが空です", name="y")
    width = p if p is not None else (design.width if design is not None else 0)
    return LinearPredictor("intercept", family, _null_intercept(y, family), np.zeros(width), design)


def fit_cell_means(cells, response, design=None):
    """
    セル平均回帰

    Parameters
    ----------
    cells : array_like of int
        離散共変量のセル番号
    response : array_like of float
        応答

    Returns
    -------
    CellMeans
        各セルの学習平均を予測し、未知のセルには全体平均を返す

    Raises
    ------
    ParameterError
        学習データが空、または長さが一致しない場合
    """
    cells = np.asarray(cells, dtype=np.int64)
    response = np.asarray(response, dtype=np.float64)
    if cells.size == 0:
        raise ParameterError("学習データが空です", name="cells")
    if cells.shape != response.shape:
        raise ParameterError("セルと応答の長さが一致しません", name="response", value=response.shape)
    keys, inverse, counts = np.unique(cells, return_inverse=True, return_counts=True)
    sums = np.bincount(inverse, weights=response, minlength=len(keys))
    return CellMeans(keys, sums / counts, float(response.mean()), counts, design)


def isotonic_calibrate(raw_predictions, outcomes, base=None, clip=0.01):
    """
    等張回帰（PAV）によるキャリブレーション

    Parameters
    ----------
    raw_predictions : array_like
        キャリブレーション前の予測確率
    outcomes : array_like
        2値の結果
    base : FittedLearner, optional
        写像を上に載せる学習器
    clip : float
        出力の下限（上限は 1-clip）

    Returns
    -------
    CalibratedLearner

    Raises
    ------
    ParameterError
        長さが一致しない、または2点未満の場合
    """
    raw = np.asarray(raw_predictions, dtype=np.float64)
    outcomes = np.asarray(outcomes, dtype=np.float64)
    if raw.shape != outcomes.shape:
        raise ParameterError("予測値と結果の長さが一致しません", name="outcomes", value=outcomes.shape)
    if raw.size < 2:
        raise ParameterError("キャリブレーションには2点以上必要です", name="raw_predictions", value=raw.size)
    iso = IsotonicRegression(increasing=True, out_of_bounds="clip")
    iso.fit(raw, outcomes)
    return CalibratedLearner(base, iso.X_thresholds_, iso.y_thresholds_, clip)


def fit_binary(X, y, config, seed=0, design=None):
    """設定に従って2値応答の学習器を当てはめる"""
    if config.nuisance_learner == "intercept":
        return fit_intercept_only(y, design=design, p=np.shape(X)[1])
    if config.nuisance_learner == "glm":
        return fit_logistic(X, y, design=design)
    return fit_logistic_lasso(X, y, cv_folds=config.cv_folds, seed=seed, config=config, design=design)


def refit_like(learner, X, y, config):
    """
    学習器と同じ種類・同じ λ で別のデータに当てはめ直す（交差検証なし）

    λ 経路は元の学習器で選ばれた λ までをウォームスタートで辿ります。
    """
    if learner.kind == "logistic_lasso":
        path = learner.diagnostics["lambda_path"][: learner.diagnostics["selected_index"] + 1]
        return fit_logistic_lasso(X, y, lambda_grid=path, cv_folds=None, config=config, design=learner.design)
    if learner.kind == "logistic":
        return fit_logistic(X, y, design=learner.design)
    return fit_intercept_only(y, design=learner.design, p=np.shape(X)[1])
