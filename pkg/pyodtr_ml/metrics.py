#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
シミュレーション研究

データ生成機構から K 個のデータセットを独立に生成し、各データセットで
DR-Learner とプラグイン推定量の τ̃ を16セルで推定して、真値表に対する
積分絶対バイアスと積分 RMSE（セル確率で重み付けした和）を集計します。
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from tqdm import tqdm

from .crossfit import fit_nuisances, fold_schedule, make_folds
from .dgp import N_CELLS, DgpParams, cell_bits, sample_dataset
from .drlearner import fit_cate_v1_only, fit_drlearner, fit_plugin
from .errors import ODTRBaseError, ParameterError, ReplicationError
from .learners import LearnerConfig
from .utils import STREAM_REPLICATE, derive_seed

logger = logging.getLogger(__name__)

ESTIMATORS = ("drlearner", "plugin")
# 失敗率がこれを超えると実行は無効
MAX_FAILURE_RATE = 0.01
# ルール一致率で評価するセルの |τ̃| の下限
AGREEMENT_MARGIN = 0.05

KNOWN_ESTIMATORS = ("drlearner", "plugin", "cate")


def fit_estimator(name, data, fits, config=None, seed=0):
    """名前で指定した推定量を学習し、CpeModel を返す"""
    if name == "drlearner":
        return fit_drlearner(data, fits, (0, 1), config, seed)
    if name == "plugin":
        return fit_plugin(data, fits, (0, 1), config, seed)
    if name == "cate":
        return fit_cate_v1_only(data, fits, config, seed)
    raise ParameterError("未知の推定量です", name="estimator", value=name)


def replicate_seed(seed, k):
    """k 番目の複製のシード（マスターシードから決定的に導出）"""
    return derive_seed(seed, STREAM_REPLICATE, k)


def integrated_bias_rmse(estimates, truth, probs):
    """
    積分絶対バイアスと積分 RMSE

    bias = Σ_c |mean_k(est_kc − truth_c)|·P(c)
    rmse = Σ_c sqrt(mean_k((est_kc − truth_c)²))·P(c)

    Parameters
    ----------
    estimates : numpy.ndarray
        形状 (K, C) の推定値
    truth : numpy.ndarray
        形状 (C,) の真値
    probs : numpy.ndarray
        形状 (C,) のセル確率

    Returns
    -------
    (float, float, numpy.ndarray, numpy.ndarray)
        積分バイアス、積分 RMSE、セルごとのバイアスと RMSE
    """
    estimates = np.atleast_2d(np.asarray(estimates, dtype=np.float64))
    truth = np.asarray(truth, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    if estimates.shape[0] == 0:
        raise ParameterError("推定値がありません", name="estimates", value=estimates.shape)
    if estimates.shape[1] != truth.shape[0] or truth.shape != probs.shape:
        raise ParameterError("セル数が一致しません", name="estimates", value=estimates.shape)
    err = estimates - truth
    cell_bias = np.abs(err.mean(axis=0))
    cell_rmse = np.sqrt((err**2).mean(axis=0))
    return float(cell_bias @ probs), float(cell_rmse @ probs), cell_bias, cell_rmse


def rule_agreement(estimates, truth, margin=AGREEMENT_MARGIN):
    """|τ̃| > margin のすべてのセルで推定ルールの符号が真のルールと一致した複製の割合"""
    estimates = np.atleast_2d(estimates)
    cells = np.abs(truth) > margin
    if not np.any(cells):
        return 1.0
    agree = ((estimates[:, cells] > 0) == (truth[cells] > 0)).all(axis=1)
    return float(agree.mean())


@dataclass(frozen=True, eq=False)
class ReplicateResult:
    """1複製の結果"""

    k: int
    seed: int
    estimates: Dict[str, np.ndarray]
    duration: float
    error: Optional[str] = None

    @property
    def ok(self):
        return self.error is None


def _run_replicate(n, k, seed, params, config, J, estimators):
    rep_seed = replicate_seed(seed, k)
    started = time.perf_counter()
    try:
        data = sample_dataset(params.with_overrides(n=n, seed=rep_seed))
        folds = make_folds(n, J or fold_schedule(n), rep_seed)
        fits = fit_nuisances(data, folds, (0, 1), config, rep_seed)
        estimates = {
            name: fit_estimator(name, data, fits, config, rep_seed).predict_cells()
            for name in estimators
        }
    except (ODTRBaseError, np.linalg.LinAlgError) as e:
        logger.warning(f"複製 {k} が失敗しました (seed={rep_seed}): {e}")
        return ReplicateResult(k, rep_seed, {}, time.perf_counter() - started, str(e))
    return ReplicateResult(k, rep_seed, estimates, time.perf_counter() - started)


@dataclass(frozen=True, eq=False)
class EstimatorSummary:
    """推定量ごとの集計"""

    bias: float
    rmse: float
    cell_bias: np.ndarray
    cell_rmse: np.ndarray
    rule_agreement: float
    estimates: np.ndarray


@dataclass(frozen=True, eq=False)
class SimReport:
    """
    1つのサンプルサイズのシミュレーション結果

    seeds[k] は k 番目の複製のシードで、replicate_seed(seed, k) と一致します。
    所要時間は CSV には出力しません。
    """

    n: int
    K: int
    seed: int
    J: Optional[int]
    summaries: Dict[str, EstimatorSummary]
    seeds: np.ndarray
    durations: np.ndarray
    failures: List[Tuple[int, str]] = field(default_factory=list)

    @property
    def valid(self):
        return len(self.failures) <= MAX_FAILURE_RATE * self.K

    @property
    def estimators(self):
        return tuple(self.summaries)

    def bias(self, estimator):
        return self.summaries[estimator].bias

    def rmse(self, estimator):
        return self.summaries[estimator].rmse

    def duration_stats(self):
        """複製あたりの所要時間（秒）の要約"""
        return {
            "total": float(self.durations.sum()),
            "mean": float(self.durations.mean()),
            "max": float(self.durations.max()),
        }

    def to_frame(self):
        """CSV `n,estimator,bias,rmse`"""
        return pd.DataFrame(
            [
                {"n": self.n, "estimator": name, "bias": s.bias, "rmse": s.rmse}
                for name, s in self.summaries.items()
            ],
            columns=["n", "estimator", "bias", "rmse"],
        )

    def cells_frame(self):
        """CSV `n,estimator,v11,v12,v13,v2,bias,rmse,rule_agreement`"""
        rows = []
        for name, s in self.summaries.items():
            for c in range(N_CELLS):
                v11, v12, v13, v2 = cell_bits(c)
                rows.append(
                    {
                        "n": self.n,
                        "estimator": name,
                        "v11": v11,
                        "v12": v12,
                        "v13": v13,
                        "v2": v2,
                        "bias": s.cell_bias[c],
                        "rmse": s.cell_rmse[c],
                        "rule_agreement": s.rule_agreement,
                    }
                )
        return pd.DataFrame(rows)

    def seeds_frame(self):
        """CSV `n,k,seed,ok`"""
        failed = {k for k, _ in self.failures}
        return pd.DataFrame(
            {
                "n": self.n,
                "k": np.arange(self.K),
                "seed": self.seeds,
                "ok": [int(k not in failed) for k in range(self.K)],
            }
        )


def run_replications(
    n,
    K,
    truth,
    params: Optional[DgpParams] = None,
    config: Optional[LearnerConfig] = None,
    folds: Optional[int] = None,
    seed=0,
    estimators: Sequence[str] = ESTIMATORS,
    n_jobs=1,
    progress=False,
):
    """
    K 個の独立なデータセットで推定量を評価する

    Parameters
    ----------
    n : int
        各データセットのレコード数
    K : int
        複製数
    truth : TruthTable
        真値表（セル確率と τ̃）
    params : DgpParams, optional
        データ生成機構（n と seed は複製ごとに上書き）
    config : LearnerConfig, optional
        学習器の設定（フォールド内並列は使わない）
    folds : int, optional
        フォールド数（省略時は fold_schedule(n)）
    seed : int
        マスターシード
    estimators : sequence of str
        'drlearner'、'plugin'、'cate' から選ぶ
    n_jobs : int
        複製を並列に実行するワーカー数
    progress : bool
        進捗バーを表示するかどうか

    Returns
    -------
    SimReport

    Raises
    ------
    ReplicationError
        すべての複製が失敗した場合
    """
    n, K = int(n), int(K)
    if n < 1 or K < 1:
        raise ParameterError("n と K は正である必要があります", name="n" if n < 1 else "K", value=min(n, K))
    unknown = [name for name in estimators if name not in KNOWN_ESTIMATORS]
    if unknown:
        raise ParameterError("未知の推定量です", name="estimators", value=unknown)
    params = params or DgpParams()
    config = (config or LearnerConfig()).replace(n_jobs=1)
    logger.info(f"シミュレーション: n={n}, K={K}, 推定量={tuple(estimators)}")

    tasks = (
        delayed(_run_replicate)(n, k, seed, params, config, folds, tuple(estimators)) for k in range(K)
    )
    results = list(
        tqdm(
            Parallel(n_jobs=n_jobs, return_as="generator")(tasks),
            total=K,
            desc=f"n={n}",
            disable=not progress,
        )
    )
    results.sort(key=lambda r: r.k)

    failures = [(r.k, r.error) for r in results if not r.ok]
    succeeded = [r for r in results if r.ok]
    if not succeeded:
        raise ReplicationError("すべての複製が失敗しました", failures=len(failures), total=K)

    probs = truth.prob
    target = truth.cpe
    summaries = {}
    for name in estimators:
        est = np.vstack([r.estimates[name] for r in succeeded])
        bias, rmse, cell_bias, cell_rmse = integrated_bias_rmse(est, target, probs)
        summaries[name] = EstimatorSummary(bias, rmse, cell_bias, cell_rmse, rule_agreement(est, target), est)
        logger.info(f"n={n} {name}: bias={bias:.4f}, rmse={rmse:.4f}")

    report = SimReport(
        n=n,
        K=K,
        seed=int(seed),
        J=folds,
        summaries=summaries,
        seeds=np.array([r.seed for r in results], dtype=np.uint64),
        durations=np.array([r.duration for r in results]),
        failures=failures,
    )
    if not report.valid:
        logger.warning(f"失敗した複製が多すぎます: {len(failures)}/{K}")
    return report


def run_study(sizes, K, truth, **kwargs):
    """複数のサンプルサイズで run_replications を実行する"""
    return [run_replications(n, K, truth, **kwargs) for n in sizes]


def study_frame(reports):
    """複数の SimReport の `n,estimator,bias,rmse` を連結する"""
    return pd.concat([report.to_frame() for report in reports], ignore_index=True)
