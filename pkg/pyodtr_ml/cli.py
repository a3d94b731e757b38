#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
pyodtr コマンドラインインターフェース

サブコマンド:

- simulate : データ生成機構からデータセット CSV を作る
- truth    : 反事実シミュレーションで真値表を作る
- estimate : データセット CSV から CPE・治療決定・ルールの価値を推定する
- study    : シミュレーション研究（積分バイアス・RMSE）

終了コードは 0（成功）、2（設定エラー）、3（実行時エラー）です。
"""

import argparse
import logging
import sys

import numpy as np
import pandas as pd
from tabulate import tabulate

from . import __version__
from .config import load_run_config
from .data_converter import read_dataset_csv
from .dgp import N_V1_CELLS, cell_bits, oracle_truth, sample_dataset
from .errors import ConfigError, FileOperationError, ODTRBaseError, ParameterError, ReplicationError
from .estimator import FusedODTR
from .file_io import OutputDirectory
from .metrics import run_replications, study_frame
from .policyvalue import contrasts_frame, estimates_frame
from .rules import decision_summary

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

LOG_FORMAT = "%(asctime)s [%(levelname)s] %(message)s"


def _print_table(frame, title=None):
    if title:
        print(title)
    print(tabulate(frame, headers="keys", tablefmt="github", showindex=False, floatfmt=".4f"))


def cmd_simulate(config):
    """データセット CSV（dataset.csv）を生成する"""
    out = OutputDirectory(config.outdir, debug=config.verbose)
    out.write_config(config.to_dict(runtime=False), __version__)
    data = sample_dataset(config.dgp_params())
    out.write_dataset("dataset.csv", data)
    summary = pd.DataFrame(
        {
            "n": [data.n],
            "s1": [int(data.s.sum())],
            "treated": [int(data.a.sum())],
            "y_mean": [float(data.y.mean())],
        }
    )
    _print_table(summary)
    return summary


def cmd_truth(config):
    """真値表（truth.csv）を作る"""
    out = OutputDirectory(config.outdir, debug=config.verbose)
    out.write_config(config.to_dict(runtime=False), __version__)
    truth = oracle_truth(config.dgp_params(), replicates=config.replicates, n_jobs=config.workers)
    frame = truth.to_frame()
    out.write_table("truth.csv", frame)
    _print_table(frame)
    return truth


def _cate_frame(model):
    values = model.predict_v1(None)
    rows = []
    for v1 in range(N_V1_CELLS):
        v11, v12, v13, _ = cell_bits(v1 * 2)
        rows.append({"v11": v11, "v12": v12, "v13": v13, "cate_hat": values[v1]})
    return pd.DataFrame(rows)


def cmd_estimate(config):
    """
    データセット CSV から推定する

    出力: cpe.csv、decisions.csv、policy_value.csv、contrasts.csv、
    cate_v1.csv、nuisances_v2_{水準}.csv、cpe_model.json
    """
    if config.input is None:
        raise ConfigError("入力データセットが指定されていません", field="input", value=None)
    out = OutputDirectory(config.outdir, debug=config.verbose)
    out.write_config(config.to_dict(runtime=False), __version__)
    data = read_dataset_csv(config.input)

    odtr = FusedODTR(
        config=config.learner_config(),
        folds=config.J,
        v2_levels=config.v2_levels,
        estimator=config.estimator,
        stratum=config.stratum,
        seed=config.seed,
        debug=config.verbose,
    ).fit(data)

    out.write_table("cpe.csv", odtr.cpe_model.cell_table())
    out.write_text("cpe_model.json", odtr.cpe_model.to_text() + "\n")
    decisions = odtr.decide()
    out.write_table("decisions.csv", decisions.to_frame())
    for level in odtr.fits.v2_levels:
        out.write_table(f"nuisances_v2_{level}.csv", odtr.fits.to_frame(level))
    out.write_table("cate_v1.csv", _cate_frame(odtr.cate_model))

    estimates = odtr.evaluate()
    values = estimates_frame(estimates)
    out.write_table("policy_value.csv", values)
    out.write_table("contrasts.csv", contrasts_frame(odtr.contrasts(estimates)))

    _print_table(values, "ルールの価値")
    if np.any(~decisions.observed):
        _print_table(decision_summary(decisions, missing_only=True).to_frame(), "V2 欠測者の決定")
    return values


def cmd_study(config):
    """
    シミュレーション研究

    出力: truth.csv、study.csv、study_cells.csv、seeds.csv
    """
    out = OutputDirectory(config.outdir, debug=config.verbose)
    out.write_config(config.to_dict(runtime=False), __version__)
    params = config.dgp_params()
    truth = oracle_truth(params, replicates=config.replicates, n_jobs=config.workers)
    out.write_table("truth.csv", truth.to_frame())

    reports = [
        run_replications(
            n,
            config.K,
            truth,
            params=params,
            config=config.learner_config(n_jobs=1),
            folds=config.J,
            seed=config.seed,
            n_jobs=config.workers,
            progress=True,
        )
        for n in config.sizes
    ]
    table = study_frame(reports)
    out.write_table("study.csv", table)
    out.write_table("study_cells.csv", pd.concat([r.cells_frame() for r in reports], ignore_index=True))
    out.write_table("seeds.csv", pd.concat([r.seeds_frame() for r in reports], ignore_index=True))
    _print_table(table)

    invalid = [r for r in reports if not r.valid]
    if invalid:
        worst = max(invalid, key=lambda r: len(r.failures))
        raise ReplicationError(
            f"失敗した複製が多すぎます (n={worst.n})", failures=len(worst.failures), total=worst.K
        )
    return reports


COMMANDS = {
    "simulate": cmd_simulate,
    "truth": cmd_truth,
    "estimate": cmd_estimate,
    "study": cmd_study,
}


def _stratum(value):
    if value == "pooled":
        return value
    try:
        return int(value)
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"層は 0、1、pooled のいずれかです: {value}") from e


def build_parser():
    """引数パーサを作る（未指定のフラグは None で、設定ファイルの値を上書きしない）"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON 設定ファイル")
    common.add_argument("--workers", type=int, default=None, help="並列ワーカー数")
    common.add_argument("--outdir", default=None, help="出力ディレクトリ")
    common.add_argument("--verbose", action="store_true", default=None, help="DEBUG ログを出力する")
    common.add_argument("--seed", type=int, default=None, help="マスターシード")
    common.add_argument("--zero-effect", dest="zero_effect", action="store_true", default=None,
                        help="治療効果なしのデータ生成機構を使う")

    learner = argparse.ArgumentParser(add_help=False)
    learner.add_argument("--J", type=int, default=None, help="フォールド数")
    learner.add_argument("--nuisance-learner", dest="nuisance_learner", choices=["lasso", "glm", "intercept"],
                         default=None)
    learner.add_argument("--second-stage", dest="second_stage", choices=["cell_means", "linear"], default=None)
    learner.add_argument("--no-calibrate", dest="calibrate", action="store_false", default=None,
                         help="等張キャリブレーションを行わない")
    learner.add_argument("--clip", type=float, default=None, help="確率の切り詰め εclip")
    learner.add_argument("--lambda-grid-size", dest="lambda_grid_size", type=int, default=None)
    learner.add_argument("--cv-folds", dest="cv_folds", type=int, default=None)
    learner.add_argument("--calibration-folds", dest="calibration_folds", type=int, default=None)

    parser = argparse.ArgumentParser(prog="pyodtr", description="融合試験データからの最適治療ルール推定")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", parents=[common], help="データセットを生成する")
    simulate.add_argument("--n", type=int, default=None, help="レコード数")

    truth = sub.add_parser("truth", parents=[common], help="真値表を作る")
    truth.add_argument("--replicates", type=int, default=None, help="反事実シミュレーションの複製数")

    estimate = sub.add_parser("estimate", parents=[common, learner], help="データセットから推定する")
    estimate.add_argument("--input", default=None, help="データセット CSV")
    estimate.add_argument("--estimator", choices=["drlearner", "plugin"], default=None)
    estimate.add_argument("--stratum", type=_stratum, default=None, help="ルールの価値を評価する層（0、1、pooled）")
    estimate.add_argument("--v2-levels", dest="v2_levels", type=int, nargs="+", default=None)

    study = sub.add_parser("study", parents=[common, learner], help="シミュレーション研究")
    study.add_argument("--K", type=int, default=None, help="複製数")
    study.add_argument("--sizes", type=int, nargs="+", default=None, help="サンプルサイズ")
    study.add_argument("--replicates", type=int, default=None, help="真値オラクルの複製数")
    return parser


def main(argv=None):
    """
    エントリポイント

    Args:
        argv (list of str): 引数（省略時は sys.argv[1:]）

    Returns:
        int: 終了コード
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format=LOG_FORMAT)

    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    try:
        config = load_run_config(args.config, overrides)
    except (ConfigError, ParameterError, FileOperationError) as e:
        logger.error(f"設定エラー: {e}")
        return EXIT_CONFIG
    if config.verbose:
        logging.getLogger().setLevel(logging.DEBUG)

    try:
        COMMANDS[args.command](config)
    except ConfigError as e:
        logger.error(f"設定エラー: {e}")
        return EXIT_CONFIG
    except ODTRBaseError as e:
        logger.error(f"実行時エラー: {e}")
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
