#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
pyodtr-ml データ変換モジュール

Dataset と pandas DataFrame / CSV の相互変換を提供します。
CSV はヘッダ `s,w1,w2,v11,v12,v13,v2,a,y` を持ち、欠測した v2 は空文字列です。
浮動小数点は '%.17g' で書き出すため、読み戻しはビット単位で一致します。
"""

import numpy as np
import pandas as pd

from .dataset import COLUMNS, MISSING_V2, make_dataset
from .errors import DataFormatError, FileOperationError

FLOAT_FORMAT = "%.17g"


def dataset_to_frame(data):
    """
    Dataset を DataFrame に変換する

    Parameters
    ----------
    data : Dataset
        変換するデータセット

    Returns
    -------
    pandas.DataFrame
        COLUMNS の順に列を持つ DataFrame（v2 は欠測を含む Int64 型）
    """
    frame = pd.DataFrame({name: getattr(data, name) for name in COLUMNS})
    for name in COLUMNS:
        if name != "w2":
            frame[name] = frame[name].astype(np.int64)
    frame["v2"] = frame["v2"].astype("Int64").mask(frame["v2"] == MISSING_V2)
    return frame[list(COLUMNS)]


def frame_to_dataset(frame, file_path=None):
    """
    DataFrame を Dataset に変換し、スキーマを検証する

    Parameters
    ----------
    frame : pandas.DataFrame
        COLUMNS の列を持つ DataFrame
    file_path : str, optional
        エラー報告用のファイルパス

    Returns
    -------
    Dataset

    Raises
    ------
    DataFormatError
        列の不足・数値でない値・欠測値・V2 の観測規則違反
    """
    missing = [name for name in COLUMNS if name not in frame.columns]
    if missing:
        raise DataFormatError(
            f"必要な列がありません: {', '.join(missing)}", column=missing[0], file_path=file_path
        )

    arrays = {}
    for name in COLUMNS:
        values = pd.to_numeric(frame[name], errors="coerce")
        invalid = values.isna().to_numpy()
        if name == "v2":
            # 空欄は欠測。空欄以外で数値に変換できない値はエラー
            raw = frame[name]
            blank = raw.isna() | (raw.astype(str).str.strip() == "")
            bad = np.flatnonzero(invalid & ~blank.to_numpy())
            if bad.size:
                raise DataFormatError(
                    "v2 を数値として解釈できません",
                    row=int(bad[0]) + 2,
                    column=name,
                    file_path=file_path,
                )
            filled = values.fillna(MISSING_V2).to_numpy()
        else:
            bad = np.flatnonzero(invalid)
            if bad.size:
                raise DataFormatError(
                    f"{name} が欠測しているか数値ではありません",
                    row=int(bad[0]) + 2,
                    column=name,
                    file_path=file_path,
                )
            filled = values.to_numpy()
        if name == "w2":
            # 文字列は float() で変換し、'%.17g' の書き出しとビット単位で往復させる
            filled = frame[name].astype(np.float64).to_numpy()
        else:
            frac = np.flatnonzero(filled != np.round(filled))
            if frac.size:
                raise DataFormatError(
                    f"{name} は整数である必要があります",
                    row=int(frac[0]) + 2,
                    column=name,
                    file_path=file_path,
                )
        arrays[name] = filled

    data = make_dataset(**arrays)
    return data.validate(file_path=file_path)


def write_dataset_csv(data, file_path):
    """
    Dataset をCSVに書き出す

    Returns
    -------
    str
        書き出したファイルのパス
    """
    return write_table_csv(dataset_to_frame(data), file_path)


def read_dataset_csv(file_path):
    """
    CSVを読み込み、検証済みの Dataset を返す

    Raises
    ------
    FileOperationError
        ファイルを読めない場合
    DataFormatError
        スキーマ違反の場合（行番号付き）
    """
    try:
        frame = pd.read_csv(file_path, dtype=str, keep_default_na=False)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise FileOperationError(
            f"CSVを読み込めません: {e}", file_path=str(file_path), operation="read"
        ) from e
    if list(frame.columns) != list(COLUMNS):
        raise DataFormatError(
            f"ヘッダが一致しません: {','.join(frame.columns)}", row=1, file_path=str(file_path)
        )
    frame = frame.replace("", np.nan)
    return frame_to_dataset(frame, file_path=str(file_path))


def write_table_csv(frame, file_path):
    """
    結果テーブルをUTF-8 CSVとして書き出す（インデックスなし、LF改行）
    """
    try:
        frame.to_csv(
            file_path,
            index=False,
            float_format=FLOAT_FORMAT,
            lineterminator="\n",
            encoding="utf-8",
        )
    except OSError as e:
        raise FileOperationError(
            f"CSVを書き込めません: {e}", file_path=str(file_path), operation="write"
        ) from e
    return str(file_path)
