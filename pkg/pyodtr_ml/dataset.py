#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
融合試験データセット

試験 S=1 では効果修飾因子 V2 が観測され、S=0 では欠測する
レコード (s, w, v1, v2, a, y) の列指向コンテナを定義します。
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DataFormatError, ParameterError

# CSVの列順
COLUMNS = ("s", "w1", "w2", "v11", "v12", "v13", "v2", "a", "y")

# V2 が欠測していることを表す値
MISSING_V2 = -1

_BINARY = ("s", "w1", "v11", "v12", "v13", "a", "y")


@dataclass(frozen=True)
class Observation:
    """1レコード分の観測値。v2 は欠測時 None"""

    s: int
    w1: int
    w2: float
    v11: int
    v12: int
    v13: int
    v2: Optional[int]
    a: int
    y: int

    @property
    def v1_cell(self):
        """V1 セル番号 (v11*4 + v12*2 + v13)"""
        return (self.v11 * 2 + self.v12) * 2 + self.v13


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    融合試験データの列指向コレクション

    v2 列は欠測時に MISSING_V2 (-1) を持ちます。シミュレーションで生成した
    データでは、マスク前の V2 を v2_full に保持します（真値との比較用）。
    """

    s: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    v11: np.ndarray
    v12: np.ndarray
    v13: np.ndarray
    v2: np.ndarray
    a: np.ndarray
    y: np.ndarray
    v2_full: Optional[np.ndarray] = None

    @property
    def n(self):
        return int(self.s.shape[0])

    def __len__(self):
        return self.n

    @property
    def v2_observed(self):
        """V2 が観測されているレコードのマスク"""
        return self.v2 != MISSING_V2

    @property
    def v1(self):
        """V1 を (n, 3) 配列として返す"""
        return np.column_stack([self.v11, self.v12, self.v13])

    def v1_cell_index(self):
        """V1 セル番号 (0..7)"""
        return (self.v11.astype(np.int64) * 2 + self.v12) * 2 + self.v13

    def cell_index(self, full=True):
        """
        (V1, V2) セル番号 (0..15) を返す

        Parameters
        ----------
        full : bool
            True の場合はマスク前の V2 (v2_full) を使う

        Raises
        ------
        ParameterError
            必要な V2 が存在しない場合
        """
        v2 = self.v2_full if full and self.v2_full is not None else self.v2
        if np.any(v2 < 0):
            raise ParameterError("V2 が欠測しているレコードにはセル番号を付けられません", name="v2")
        return self.v1_cell_index() * 2 + v2

    def v2_levels(self):
        """観測された V2 の水準（昇順）"""
        return tuple(int(v) for v in np.unique(self.v2[self.v2_observed]))

    def columns(self):
        """学習器に渡す列の辞書（float64）"""
        return {
            name: np.asarray(getattr(self, name), dtype=np.float64)
            for name in COLUMNS
        }

    def subset(self, index):
        """
        指定したインデックス（またはマスク）のレコードだけを持つ Dataset を返す
        """
        index = np.asarray(index)
        fields = {name: getattr(self, name)[index] for name in COLUMNS}
        full = self.v2_full[index] if self.v2_full is not None else None
        return Dataset(v2_full=full, **fields)

    def masked(self):
        """v2_full を捨てて観測データだけにしたコピー"""
        return Dataset(**{name: getattr(self, name) for name in COLUMNS})

    def record(self, i):
        """i 番目のレコードを Observation として返す"""
        v2 = int(self.v2[i])
        return Observation(
            s=int(self.s[i]),
            w1=int(self.w1[i]),
            w2=float(self.w2[i]),
            v11=int(self.v11[i]),
            v12=int(self.v12[i]),
            v13=int(self.v13[i]),
            v2=None if v2 == MISSING_V2 else v2,
            a=int(self.a[i]),
            y=int(self.y[i]),
        )

    def validate(self, file_path=None):
        """
        スキーマ検証

        行番号はCSVの行（ヘッダを1行目）で報告します。

        Raises
        ------
        DataFormatError
            列の長さ・値域の違反、または「V2 は S=1 のときに限り観測」の違反
        """
        n = self.n
        if n == 0:
            raise DataFormatError("データセットが空です", file_path=file_path)
        for name in COLUMNS:
            if getattr(self, name).shape != (n,):
                raise DataFormatError("列の長さが一致しません", column=name, file_path=file_path)
        for name in _BINARY:
            bad = np.flatnonzero((getattr(self, name) != 0) & (getattr(self, name) != 1))
            if bad.size:
                raise DataFormatError(
                    f"{name} は 0 または 1 である必要があります",
                    row=int(bad[0]) + 2,
                    column=name,
                    file_path=file_path,
                )
        if not np.all(np.isfinite(self.w2)):
            bad = np.flatnonzero(~np.isfinite(self.w2))
            raise DataFormatError(
                "w2 が有限値ではありません", row=int(bad[0]) + 2, column="w2", file_path=file_path
            )
        mismatch = np.flatnonzero(self.v2_observed != (self.s == 1))
        if mismatch.size:
            i = int(mismatch[0])
            message = (
                "S=1 のレコードで v2 が欠測しています"
                if self.s[i] == 1
                else "S=0 のレコードで v2 が観測されています"
            )
            raise DataFormatError(message, row=i + 2, column="v2", file_path=file_path)
        bad = np.flatnonzero(self.v2 < MISSING_V2)
        if bad.size:
            raise DataFormatError(
                "v2 は非負の整数水準である必要があります",
                row=int(bad[0]) + 2,
                column="v2",
                file_path=file_path,
            )
        return self


def make_dataset(s, w1, w2, v11, v12, v13, v2, a, y, v2_full=None):
    """配列から型をそろえた Dataset を作成する"""
    def as_int(x):
        return np.asarray(x, dtype=np.int8)

    return Dataset(
        s=as_int(s),
        w1=as_int(w1),
        w2=np.asarray(w2, dtype=np.float64),
        v11=as_int(v11),
        v12=as_int(v12),
        v13=as_int(v13),
        v2=as_int(v2),
        a=as_int(a),
        y=as_int(y),
        v2_full=None if v2_full is None else as_int(v2_full),
    )
