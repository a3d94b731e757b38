"""
pyodtr-ml のユーティリティモジュール

乱数ストリームの分割、ロジスティック変換、JSON入出力などの補助関数を提供します。
"""

import json
import zlib
from pathlib import Path

import numpy as np
from scipy import special

from .errors import FileOperationError, ParameterError

# 乱数ストリームの識別子（SeedSequence の spawn_key 先頭要素）
STREAM_DATA = 1
STREAM_ORACLE = 2
STREAM_FOLDS = 3
STREAM_CV = 4
STREAM_CALIBRATION = 5
STREAM_REPLICATE = 6

# 1ブロックあたりのレコード数（ブロックごとに独立したストリームを使う）
BLOCK_SIZE = 2**16


def expit(x):
    """
    ロジスティック関数 1/(1+exp(-x))

    極端な x でもオーバーフローせずに 0 または 1 に飽和します。
    """
    return special.expit(x)


def logit(p):
    """ロジット関数 log(p/(1-p))"""
    return special.logit(p)


def _key(value):
    """spawn_key に使える非負整数へ変換（文字列は CRC32）"""
    if isinstance(value, str):
        return zlib.crc32(value.encode("utf-8"))
    value = int(value)
    if value < 0:
        raise ParameterError("ストリームキーは非負である必要があります", name="key", value=value)
    return value


def seed_sequence(seed, *keys):
    """
    マスターシードとキー列から SeedSequence を作成

    Parameters
    ----------
    seed : int
        符号なし64ビットのマスターシード
    *keys : int or str
        ストリームを識別するキー（ストリームID、反復番号、フォールド番号など）

    Returns
    -------
    numpy.random.SeedSequence
    """
    seed = int(seed)
    if seed < 0 or seed >= 2**64:
        raise ParameterError("シードは符号なし64ビット整数である必要があります", name="seed", value=seed)
    return np.random.SeedSequence(seed, spawn_key=tuple(_key(k) for k in keys))


def derive_seed(seed, *keys):
    """
    マスターシードから派生シード（符号なし64ビット）を作成

    同じ (seed, keys) からは常に同じ値が得られます。
    """
    return int(seed_sequence(seed, *keys).generate_state(1, np.uint64)[0])


def make_generator(seed, *keys):
    """カウンタベース（Philox）の乱数生成器を作成"""
    return np.random.Generator(np.random.Philox(seed_sequence(seed, *keys)))


def block_uniforms(seed, stream, n, width, start_block=0, block_size=BLOCK_SIZE):
    """
    ブロック単位に分割されたストリームから一様乱数行列を生成

    ブロック b の行はストリーム (stream, b) だけから生成されるため、
    どの順序・どのワーカーで生成しても同じ値になります。

    Parameters
    ----------
    seed : int
        マスターシード
    stream : int
        ストリームID
    n : int
        行数
    width : int
        1行あたりの一様乱数の数
    start_block : int, optional
        最初のブロック番号（シャード分割用）
    block_size : int, optional
        1ブロックの行数

    Returns
    -------
    numpy.ndarray
        形状 (n, width) の一様乱数 [0, 1)
    """
    out = np.empty((n, width), dtype=np.float64)
    for offset in range(0, n, block_size):
        rows = min(block_size, n - offset)
        block = start_block + offset // block_size
        rng = make_generator(seed, stream, block)
        out[offset : offset + rows] = rng.random((rows, width))
    return out


def ensure_directory(dir_path):
    """
    ディレクトリが存在することを確認し、存在しない場合は作成

    Parameters
    ----------
    dir_path : str or Path
        確認/作成するディレクトリパス

    Returns
    -------
    Path
        ディレクトリのパス
    """
    dir_path = Path(dir_path)
    try:
        dir_path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise FileOperationError(
            f"ディレクトリを作成できません: {e}", file_path=str(dir_path), operation="mkdir"
        ) from e
    return dir_path


def dict_to_json_file(data, file_path):
    """
    辞書をJSONファイルに保存（キー順を固定してバイト単位で再現可能にする）

    Parameters
    ----------
    data : dict
        保存するデータ
    file_path : str or Path
        保存先ファイルパス

    Returns
    -------
    str
        保存されたファイルのパス
    """
    try:
        with open(file_path, "w", encoding="utf-8") as f:
            json.dump(data, f, indent=2, sort_keys=True, ensure_ascii=False)
            f.write("\n")
    except OSError as e:
        raise FileOperationError(
            f"JSONを書き込めません: {e}", file_path=str(file_path), operation="write"
        ) from e
    return str(file_path)


def json_file_to_dict(file_path):
    """
    JSONファイルから辞書を読み込む

    Parameters
    ----------
    file_path : str or Path
        読み込むファイルのパス

    Returns
    -------
    dict
        読み込まれた辞書
    """
    try:
        with open(file_path, "r", encoding="utf-8") as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise FileOperationError(
            f"JSONを読み込めません: {e}", file_path=str(file_path), operation="read"
        ) from e
