#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
pyodtr-ml ファイル出力モジュール

コマンドの出力ディレクトリ（CSVテーブルと解決済み設定）を管理します。
"""

import logging
from pathlib import Path
from typing import Any, Dict, List

from .data_converter import write_dataset_csv, write_table_csv
from .errors import FileOperationError
from .utils import dict_to_json_file, ensure_directory

logger = logging.getLogger(__name__)

RESOLVED_CONFIG_NAME = "resolved_config.json"


class OutputDirectory:
    """コマンド出力を1つのディレクトリに書き出すクラス"""

    def __init__(self, path, debug: bool = False):
        """
        Args:
            path: 出力ディレクトリ（存在しなければ作成）
            debug: デバッグモード
        """
        self.path = ensure_directory(path)
        self.debug = debug
        self.written: List[Path] = []
        if debug:
            logger.setLevel(logging.DEBUG)

    def file(self, name: str) -> Path:
        """出力ファイルのパス"""
        return self.path / name

    def write_config(self, resolved: Dict[str, Any], version: str) -> Path:
        """
        解決済み設定とツールのバージョンを書き出す

        Args:
            resolved: 解決済み設定の辞書
            version: パッケージのバージョン文字列

        Returns:
            書き出したファイルのパス
        """
        payload = dict(resolved)
        payload["version"] = version
        target = self.file(RESOLVED_CONFIG_NAME)
        dict_to_json_file(payload, target)
        self._record(target)
        return target

    def write_table(self, name: str, frame) -> Path:
        """DataFrame をCSVとして書き出す"""
        target = self.file(name)
        write_table_csv(frame, target)
        self._record(target)
        return target

    def write_dataset(self, name: str, data) -> Path:
        """Dataset をCSVとして書き出す"""
        target = self.file(name)
        write_dataset_csv(data, target)
        self._record(target)
        return target

    def write_text(self, name: str, text: str) -> Path:
        """テキストファイル（学習器のスナップショットなど）を書き出す"""
        target = self.file(name)
        try:
            target.write_text(text, encoding="utf-8")
        except OSError as e:
            raise FileOperationError(
                f"ファイルを書き込めません: {e}", file_path=str(target), operation="write"
            ) from e
        self._record(target)
        return target

    def _record(self, target: Path):
        self.written.append(target)
        logger.debug(f"出力ファイルを書き込みました: {target}")
