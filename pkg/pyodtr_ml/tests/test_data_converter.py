#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
test_data_converter.py
データセット CSV の読み書きとスキーマ検証、出力ディレクトリのテスト
"""

import json
import sys
import tempfile
import unittest
import logging
from pathlib import Path

import numpy as np
import pandas as pd

# プロジェクトルートをパスに追加して、モジュールをインポートできるようにする
project_root = Path(__file__).parent.parent.parent
sys.path.insert(0, str(project_root))

from pyodtr_ml.data_converter import dataset_to_frame, read_dataset_csv, write_dataset_csv
from pyodtr_ml.dataset import COLUMNS
from pyodtr_ml.dgp import DgpParams, sample_dataset
from pyodtr_ml.errors import DataFormatError, FileOperationError
from pyodtr_ml.file_io import RESOLVED_CONFIG_NAME, OutputDirectory

# ロガーの設定
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s [%(levelname)s] %(message)s',
)
logger = logging.getLogger(__name__)

HEADER = ",".join(COLUMNS)


class TestDatasetCsv(unittest.TestCase):
    """データセット CSV のテスト"""

    def setUp(self):
        logger.info("テスト開始")
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()
        logger.info("テスト終了")

    def write(self, *rows):
        path = self.dir / "data.csv"
        path.write_text("\n".join((HEADER,) + rows) + "\n", encoding="utf-8")
        return path

    def test_round_trip(self):
        data = sample_dataset(DgpParams(n=500, seed=12))
        path = self.dir / "dataset.csv"
        write_dataset_csv(data, path)
        restored = read_dataset_csv(path)
        for name in COLUMNS:
            np.testing.assert_array_equal(getattr(restored, name), getattr(data, name))
        self.assertIsNone(restored.v2_full)

    def test_missing_v2_is_blank(self):
        data = sample_dataset(DgpParams(n=200, seed=13))
        path = self.dir / "dataset.csv"
        write_dataset_csv(data, path)
        lines = path.read_text(encoding="utf-8").splitlines()
        self.assertEqual(lines[0], HEADER)
        first_missing = int(np.flatnonzero(data.s == 0)[0])
        self.assertEqual(lines[first_missing + 1].split(",")[6], "")
        frame = dataset_to_frame(data)
        self.assertTrue(frame["v2"].isna().sum() == int(np.sum(data.s == 0)))

    def test_valid_rows(self):
        path = self.write("1,0,0.25,1,0,1,1,1,0", "0,1,0.5,0,0,0,,0,1")
        data = read_dataset_csv(path)
        self.assertEqual(data.n, 2)
        self.assertEqual(data.record(0).v2, 1)
        self.assertIsNone(data.record(1).v2)
        self.assertEqual(data.v2_levels(), (1,))

    def test_header_mismatch(self):
        path = self.dir / "bad.csv"
        path.write_text("s,w1,w2\n1,0,0.5\n", encoding="utf-8")
        with self.assertRaises(DataFormatError) as ctx:
            read_dataset_csv(path)
        self.assertEqual(ctx.exception.details["row"], 1)

    def test_schema_violations(self):
        cases = {
            "missing v2 in trial one": (("1,0,0.5,1,0,1,1,1,0", "1,0,0.5,1,0,1,,1,0"), 3, "v2"),
            "v2 observed in trial zero": (("0,0,0.5,1,0,1,1,0,0",), 2, "v2"),
            "non numeric outcome": (("1,0,0.5,1,0,1,1,1,0", "1,0,0.5,1,0,1,0,1,x"), 3, "y"),
            "fractional treatment": (("1,0,0.5,1,0,1,1,0.5,0",), 2, "a"),
            "binary out of range": (("1,2,0.5,1,0,1,1,1,0",), 2, "w1"),
            "missing covariate": (("1,0,,1,0,1,1,1,0",), 2, "w2"),
        }
        for name, (rows, row, column) in cases.items():
            with self.subTest(case=name):
                with self.assertRaises(DataFormatError) as ctx:
                    read_dataset_csv(self.write(*rows))
                self.assertEqual(ctx.exception.details["row"], row)
                self.assertEqual(ctx.exception.details["column"], column)

    def test_missing_file(self):
        with self.assertRaises(FileOperationError):
            read_dataset_csv(self.dir / "none.csv")


class TestOutputDirectory(unittest.TestCase):
    """出力ディレクトリのテスト"""

    def setUp(self):
        logger.info("テスト開始")
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()
        logger.info("テスト終了")

    def test_creates_directory_and_records_files(self):
        out = OutputDirectory(Path(self.tmp.name) / "nested" / "out")
        self.assertTrue(out.path.is_dir())
        config_path = out.write_config({"seed": 3}, "0.1.0")
        table_path = out.write_table("t.csv", pd.DataFrame({"x": [0.1, 1 / 3]}))
        self.assertEqual(out.written, [config_path, table_path])
        self.assertEqual(config_path.name, RESOLVED_CONFIG_NAME)
        payload = json.loads(config_path.read_text(encoding="utf-8"))
        self.assertEqual(payload, {"seed": 3, "version": "0.1.0"})
        lines = table_path.read_text(encoding="utf-8").splitlines()
        self.assertEqual(lines, ["x", "0.10000000000000001", "0.33333333333333331"])


if __name__ == "__main__":
    unittest.main()
