#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
test_cli.py
pyodtr コマンドラインインターフェースのテスト
"""

import io
import json
import sys
import tempfile
import unittest
import logging
from contextlib import redirect_stdout
from pathlib import Path

import pandas as pd

# プロジェクトルートをパスに追加して、モジュールをインポートできるようにする
project_root = Path(__file__).parent.parent.parent
sys.path.insert(0, str(project_root))

from pyodtr_ml import __version__
from pyodtr_ml.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main
from pyodtr_ml.data_converter import read_dataset_csv
from pyodtr_ml.dataset import COLUMNS
from pyodtr_ml.estimator import FusedODTR
from pyodtr_ml.learners import LearnerConfig

# ロガーの設定
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s [%(levelname)s] %(message)s',
)
logger = logging.getLogger(__name__)

LIGHT_LEARNER = ["--nuisance-learner", "glm", "--no-calibrate", "--J", "2"]


class TestCli(unittest.TestCase):
    """サブコマンドと終了コードのテスト"""

    def setUp(self):
        logger.info("テスト開始")
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()
        logger.info("テスト終了")

    def run_main(self, *argv):
        with redirect_stdout(io.StringIO()) as out:
            code = main(list(argv))
        return code, out.getvalue()

    def simulate(self, name, n=300, seed=7):
        outdir = self.dir / name
        code, _ = self.run_main("simulate", "--n", str(n), "--seed", str(seed), "--outdir", str(outdir))
        self.assertEqual(code, EXIT_OK)
        return outdir

    def test_version(self):
        with redirect_stdout(io.StringIO()) as out:
            with self.assertRaises(SystemExit) as ctx:
                main(["--version"])
        self.assertEqual(ctx.exception.code, 0)
        self.assertIn(__version__, out.getvalue())

    def test_simulate_is_deterministic(self):
        first = self.simulate("a")
        second = self.simulate("b")
        a = (first / "dataset.csv").read_bytes()
        self.assertEqual(a, (second / "dataset.csv").read_bytes())
        lines = a.decode("utf-8").splitlines()
        self.assertEqual(lines[0], ",".join(COLUMNS))
        self.assertEqual(len(lines), 301)
        resolved = json.loads((first / "resolved_config.json").read_text(encoding="utf-8"))
        self.assertEqual(resolved["version"], __version__)
        self.assertEqual((resolved["n"], resolved["seed"]), (300, 7))

    def test_config_errors(self):
        code, _ = self.run_main("simulate", "--n", "0", "--outdir", str(self.dir / "x"))
        self.assertEqual(code, EXIT_CONFIG)
        code, _ = self.run_main("estimate", "--outdir", str(self.dir / "y"))
        self.assertEqual(code, EXIT_CONFIG)
        code, _ = self.run_main("simulate", "--config", str(self.dir / "none.json"))
        self.assertEqual(code, EXIT_CONFIG)
        bad = self.dir / "bad.json"
        bad.write_text(json.dumps({"folds": 3}), encoding="utf-8")
        code, _ = self.run_main("simulate", "--config", str(bad))
        self.assertEqual(code, EXIT_CONFIG)

    def test_estimate_rejects_missing_v2_in_trial_one(self):
        path = self.dir / "data.csv"
        path.write_text(",".join(COLUMNS) + "\n1,0,0.5,1,0,1,,1,0\n", encoding="utf-8")
        code, _ = self.run_main("estimate", "--input", str(path), "--outdir", str(self.dir / "out"))
        self.assertEqual(code, EXIT_RUNTIME)

    def test_estimate(self):
        data_dir = self.simulate("data", n=3000, seed=11)
        outdir = self.dir / "estimate"
        code, printed = self.run_main(
            "estimate", "--input", str(data_dir / "dataset.csv"), "--outdir", str(outdir), *LIGHT_LEARNER
        )
        self.assertEqual(code, EXIT_OK)
        for name in ("cpe.csv", "decisions.csv", "policy_value.csv", "contrasts.csv", "cate_v1.csv",
                     "nuisances_v2_0.csv", "nuisances_v2_1.csv", "cpe_model.json", "resolved_config.json"):
            self.assertTrue((outdir / name).is_file(), name)
        values = pd.read_csv(outdir / "policy_value.csv")
        self.assertEqual(list(values.columns), ["rule", "psi", "se", "lo", "hi"])
        self.assertEqual(list(values["rule"]), ["d1", "d0", "cate", "static_0", "static_1"])
        self.assertEqual(len(pd.read_csv(outdir / "decisions.csv")), 3000)
        self.assertIn("static_1", printed)

        # ファイル経由の推定はプロセス内の推定とビット単位で一致する
        data = read_dataset_csv(data_dir / "dataset.csv")
        odtr = FusedODTR(config=LearnerConfig(nuisance_learner="glm", calibrate=False), folds=2).fit(data)
        cpe = pd.read_csv(outdir / "cpe.csv", float_precision="round_trip")
        pd.testing.assert_frame_equal(cpe, odtr.cpe_model.cell_table(), check_dtype=False)

        # plugin も同じフォールドと局外パラメータを使う
        plugin_dir = self.dir / "plugin"
        code, _ = self.run_main(
            "estimate", "--input", str(data_dir / "dataset.csv"), "--outdir", str(plugin_dir),
            "--estimator", "plugin", *LIGHT_LEARNER,
        )
        self.assertEqual(code, EXIT_OK)
        for level in (0, 1):
            name = f"nuisances_v2_{level}.csv"
            self.assertEqual((plugin_dir / name).read_bytes(), (outdir / name).read_bytes())

    def test_output_does_not_depend_on_workers(self):
        dirs = []
        for workers in (1, 2):
            outdir = self.dir / f"workers{workers}"
            code, _ = self.run_main("truth", "--replicates", "1000000", "--workers", str(workers), "--outdir", str(outdir))
            self.assertEqual(code, EXIT_OK)
            dirs.append(outdir)
        names = sorted(p.name for p in dirs[0].iterdir())
        self.assertEqual(names, sorted(p.name for p in dirs[1].iterdir()))
        self.assertIn("resolved_config.json", names)
        for name in names:
            with self.subTest(file=name):
                self.assertEqual((dirs[0] / name).read_bytes(), (dirs[1] / name).read_bytes())
        resolved = json.loads((dirs[0] / "resolved_config.json").read_text(encoding="utf-8"))
        self.assertNotIn("workers", resolved)

    def test_truth_zero_effect(self):
        outdir = self.dir / "null"
        code, _ = self.run_main("truth", "--zero-effect", "--replicates", "1000000", "--outdir", str(outdir))
        self.assertEqual(code, EXIT_OK)
        truth = pd.read_csv(outdir / "truth.csv")
        self.assertTrue((truth["cate"].abs() < 1e-12).all())
        self.assertTrue((truth["cpe"].abs() < 1e-12).all())

    def test_truth_and_study(self):
        outdir = self.dir / "study"
        code, _ = self.run_main(
            "study", "--K", "2", "--sizes", "600", "--replicates", "1000000", "--seed", "3",
            "--outdir", str(outdir), *LIGHT_LEARNER,
        )
        self.assertEqual(code, EXIT_OK)
        study = pd.read_csv(outdir / "study.csv")
        self.assertEqual(list(study.columns), ["n", "estimator", "bias", "rmse"])
        self.assertEqual(list(study["estimator"]), ["drlearner", "plugin"])
        seeds = pd.read_csv(outdir / "seeds.csv")
        self.assertEqual(list(seeds["k"]), [0, 1])
        truth = pd.read_csv(outdir / "truth.csv")
        self.assertEqual(len(truth), 16)
        self.assertAlmostEqual(truth["prob"].sum(), 1.0)

        code, _ = self.run_main("truth", "--replicates", "1000", "--outdir", str(self.dir / "t"))
        self.assertEqual(code, EXIT_CONFIG)


if __name__ == "__main__":
    unittest.main()
