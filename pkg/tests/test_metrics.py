import csv
import tempfile
import unittest
from pathlib import Path

import numpy as np
import pytest

from umsli import metrics
from umsli.errors import DimMismatch, EmptyCorpus, EmptyGroundTruth, InvalidParam
from umsli.image_io import save_array, save_mask
from umsli.metrics import auc, auc_rank, count_table, f_beta, f_measure, pr_roc


def _rank_oracle(smap: np.ndarray, gt: np.ndarray) -> float:
    pos = smap[gt][:, None]
    neg = smap[~gt][None, :]
    return float(np.mean(pos > neg) + 0.5 * np.mean(pos == neg))


def _quantized(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.integers(0, 256, size=shape) / 255.0


class PrRocTests(unittest.TestCase):
    def test_perfect_detector(self) -> None:
        gt = np.zeros((6, 6), dtype=bool)
        gt[1:3, 2:5] = True
        point = pr_roc(gt.astype(float), gt).at(0.5)
        self.assertEqual((point.precision, point.recall, point.fpr), (1.0, 1.0, 0.0))

    def test_inverted_detector(self) -> None:
        gt = np.zeros((6, 6), dtype=bool)
        gt[0, :] = True
        point = pr_roc(1.0 - gt, gt).at(0.5)
        self.assertEqual((point.precision, point.recall), (0.0, 0.0))

    def test_four_pixel_hand_count(self) -> None:
        smap = np.array([0.9, 0.6, 0.4, 0.1])
        gt = np.array([True, True, False, False])
        table = count_table(smap, gt, np.array([0.5]))
        counts = (int(table.tp[0]), int(table.fp[0]), int(table.fn[0]), int(table.tn[0]))
        self.assertEqual(counts, (2, 0, 0, 2))
        point = table.curve().points[0]
        self.assertEqual((point.precision, point.recall, point.fpr), (1.0, 1.0, 0.0))

    def test_no_detections_has_precision_one(self) -> None:
        smap = np.array([0.1, 0.2])
        gt = np.array([True, False])
        point = pr_roc(smap, gt, np.array([0.9])).points[0]
        self.assertEqual((point.precision, point.recall), (1.0, 0.0))

    def test_recall_and_fpr_non_increasing(self) -> None:
        rng = np.random.default_rng(0)
        smap = rng.random((20, 20))
        gt = rng.random((20, 20)) > 0.7
        curve = pr_roc(smap, gt)
        recall = [p.recall for p in curve.points]
        fpr = [p.fpr for p in curve.points]
        self.assertTrue(all(a >= b for a, b in zip(recall, recall[1:])))
        self.assertTrue(all(a >= b for a, b in zip(fpr, fpr[1:])))
        self.assertEqual(len(curve.points), 256)
        self.assertEqual(len(curve.pr()), len(curve.roc()))

    def test_dimension_mismatch(self) -> None:
        with self.assertRaises(DimMismatch):
            pr_roc(np.zeros((3, 3)), np.ones((3, 4), dtype=bool))

    def test_empty_ground_truth(self) -> None:
        with self.assertRaises(EmptyGroundTruth):
            pr_roc(np.zeros((3, 3)), np.zeros((3, 3), dtype=bool))


class AucTests(unittest.TestCase):
    def test_perfect_map(self) -> None:
        gt = np.zeros((8, 8), dtype=bool)
        gt[2:4, 2:4] = True
        self.assertEqual(auc(pr_roc(gt.astype(float), gt)), 1.0)

    def test_constant_map(self) -> None:
        gt = np.zeros((8, 8), dtype=bool)
        gt[0, 0:3] = True
        self.assertEqual(auc(pr_roc(np.full((8, 8), 0.5), gt)), 0.5)

    def test_matches_rank_oracle_on_quantized_maps(self) -> None:
        rng = np.random.default_rng(1)
        for _ in range(20):
            smap = _quantized(rng, (24, 24))
            gt = rng.random((24, 24)) > 0.8
            gt[0, 0] = True
            gt[-1, -1] = False
            expected = _rank_oracle(smap, gt)
            self.assertAlmostEqual(auc(pr_roc(smap, gt)), expected, delta=1e-6)
            self.assertAlmostEqual(auc_rank(smap, gt), expected, delta=1e-9)

    def test_rank_auc_monotone_invariant(self) -> None:
        rng = np.random.default_rng(2)
        smap = rng.random((16, 16))
        gt = rng.random((16, 16)) > 0.6
        self.assertAlmostEqual(auc_rank(smap, gt), auc_rank(np.exp(3.0 * smap), gt), places=12)

    def test_complement_sums_to_one(self) -> None:
        rng = np.random.default_rng(3)
        smap = rng.random((16, 16))
        gt = rng.random((16, 16)) > 0.5
        self.assertAlmostEqual(auc_rank(smap, gt) + auc_rank(1.0 - smap, gt), 1.0, places=12)

    def test_rank_auc_needs_negatives(self) -> None:
        with self.assertRaises(InvalidParam):
            auc_rank(np.ones((2, 2)), np.ones((2, 2), dtype=bool))


class FMeasureTests(unittest.TestCase):
    def test_hand_cases(self) -> None:
        self.assertAlmostEqual(f_beta(1.0, 0.5), 0.8125, places=12)
        for p in (0.1, 0.5, 0.9):
            self.assertAlmostEqual(f_beta(p, p), p, places=12)
        self.assertEqual(f_beta(0.0, 0.0), 0.0)

    def test_between_precision_and_recall(self) -> None:
        rng = np.random.default_rng(4)
        for p, r in rng.uniform(0.01, 1.0, size=(50, 2)):
            f = f_beta(float(p), float(r))
            self.assertGreaterEqual(f, min(p, r) - 1e-12)
            self.assertLessEqual(f, max(p, r) + 1e-12)

    def test_perfect_sparse_map(self) -> None:
        gt = np.zeros((10, 10), dtype=bool)
        gt[4:6, 4:6] = True
        self.assertAlmostEqual(f_measure(gt.astype(float), gt), 1.0, places=12)

    def test_thresholds_above_peak_score_zero(self) -> None:
        gt = np.zeros((4, 4), dtype=bool)
        gt[0, 0] = True
        self.assertEqual(f_measure(np.full((4, 4), 0.5), gt), 0.0)


class CorpusTests(unittest.TestCase):
    def _write_pair(self, root: Path, stem: str, smap: np.ndarray, gt: np.ndarray) -> None:
        save_array(root / "maps" / f"{stem}.png", smap, bit_depth=8)
        save_mask(root / "gt" / f"{stem}.png", gt)

    def _pair(self, seed: int):
        rng = np.random.default_rng(seed)
        smap = _quantized(rng, (12, 12))
        gt = rng.random((12, 12)) > 0.7
        gt[0, 0] = True
        return smap, gt

    def test_single_image_matches_direct_ops(self) -> None:
        smap, gt = self._pair(5)
        with tempfile.TemporaryDirectory() as td:
            root = Path(td)
            self._write_pair(root, "a", smap, gt)
            report = metrics.evaluate_corpus(root / "maps", root / "gt")
        self.assertEqual(report.n_images, 1)
        self.assertAlmostEqual(report.auc, auc(pr_roc(smap, gt)), places=12)
        self.assertAlmostEqual(report.f_measure, f_measure(smap, gt), places=12)
        self.assertEqual(report.errors, [])

    def test_two_images_pool_counts(self) -> None:
        (m1, g1), (m2, g2) = self._pair(6), self._pair(7)
        with tempfile.TemporaryDirectory() as td:
            root = Path(td)
            self._write_pair(root, "a", m1, g1)
            self._write_pair(root, "b", m2, g2)
            report = metrics.evaluate_corpus(root / "maps", root / "gt")
            macro = metrics.evaluate_corpus(root / "maps", root / "gt", "macro")
        t1, t2 = count_table(m1, g1), count_table(m2, g2)
        tp = t1.tp + t2.tp
        fp = t1.fp + t2.fp
        expected = metrics.CountTable(metrics.THRESHOLDS, tp, fp, t1.fn + t2.fn, t1.tn + t2.tn).curve()
        self.assertEqual(report.curve, expected)
        pooled_map = np.concatenate([m1.ravel(), m2.ravel()])
        pooled_gt = np.concatenate([g1.ravel(), g2.ravel()])
        self.assertAlmostEqual(report.auc_rank or 0.0, _rank_oracle(pooled_map, pooled_gt), places=9)
        self.assertAlmostEqual(macro.auc, (auc(pr_roc(m1, g1)) + auc(pr_roc(m2, g2))) / 2, places=12)
        self.assertEqual(macro.average, "macro")

    def test_missing_pair_is_reported(self) -> None:
        smap, gt = self._pair(8)
        with tempfile.TemporaryDirectory() as td:
            root = Path(td)
            self._write_pair(root, "a", smap, gt)
            save_array(root / "maps" / "orphan.png", smap, bit_depth=8)
            save_mask(root / "gt" / "lonely.png", gt)
            report = metrics.evaluate_corpus(root / "maps", root / "gt")
        self.assertEqual(report.n_images, 1)
        self.assertEqual(len(report.errors), 2)
        self.assertTrue(any(e.startswith("orphan.png") for e in report.errors))

    def test_dimension_mismatch_is_skipped(self) -> None:
        smap, gt = self._pair(9)
        with tempfile.TemporaryDirectory() as td:
            root = Path(td)
            self._write_pair(root, "a", smap, gt)
            self._write_pair(root, "b", smap, gt[:6])
            report = metrics.evaluate_corpus(root / "maps", root / "gt")
        self.assertEqual(report.n_images, 1)
        self.assertIn("b.png", report.errors[0])

    def test_empty_directory(self) -> None:
        with tempfile.TemporaryDirectory() as td:
            (Path(td) / "maps").mkdir()
            (Path(td) / "gt").mkdir()
            with self.assertRaises(EmptyCorpus):
                metrics.evaluate_corpus(Path(td) / "maps", Path(td) / "gt")

    def test_timings_and_report_csv(self) -> None:
        smap, gt = self._pair(10)
        with tempfile.TemporaryDirectory() as td:
            root = Path(td)
            self._write_pair(root, "a", smap, gt)
            (root / "maps" / "timings.csv").write_text(
                "file,detect_s,total_s\na.png,0.25,0.5\n", encoding="utf-8"
            )
            report = metrics.evaluate_corpus(root / "maps", root / "gt")
            metrics.write_report(root / "report.csv", report)
            metrics.write_curves(root / "curves.csv", report.curve)
            with (root / "report.csv").open(newline="", encoding="utf-8") as fh:
                rows = list(csv.DictReader(fh))
            with (root / "curves.csv").open(newline="", encoding="utf-8") as fh:
                curve_rows = list(csv.reader(fh))
        self.assertEqual(report.detect_time_s, 0.25)
        self.assertEqual(report.total_time_s, 0.5)
        self.assertEqual(list(rows[0]), list(metrics.REPORT_COLUMNS))
        self.assertEqual(rows[0]["detect_time_s"], "0.250000")
        self.assertEqual(curve_rows[0], list(metrics.CURVE_COLUMNS))
        self.assertEqual(len(curve_rows), 257)

    def test_unknown_average(self) -> None:
        with self.assertRaises(InvalidParam):
            metrics.evaluate_corpus(Path("."), Path("."), "weighted")  # type: ignore[arg-type]


def test_benchmark_runs_on_two_scenes() -> None:
    result = metrics.benchmark_detector(2, seed=3)
    assert result.report.n_images == 2  # nosec B101
    assert 0.0 <= result.report.auc <= 1.0  # nosec B101
    assert result.seconds_per_image > 0  # nosec B101


@pytest.mark.slow
def test_gamma_detector_separates_objects_on_fifty_scenes() -> None:
    result = metrics.benchmark_detector(50, seed=0)
    assert result.report.auc >= 0.9  # nosec B101
