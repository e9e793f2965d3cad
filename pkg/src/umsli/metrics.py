"""Saliency evaluation: PR and ROC curves, AUC, adaptive-threshold F-measure.

Curves are sampled at 256 evenly spaced thresholds in [0, 1]. A corpus is a
directory of saliency maps and a directory of ground-truth masks paired by
file stem; pixel counts are pooled across images (micro) unless macro
averaging is requested.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import rankdata

from umsli import saliency
from umsli.errors import (
    DimMismatch,
    EmptyCorpus,
    EmptyGroundTruth,
    InvalidParam,
    MissingPair,
    UmsliError,
)
from umsli.image_io import list_images, load_image, load_mask
from umsli.scene import Sparse, ground_truth, random_scene, render_scene

THRESHOLDS = np.arange(256, dtype=np.float64) / 255.0
DEFAULT_ALPHAS = tuple(range(2, 12))
DEFAULT_BETA2 = 0.3

Average = Literal["micro", "macro"]


@dataclass(frozen=True)
class CurvePoint:
    threshold: float
    precision: float
    recall: float
    fpr: float


@dataclass(frozen=True)
class PrRocCurve:
    points: Tuple[CurvePoint, ...]

    def pr(self) -> List[Tuple[float, float]]:
        """(recall, precision) pairs."""
        return [(p.recall, p.precision) for p in self.points]

    def roc(self) -> List[Tuple[float, float]]:
        """(fpr, tpr) pairs."""
        return [(p.fpr, p.recall) for p in self.points]

    def at(self, threshold: float) -> CurvePoint:
        return min(self.points, key=lambda p: abs(p.threshold - threshold))


@dataclass
class CountTable:
    """Confusion counts per threshold; additive across images."""

    thresholds: np.ndarray
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    tn: np.ndarray

    def __add__(self, other: "CountTable") -> "CountTable":
        return CountTable(
            self.thresholds,
            self.tp + other.tp,
            self.fp + other.fp,
            self.fn + other.fn,
            self.tn + other.tn,
        )

    def curve(self) -> PrRocCurve:
        detected = self.tp + self.fp
        precision = np.where(detected > 0, self.tp / np.maximum(detected, 1), 1.0)
        positives = self.tp + self.fn
        recall = self.tp / np.maximum(positives, 1)
        negatives = self.fp + self.tn
        fpr = np.where(negatives > 0, self.fp / np.maximum(negatives, 1), 0.0)
        return PrRocCurve(
            tuple(
                CurvePoint(float(t), float(p), float(r), float(f))
                for t, p, r, f in zip(self.thresholds, precision, recall, fpr)
            )
        )


def _check_pair(smap: np.ndarray, gt: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    smap = np.asarray(smap, dtype=np.float64)
    gt = np.asarray(gt, dtype=bool)
    if smap.shape != gt.shape:
        raise DimMismatch(f"map {smap.shape} and ground truth {gt.shape} differ")
    if not gt.any():
        raise EmptyGroundTruth("ground truth has no positive pixels; recall undefined")
    return smap, gt


def count_table(
    smap: np.ndarray, gt: np.ndarray, thresholds: np.ndarray = THRESHOLDS
) -> CountTable:
    smap, gt = _check_pair(smap, gt)
    pos = np.sort(smap[gt])
    neg = np.sort(smap[~gt])
    tp = pos.size - np.searchsorted(pos, thresholds, side="left")
    fp = neg.size - np.searchsorted(neg, thresholds, side="left")
    return CountTable(np.asarray(thresholds), tp, fp, pos.size - tp, neg.size - fp)


def pr_roc(smap: np.ndarray, gt: np.ndarray, thresholds: np.ndarray = THRESHOLDS) -> PrRocCurve:
    return count_table(smap, gt, thresholds).curve()


def _trapezoid(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.sum(np.diff(x) * (y[1:] + y[:-1]) / 2.0))


def auc(curve: PrRocCurve) -> float:
    """Trapezoidal area under the ROC points, closed at (0, 0) and (1, 1)."""
    pts = sorted({(0.0, 0.0), (1.0, 1.0), *curve.roc()})
    xy = np.array(pts)
    return _trapezoid(xy[:, 0], xy[:, 1])


def auc_rank(smap: np.ndarray, gt: np.ndarray) -> float:
    """P(score_pos > score_neg) + 0.5 P(tie), from the Mann-Whitney U statistic."""
    smap, gt = _check_pair(smap, gt)
    n_pos = int(gt.sum())
    n_neg = gt.size - n_pos
    if n_neg == 0:
        raise InvalidParam("ground truth has no negative pixels")
    ranks = rankdata(smap.ravel())
    u = ranks[gt.ravel()].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def f_beta(precision: float, recall: float, beta2: float = DEFAULT_BETA2) -> float:
    denom = beta2 * precision + recall
    if denom <= 0:
        return 0.0
    return (1.0 + beta2) * precision * recall / denom


def f_measure(
    smap: np.ndarray,
    gt: np.ndarray,
    alphas: Sequence[float] = DEFAULT_ALPHAS,
    beta2: float = DEFAULT_BETA2,
) -> float:
    """Mean F-beta over adaptive thresholds ``alpha * mean(map)``."""
    smap, gt = _check_pair(smap, gt)
    peak = float(smap.max())
    mean = float(smap.mean())
    scores = []
    for alpha in alphas:
        threshold = alpha * mean
        if threshold > peak:
            scores.append(0.0)
            continue
        detected = smap >= threshold
        tp = int(np.count_nonzero(detected & gt))
        n_detected = int(np.count_nonzero(detected))
        precision = tp / n_detected if n_detected else 1.0
        recall = tp / int(gt.sum())
        scores.append(f_beta(precision, recall, beta2))
    return float(np.mean(scores))


@dataclass
class EvalReport:
    curve: PrRocCurve
    auc: float
    f_measure: float
    n_images: int
    average: str = "micro"
    auc_rank: Optional[float] = None
    detect_time_s: Optional[float] = None
    total_time_s: Optional[float] = None
    eval_time_s: float = 0.0
    errors: List[str] = field(default_factory=list)

    def summary_row(self) -> Dict[str, object]:
        def fmt(value: Optional[float]) -> str:
            return "" if value is None else f"{value:.6f}"

        return {
            "images": self.n_images,
            "average": self.average,
            "f_measure": fmt(self.f_measure),
            "auc": fmt(self.auc),
            "auc_rank": fmt(self.auc_rank),
            "detect_time_s": fmt(self.detect_time_s),
            "total_time_s": fmt(self.total_time_s),
            "errors": len(self.errors),
        }


def evaluate_pair(smap: np.ndarray, gt: np.ndarray) -> EvalReport:
    curve = pr_roc(smap, gt)
    return EvalReport(
        curve=curve,
        auc=auc(curve),
        f_measure=f_measure(smap, gt),
        n_images=1,
        auc_rank=auc_rank(smap, gt),
    )


def _stems(directory: Path) -> Dict[str, Path]:
    return {p.stem: p for p in list_images(directory)}


def read_timings(path: Path) -> Dict[str, Tuple[float, float]]:
    """``timings.csv`` rows ``file,detect_s,total_s`` keyed by file stem."""
    out: Dict[str, Tuple[float, float]] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out[Path(row["file"]).stem] = (float(row["detect_s"]), float(row["total_s"]))
    return out


def evaluate_corpus(maps_dir: Path, gt_dir: Path, average: Average = "micro") -> EvalReport:
    """Score every map against the same-stem ground truth.

    Unpaired or mismatched files are skipped and listed in ``errors``.
    """
    if average not in ("micro", "macro"):
        raise InvalidParam(f"average must be 'micro' or 'macro', got {average!r}")
    started = time.perf_counter()
    maps = _stems(Path(maps_dir))
    gts = _stems(Path(gt_dir))
    if not maps:
        raise EmptyCorpus(f"no saliency maps found in {maps_dir}")

    errors: List[str] = []
    pooled: Optional[CountTable] = None
    tables: List[CountTable] = []
    fs: List[float] = []
    aucs: List[float] = []
    pos_scores: List[np.ndarray] = []
    neg_scores: List[np.ndarray] = []
    for stem in sorted(set(gts) - set(maps)):
        errors.append(str(MissingPair(f"{gts[stem].name}: no saliency map")))
    for stem, map_path in sorted(maps.items()):
        try:
            if stem not in gts:
                raise MissingPair("no ground-truth mask")
            smap = load_image(map_path).pixels
            gt = load_mask(gts[stem])
            table = count_table(smap, gt)
            fs.append(f_measure(smap, gt))
        except UmsliError as exc:
            errors.append(f"{map_path.name}: {exc}")
            continue
        tables.append(table)
        pooled = table if pooled is None else pooled + table
        aucs.append(auc(table.curve()))
        pos_scores.append(smap[gt])
        neg_scores.append(smap[~gt])

    if pooled is None:
        raise EmptyCorpus(f"no valid map/ground-truth pairs in {maps_dir} and {gt_dir}")

    if average == "micro":
        curve = pooled.curve()
        area = auc(curve)
        pos = np.concatenate(pos_scores)
        neg = np.concatenate(neg_scores)
        rank_auc = (
            auc_rank(np.concatenate([pos, neg]), np.r_[np.ones(pos.size, bool), np.zeros(neg.size, bool)])
            if neg.size
            else None
        )
    else:
        curves = [t.curve() for t in tables]
        curve = PrRocCurve(
            tuple(
                CurvePoint(
                    pts[0].threshold,
                    float(np.mean([p.precision for p in pts])),
                    float(np.mean([p.recall for p in pts])),
                    float(np.mean([p.fpr for p in pts])),
                )
                for pts in zip(*(c.points for c in curves))
            )
        )
        area = float(np.mean(aucs))
        rank_auc = None

    report = EvalReport(
        curve=curve,
        auc=area,
        f_measure=float(np.mean(fs)),
        n_images=len(tables),
        average=average,
        auc_rank=rank_auc,
        errors=errors,
    )
    timings_path = Path(maps_dir) / "timings.csv"
    if timings_path.exists():
        timings = read_timings(timings_path)
        used = [timings[s] for s in sorted(maps) if s in timings and s in gts]
        if used:
            report.detect_time_s = float(np.mean([d for d, _ in used]))
            report.total_time_s = float(np.mean([t for _, t in used]))
    report.eval_time_s = time.perf_counter() - started
    return report


REPORT_COLUMNS = (
    "images", "average", "f_measure", "auc", "auc_rank", "detect_time_s", "total_time_s", "errors"
)
CURVE_COLUMNS = ("threshold", "precision", "recall", "fpr")


def write_report(path: Path, report: EvalReport) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        writer.writeheader()
        writer.writerow(report.summary_row())


def write_curves(path: Path, curve: PrRocCurve) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CURVE_COLUMNS)
        for p in curve.points:
            writer.writerow([f"{p.threshold:.6f}", f"{p.precision:.6f}", f"{p.recall:.6f}", f"{p.fpr:.6f}"])


@dataclass
class BenchmarkResult:
    report: EvalReport
    seconds_per_image: float


def benchmark_detector(
    n_scenes: int,
    seed: int,
    bank_params: Sequence[Tuple[int, float]] | None = None,
    width: int = 128,
    height: int = 128,
    alpha: float = 4.0,
) -> BenchmarkResult:
    """Render random scenes, run the gamma detector, pool the evaluation."""
    if n_scenes < 1:
        raise InvalidParam("benchmark needs at least one scene")
    bank = saliency.kernel_bank(bank_params or saliency.DEFAULT_BANK)
    rng = np.random.default_rng(seed)
    pooled: Optional[CountTable] = None
    fs: List[float] = []
    pos_scores: List[np.ndarray] = []
    neg_scores: List[np.ndarray] = []
    elapsed = 0.0
    for _ in range(n_scenes):
        scene = random_scene(rng, width, height)
        image = render_scene(scene, Sparse(), 0)
        gt = ground_truth(scene, Sparse(), 0)
        started = time.perf_counter()
        result = saliency.detect(image, bank, alpha=alpha)
        elapsed += time.perf_counter() - started
        table = count_table(result.map, gt)
        pooled = table if pooled is None else pooled + table
        fs.append(f_measure(result.map, gt))
        pos_scores.append(result.map[gt])
        neg_scores.append(result.map[~gt])
    assert pooled is not None
    curve = pooled.curve()
    pos = np.concatenate(pos_scores)
    neg = np.concatenate(neg_scores)
    labels = np.r_[np.ones(pos.size, bool), np.zeros(neg.size, bool)]
    report = EvalReport(
        curve=curve,
        auc=auc(curve),
        f_measure=float(np.mean(fs)),
        n_images=n_scenes,
        auc_rank=auc_rank(np.concatenate([pos, neg]), labels),
        detect_time_s=elapsed / n_scenes,
    )
    return BenchmarkResult(report, elapsed / n_scenes)
