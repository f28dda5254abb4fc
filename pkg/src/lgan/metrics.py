"""Segmentation quality (IOU, Dice, 3D Dice) and shape similarity (Hausdorff)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from .errors import EmptyMask, EmptyReport, ShapeError

METRICS = ("iou", "dice", "hausdorff")


def _pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x, y = np.asarray(x).astype(bool), np.asarray(y).astype(bool)
    if x.shape != y.shape:
        raise ShapeError(f"mask shapes differ: {x.shape} vs {y.shape}")
    return x, y


def iou(x, y) -> float:
    """|X & Y| / |X | Y|; two empty masks agree perfectly (1.0)."""
    x, y = _pair(x, y)
    union = np.count_nonzero(x | y)
    if union == 0:
        return 1.0
    return np.count_nonzero(x & y) / union


def dice(x, y) -> float:
    x, y = _pair(x, y)
    total = np.count_nonzero(x) + np.count_nonzero(y)
    if total == 0:
        return 1.0
    return 2.0 * np.count_nonzero(x & y) / total


def dice_3d(pred_masks: Sequence[np.ndarray], gt_masks: Sequence[np.ndarray]) -> float:
    """Dice over the pooled voxels of every slice in one scan."""
    if len(pred_masks) != len(gt_masks) or not len(gt_masks):
        raise ShapeError(f"scan has {len(pred_masks)} predicted and {len(gt_masks)} true slices")
    try:
        pred, gt = np.stack(pred_masks), np.stack(gt_masks)
    except ValueError as exc:
        raise ShapeError(f"slices within a scan differ in shape: {exc}") from None
    return dice(pred, gt)


def _directed(src: np.ndarray, dst: np.ndarray) -> float:
    # distance from every pixel to the nearest dst pixel, read off at src pixels
    dist = ndimage.distance_transform_edt(~dst)
    return float(dist[src].max())


def hausdorff(m, g) -> float:
    """Symmetric Hausdorff distance between foreground pixel sets, in pixels."""
    m, g = _pair(m, g)
    if not m.any() or not g.any():
        raise EmptyMask("Hausdorff distance is undefined for an empty mask")
    return max(_directed(m, g), _directed(g, m))


@dataclass(frozen=True)
class SliceMetrics:
    scan_id: str
    slice_index: int
    iou: float
    dice: float
    hausdorff: float | None  # None when either mask was empty

    @classmethod
    def compute(cls, scan_id: str, slice_index: int, pred, gt) -> "SliceMetrics":
        try:
            hd = hausdorff(pred, gt)
        except EmptyMask:
            hd = None
        return cls(scan_id, slice_index, iou(pred, gt), dice(pred, gt), hd)


@dataclass(frozen=True)
class Summary:
    mean: float | None
    median: float | None
    count: int


def summarize(values: Iterable[float]) -> Summary:
    vals = np.asarray(list(values), dtype=np.float64)
    if vals.size == 0:
        raise EmptyReport("no values to aggregate")
    return Summary(float(vals.mean()), float(np.median(vals)), int(vals.size))


@dataclass
class MetricReport:
    per_slice: list[SliceMetrics]
    per_scan_dice_3d: list[tuple[str, float]] = field(default_factory=list)
    aggregates: dict[str, Summary] = field(default_factory=dict)
    hausdorff_flagged: int = 0

    def mean(self, metric: str) -> float | None:
        return self.aggregates[metric].mean

    def median(self, metric: str) -> float | None:
        return self.aggregates[metric].median


def aggregate(rows: Sequence[SliceMetrics], per_scan_dice_3d: Sequence[tuple[str, float]] = ()) -> MetricReport:
    rows = list(rows)
    if not rows:
        raise EmptyReport("cannot aggregate an empty set of slices")
    hd = [r.hausdorff for r in rows if r.hausdorff is not None]
    aggs = {
        "iou": summarize(r.iou for r in rows),
        "dice": summarize(r.dice for r in rows),
        "hausdorff": summarize(hd) if hd else Summary(None, None, 0),
    }
    scans = list(per_scan_dice_3d)
    if scans:
        aggs["dice_3d"] = summarize(d for _, d in scans)
    return MetricReport(rows, scans, aggs, hausdorff_flagged=len(rows) - len(hd))


def evaluate_masks(
    preds: Sequence[np.ndarray], gts: Sequence[np.ndarray], keys: Sequence[tuple[str, int]]
) -> MetricReport:
    """Slice metrics for every (pred, gt) pair plus one pooled Dice per scan."""
    if not (len(preds) == len(gts) == len(keys)):
        raise ShapeError("predictions, ground truth and keys differ in length")
    rows = [SliceMetrics.compute(s, i, p, g) for (s, i), p, g in zip(keys, preds, gts)]
    by_scan: dict[str, list[tuple[int, np.ndarray, np.ndarray]]] = {}
    for (s, i), p, g in zip(keys, preds, gts):
        by_scan.setdefault(s, []).append((i, p, g))
    scans = []
    for s, items in by_scan.items():
        items.sort(key=lambda t: t[0])
        scans.append((s, dice_3d([p for _, p, _ in items], [g for _, _, g in items])))
    return aggregate(rows, scans)


def fmt(x: float | None, digits: int = 4) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "n/a"
    return f"{x:.{digits}f}"
