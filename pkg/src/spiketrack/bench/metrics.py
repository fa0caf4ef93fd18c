"""One-pass evaluation metrics: center-error precision and success AUC."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..head import BBox

SUCCESS_THRESHOLDS = np.linspace(0.0, 1.0, 21)


class MetricError(ValueError):
    pass


def _corners(box) -> np.ndarray:
    if isinstance(box, BBox):
        return np.array(box.corners)
    arr = np.asarray(box, dtype=np.float64)
    return np.array([arr[0] - arr[2] / 2, arr[1] - arr[3] / 2, arr[0] + arr[2] / 2, arr[1] + arr[3] / 2])


def iou(a, b) -> float:
    """Intersection over union of two center-format boxes."""
    ax1, ay1, ax2, ay2 = _corners(a)
    bx1, by1, bx2, by2 = _corners(b)
    iw = max(0.0, min(ax2, bx2) - max(ax1, bx1))
    ih = max(0.0, min(ay2, by2) - max(ay1, by1))
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    return inter / union if union > 0 else 0.0


def center_error(a, b) -> float:
    if isinstance(a, BBox):
        acx, acy = a.cx, a.cy
    else:
        acx, acy = float(a[0]), float(a[1])
    if isinstance(b, BBox):
        bcx, bcy = b.cx, b.cy
    else:
        bcx, bcy = float(b[0]), float(b[1])
    return float(np.hypot(acx - bcx, acy - bcy))


def precision_score(cle_list, threshold: float = 20.0) -> float:
    """Fraction of frames with center location error <= threshold (px)."""
    cle = np.asarray(list(cle_list), dtype=np.float64)
    if cle.size == 0:
        raise MetricError("precision_score: empty error list")
    return float(np.mean(cle <= threshold))


def success_auc(iou_list) -> float:
    """Mean over 21 thresholds t in {0, 0.05, ..., 1} of the fraction IoU > t.

    The comparison is strict, so a perfect run scores 20/21, not 1.
    """
    ious = np.asarray(list(iou_list), dtype=np.float64)
    if ious.size == 0:
        raise MetricError("success_auc: empty IoU list")
    rates = [(ious > t).mean() for t in SUCCESS_THRESHOLDS]
    return float(np.mean(rates))


@dataclass
class EvalResult:
    ious: list[float]
    center_errors: list[float]
    precision_at_20: float
    success_auc: float

    def to_dict(self) -> dict:
        return {
            "precision_at_20": self.precision_at_20,
            "success_auc": self.success_auc,
            "frames": len(self.ious),
            "mean_iou": float(np.mean(self.ious)),
            "mean_center_error": float(np.mean(self.center_errors)),
        }


def evaluate_boxes(pred_boxes, gt_boxes, precision_threshold: float = 20.0) -> EvalResult:
    """Frame-wise overlap/center-error metrics for one tracked sequence."""
    preds = list(pred_boxes)
    gts = list(gt_boxes)
    if len(preds) != len(gts):
        raise MetricError(f"evaluate_boxes: {len(preds)} predictions vs {len(gts)} truths")
    if not preds:
        raise MetricError("evaluate_boxes: empty sequence")
    ious = [iou(p, g) for p, g in zip(preds, gts)]
    cles = [center_error(p, g) for p, g in zip(preds, gts)]
    return EvalResult(
        ious=ious,
        center_errors=cles,
        precision_at_20=precision_score(cles, precision_threshold),
        success_auc=success_auc(ious),
    )
