"""Evaluation metrics: overlap scores on binary maps and per-limb RMSD."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ShapeMismatchError
from .skeleton import Limb, LimbId, limb as limb_by_id
from .types import Annotation
from .decoding import PoseEstimate


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int

    @property
    def tn_free_total(self) -> int:
        return self.tp + self.fp + self.fn


def _as_binary(arr: np.ndarray, name: str) -> np.ndarray:
    out = np.asarray(arr)
    if out.dtype != bool:
        values = np.unique(out)
        if not np.isin(values, (0, 1)).all():
            raise ValueError(f"{name} must be binary, found values {values[:5]}")
        out = out.astype(bool)
    return out


def confusion(pred: np.ndarray, truth: np.ndarray) -> ConfusionCounts:
    """Pixel-wise confusion counts of two binary maps of equal shape."""
    p = _as_binary(pred, "pred")
    t = _as_binary(truth, "truth")
    if p.shape != t.shape:
        raise ShapeMismatchError(f"shape mismatch: pred {p.shape} vs truth {t.shape}")
    tp = int(np.count_nonzero(p & t))
    fp = int(np.count_nonzero(p & ~t))
    fn = int(np.count_nonzero(~p & t))
    return ConfusionCounts(tp, fp, fn)


def dsc(pred: np.ndarray, truth: np.ndarray) -> float:
    """Dice overlap 2 TP / (2 TP + FP + FN); two empty maps score 1."""
    c = confusion(pred, truth)
    if c.tn_free_total == 0:
        return 1.0
    return 2.0 * c.tp / (2.0 * c.tp + c.fp + c.fn)


def recall(pred: np.ndarray, truth: np.ndarray) -> float:
    """TP / (TP + FN); an empty ground truth scores 1."""
    c = confusion(pred, truth)
    if c.tp + c.fn == 0:
        return 1.0
    return c.tp / (c.tp + c.fn)


def binarize(map2d: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Threshold a real-valued map at >= threshold into a uint8 mask."""
    return (np.asarray(map2d) >= threshold).astype(np.uint8)


def limb_rmsd(
    estimate: PoseEstimate,
    annotation: Annotation,
    limb: Limb | LimbId,
    penalty: float | None = None,
) -> float | None:
    """Root-mean-square distance between estimated and annotated joints.

    Only ground-truth-visible joints of the limb enter the mean. A visible
    joint the estimate failed to recover contributes the penalty distance,
    which defaults to the image diagonal. Returns None when the limb has
    no visible joints, leaving the frame out of that limb's statistics.
    """
    if isinstance(limb, LimbId):
        limb = limb_by_id(limb)
    if penalty is None:
        penalty = math.hypot(annotation.width, annotation.height)
    squared: list[float] = []
    for joint in limb.joints:
        if not annotation.visible(joint):
            continue
        gx, gy = annotation.point(joint)
        located = estimate.joint(joint)
        if located is None:
            squared.append(float(penalty) ** 2)
        else:
            squared.append((located.x - gx) ** 2 + (located.y - gy) ** 2)
    if not squared:
        return None
    return math.sqrt(sum(squared) / len(squared))


def aggregate(values: Sequence[float]) -> tuple[float, float]:
    """Median and interquartile range of a non-empty sample."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("cannot aggregate an empty sample")
    median = float(np.median(arr))
    q75, q25 = np.percentile(arr, [75.0, 25.0])
    return median, float(q75 - q25)
