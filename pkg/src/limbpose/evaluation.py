"""Frame-set evaluation: overlap scores per channel and RMSD per limb.

Estimated poses are compared against ground-truth annotations by
reconstructing binary maps from both through the same target geometry:
discs of radius r for joints, r/2-wide rectangles for connections. DSC and
recall are computed per frame and channel, RMSD per frame and limb, and
each series is summarized by median and interquartile range.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .decoding import PoseEstimate
from .errors import DataFormatError
from .maskgen import connection_detection_mask, joint_detection_mask
from .metrics import aggregate, dsc, limb_rmsd, recall
from .skeleton import (
    LIMBS,
    ConnectionId,
    JointId,
    connection_endpoints,
)
from .types import Annotation


def _joint_mask(x: float, y: float, radius: float, height: int, width: int) -> np.ndarray:
    return joint_detection_mask((x, y), radius, height, width)


def estimate_masks(
    pose: PoseEstimate, radius: float, height: int, width: int
) -> dict[JointId | ConnectionId, np.ndarray]:
    """Binary maps implied by a pose estimate, empty where joints are missing."""
    masks: dict[JointId | ConnectionId, np.ndarray] = {}
    for joint in JointId:
        located = pose.joint(joint)
        if located is None:
            masks[joint] = np.zeros((height, width), dtype=np.uint8)
        else:
            masks[joint] = _joint_mask(located.x, located.y, radius, height, width)
    for conn in ConnectionId:
        a, b = connection_endpoints(conn)
        la, lb = pose.joint(a), pose.joint(b)
        if la is None or lb is None or (la.x == lb.x and la.y == lb.y):
            masks[conn] = np.zeros((height, width), dtype=np.uint8)
        else:
            masks[conn] = connection_detection_mask(
                (la.x, la.y), (lb.x, lb.y), radius, height, width
            )
    return masks


def annotation_masks(
    annotation: Annotation, radius: float
) -> dict[JointId | ConnectionId, np.ndarray]:
    """Ground-truth binary maps; non-visible joints yield empty maps."""
    height, width = annotation.height, annotation.width
    masks: dict[JointId | ConnectionId, np.ndarray] = {}
    for joint in JointId:
        if annotation.visible(joint):
            masks[joint] = _joint_mask(*annotation.point(joint), radius, height, width)
        else:
            masks[joint] = np.zeros((height, width), dtype=np.uint8)
    for conn in ConnectionId:
        a, b = connection_endpoints(conn)
        if annotation.visible(a) and annotation.visible(b):
            masks[conn] = connection_detection_mask(
                annotation.point(a), annotation.point(b), radius, height, width
            )
        else:
            masks[conn] = np.zeros((height, width), dtype=np.uint8)
    return masks


@dataclass
class ChannelStats:
    name: str
    dsc_median: float
    dsc_iqr: float
    rec_median: float
    rec_iqr: float
    frames: int


@dataclass
class LimbStats:
    name: str
    rmsd_median: float
    rmsd_iqr: float
    frames: int


def evaluate_poses(
    poses: Sequence[PoseEstimate],
    annotations: Mapping[tuple[str, int], Annotation],
    radius: float = 6.0,
) -> dict:
    """Evaluate poses against annotations joined on (video, frame).

    Every pose must have a matching annotation; an empty pose set or an
    unmatched key is a data error. Returns a report dict with per-channel
    DSC and recall and per-limb RMSD, each as median and IQR.
    """
    if not poses:
        raise DataFormatError("no poses to evaluate")
    dsc_series: dict[JointId | ConnectionId, list[float]] = {
        ident: [] for ident in (*JointId, *ConnectionId)
    }
    rec_series: dict[JointId | ConnectionId, list[float]] = {
        ident: [] for ident in (*JointId, *ConnectionId)
    }
    rmsd_series: dict[str, list[float]] = {limb.limb_id.value: [] for limb in LIMBS}

    for pose in poses:
        key = (pose.video, pose.frame)
        if key not in annotations:
            raise DataFormatError(f"no annotation for pose {key[0]}/{key[1]}")
        annotation = annotations[key]
        truth = annotation_masks(annotation, radius)
        est = estimate_masks(pose, radius, annotation.height, annotation.width)
        for ident in (*JointId, *ConnectionId):
            dsc_series[ident].append(dsc(est[ident], truth[ident]))
            rec_series[ident].append(recall(est[ident], truth[ident]))
        for limb in LIMBS:
            value = limb_rmsd(pose, annotation, limb)
            if value is not None:
                rmsd_series[limb.limb_id.value].append(value)

    joints = []
    connections = []
    for ident in (*JointId, *ConnectionId):
        d_med, d_iqr = aggregate(dsc_series[ident])
        r_med, r_iqr = aggregate(rec_series[ident])
        stats = ChannelStats(
            name=ident.value,
            dsc_median=d_med,
            dsc_iqr=d_iqr,
            rec_median=r_med,
            rec_iqr=r_iqr,
            frames=len(dsc_series[ident]),
        )
        (joints if isinstance(ident, JointId) else connections).append(stats)

    limbs = []
    for limb in LIMBS:
        series = rmsd_series[limb.limb_id.value]
        if series:
            median, iqr = aggregate(series)
        else:
            median, iqr = float("nan"), float("nan")
        limbs.append(
            LimbStats(
                name=limb.limb_id.value, rmsd_median=median, rmsd_iqr=iqr, frames=len(series)
            )
        )

    return {
        "frames": len(poses),
        "radius": radius,
        "joints": [vars(s) for s in joints],
        "connections": [vars(s) for s in connections],
        "limbs": [vars(s) for s in limbs],
    }


def format_report(report: dict) -> str:
    """Aligned text rendering of an evaluation report."""
    lines = [f"frames evaluated: {report['frames']}  (mask radius {report['radius']})", ""]
    lines.append(f"{'channel':<24}{'DSC med':>9}{'IQR':>8}{'Rec med':>9}{'IQR':>8}")
    for section in ("joints", "connections"):
        for row in report[section]:
            lines.append(
                f"{row['name']:<24}{row['dsc_median']:>9.3f}{row['dsc_iqr']:>8.3f}"
                f"{row['rec_median']:>9.3f}{row['rec_iqr']:>8.3f}"
            )
    lines.append("")
    lines.append(f"{'limb':<24}{'RMSD med':>9}{'IQR':>8}{'frames':>8}")
    for row in report["limbs"]:
        lines.append(
            f"{row['name']:<24}{row['rmsd_median']:>9.3f}{row['rmsd_iqr']:>8.3f}"
            f"{row['frames']:>8d}"
        )
    return "\n".join(lines)
