"""Decode confidence-map stacks into limb poses.

The decoder runs three stages per frame: non-maximum suppression over each
joint channel to propose candidate coordinates, a line-integral score over
each connection channel for every candidate pair, and an exact
maximum-weight bipartite matching to pick the pairing. Matched pairs are
then assembled into the four limb chains; when the two connections of a
limb disagree on the middle joint, the higher-scoring connection wins and
the other is re-matched against the remaining candidates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.ndimage import maximum_filter
from scipy.optimize import linear_sum_assignment

from .errors import DegenerateConnectionError
from .skeleton import (
    LIMBS,
    ConnectionId,
    JointId,
    LimbId,
    connection_endpoints,
)
from .types import MapStack


@dataclass(frozen=True)
class JointCandidate:
    joint: JointId
    x: float
    y: float
    score: float


@dataclass(frozen=True)
class ConnectionMatch:
    a: JointCandidate
    b: JointCandidate
    score: float


@dataclass(frozen=True)
class LocatedJoint:
    x: float
    y: float
    score: float


@dataclass
class LimbPose:
    """One decoded limb: located joints keyed by JointId (None when the
    joint could not be recovered) and the scores of its two connections
    (None when the connection was not linked)."""

    joints: dict[JointId, LocatedJoint | None]
    connection_scores: dict[ConnectionId, float | None]
    confidence: float = 0.0


@dataclass
class PoseEstimate:
    video: str
    frame: int
    limbs: dict[LimbId, LimbPose]

    def joint(self, joint: JointId) -> LocatedJoint | None:
        for pose in self.limbs.values():
            if joint in pose.joints:
                return pose.joints[joint]
        return None

    def connection_score(self, conn: ConnectionId) -> float | None:
        for pose in self.limbs.values():
            if conn in pose.connection_scores:
                return pose.connection_scores[conn]
        return None


@dataclass
class DecoderConfig:
    """Decoder thresholds.

    threshold: minimum peak value for a joint candidate.
    window: odd side length of the NMS neighbourhood.
    min_dist: candidates closer than this to a stronger one are dropped.
    pair_threshold: minimum line-integral score for an admissible pair.
    num_samples: samples per line integral; None picks one per pixel of
        segment length (at least 2).
    integral_mode: "mean" scores a pair by the mean sampled value, "sum"
        by mean times segment length.
    """

    threshold: float = 0.3
    window: int = 5
    min_dist: float = 6.0
    pair_threshold: float = 0.2
    num_samples: int | None = None
    integral_mode: str = "mean"

    def __post_init__(self) -> None:
        if self.window < 3 or self.window % 2 == 0:
            raise ValueError(f"window must be odd and >= 3, got {self.window}")
        if self.min_dist < 0:
            raise ValueError("min_dist must be non-negative")
        if self.num_samples is not None and self.num_samples < 2:
            raise ValueError("num_samples must be at least 2")
        if self.integral_mode not in ("mean", "sum"):
            raise ValueError(f"integral_mode must be 'mean' or 'sum', got {self.integral_mode}")


def nms(
    map2d: np.ndarray,
    joint: JointId,
    threshold: float = 0.3,
    window: int = 5,
    min_dist: float = 6.0,
) -> list[JointCandidate]:
    """Strict local maxima of one joint channel, deduplicated by distance.

    A pixel is a peak when it strictly exceeds every other pixel of its
    window x window neighbourhood (borders compare against -inf outside
    the map) and its value is at least threshold. Peaks are taken in
    descending score order and any later peak within min_dist of an
    accepted one is suppressed. Returned candidates are sorted by score,
    ties broken by (y, x) for determinism.
    """
    if window < 3 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 3, got {window}")
    arr = np.asarray(map2d, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"nms expects a 2-D map, got shape {arr.shape}")
    footprint = np.ones((window, window), dtype=bool)
    footprint[window // 2, window // 2] = False
    neighbours = maximum_filter(arr, footprint=footprint, mode="constant", cval=-np.inf)
    peaks = (arr > neighbours) & (arr >= threshold)
    ys, xs = np.nonzero(peaks)
    if ys.size == 0:
        return []
    scores = arr[ys, xs]
    order = np.lexsort((xs, ys, -scores))
    kept: list[JointCandidate] = []
    min_d2 = float(min_dist) * float(min_dist)
    for i in order:
        x, y, s = float(xs[i]), float(ys[i]), float(scores[i])
        if all((x - k.x) ** 2 + (y - k.y) ** 2 >= min_d2 for k in kept):
            kept.append(JointCandidate(joint, x, y, s))
    return kept


def _bilinear(map2d: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Bilinear samples of a 2-D map; coordinates are clamped to the border."""
    h, w = map2d.shape
    xc = np.clip(xs, 0.0, w - 1.0)
    yc = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(xc).astype(np.intp)
    y0 = np.floor(yc).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xc - x0
    fy = yc - y0
    top = map2d[y0, x0] * (1.0 - fx) + map2d[y0, x1] * fx
    bottom = map2d[y1, x0] * (1.0 - fx) + map2d[y1, x1] * fx
    return top * (1.0 - fy) + bottom * fy


def default_sample_count(p1: tuple[float, float], p2: tuple[float, float]) -> int:
    """One sample per pixel of segment length, never fewer than 2."""
    length = math.hypot(p2[0] - p1[0], p2[1] - p1[1])
    return max(2, math.ceil(length))


def line_integral(
    map2d: np.ndarray,
    p1: tuple[float, float],
    p2: tuple[float, float],
    num_samples: int | None = None,
    mode: str = "mean",
) -> float:
    """Score a candidate pair by sampling a connection map along p1-p2.

    Samples num_samples points spaced evenly from p1 to p2 inclusive,
    reading the map bilinearly. "mean" returns the average sample, "sum"
    the average scaled by the segment length.
    """
    if p1[0] == p2[0] and p1[1] == p2[1]:
        raise DegenerateConnectionError(f"line integral endpoints coincide at {p1}")
    if mode not in ("mean", "sum"):
        raise ValueError(f"mode must be 'mean' or 'sum', got {mode}")
    if num_samples is None:
        num_samples = default_sample_count(p1, p2)
    if num_samples < 2:
        raise ValueError(f"num_samples must be at least 2, got {num_samples}")
    arr = np.asarray(map2d, dtype=np.float64)
    xs = np.linspace(p1[0], p2[0], num_samples)
    ys = np.linspace(p1[1], p2[1], num_samples)
    mean = float(_bilinear(arr, xs, ys).mean())
    if mode == "sum":
        return mean * math.hypot(p2[0] - p1[0], p2[1] - p1[1])
    return mean


def match_scores(
    score_matrix: np.ndarray, pair_threshold: float = 0.2
) -> list[tuple[int, int, float]]:
    """Exact maximum-weight bipartite matching on a score matrix.

    Entry (i, j) scores pairing candidate i of the first endpoint with
    candidate j of the second. Pairs below pair_threshold are inadmissible.
    Candidates may stay unmatched; among all one-to-one sets of admissible
    pairs, the returned set maximizes the total score. Implemented as a
    linear assignment over the matrix padded with zero-cost dummy partners,
    so leaving a candidate out is always available to the optimizer.
    Returns (i, j, score) triples sorted by descending score.
    """
    s = np.asarray(score_matrix, dtype=np.float64)
    if s.ndim != 2:
        raise ValueError(f"score matrix must be 2-D, got shape {s.shape}")
    n, m = s.shape
    if n == 0 or m == 0:
        return []
    admissible = s >= pair_threshold
    if not admissible.any():
        return []
    big = 1e6 + 1e3 * float(np.abs(s).max())
    size = n + m
    cost = np.full((size, size), big, dtype=np.float64)
    cost[:n, :m] = np.where(admissible, -s, big)
    cost[n:, :m] = big
    cost[:n, m:] = big
    for i in range(n):
        cost[i, m + i] = 0.0  # candidate i stays unmatched
    for j in range(m):
        cost[n + j, j] = 0.0  # candidate j stays unmatched
    cost[n:, m:] = 0.0
    rows, cols = linear_sum_assignment(cost)
    pairs = [
        (int(i), int(j), float(s[i, j]))
        for i, j in zip(rows, cols)
        if i < n and j < m and admissible[i, j]
    ]
    pairs.sort(key=lambda t: (-t[2], t[0], t[1]))
    return pairs


def match_connection(
    candidates_a: Sequence[JointCandidate],
    candidates_b: Sequence[JointCandidate],
    connection_map: np.ndarray,
    num_samples: int | None = None,
    pair_threshold: float = 0.2,
    mode: str = "mean",
) -> list[ConnectionMatch]:
    """Optimally pair candidates of the two endpoint joints of a connection.

    Every candidate pair is scored by a line integral over the connection
    map; pairs of coincident candidates score -inf and can never match.
    """
    if not candidates_a or not candidates_b:
        return []
    s = np.full((len(candidates_a), len(candidates_b)), -np.inf)
    for i, a in enumerate(candidates_a):
        for j, b in enumerate(candidates_b):
            if a.x == b.x and a.y == b.y:
                continue
            s[i, j] = line_integral(
                connection_map, (a.x, a.y), (b.x, b.y), num_samples=num_samples, mode=mode
            )
    pairs = match_scores(s, pair_threshold=pair_threshold)
    return [ConnectionMatch(candidates_a[i], candidates_b[j], score) for i, j, score in pairs]


RescoreFn = Callable[[ConnectionId, JointCandidate, JointCandidate], float]


def _best_rematch(
    conn: ConnectionId,
    fixed: JointCandidate,
    others: Sequence[JointCandidate],
    fixed_side: str,
    rescore: RescoreFn,
    pair_threshold: float,
) -> ConnectionMatch | None:
    best: ConnectionMatch | None = None
    for other in others:
        if other.x == fixed.x and other.y == fixed.y:
            continue
        a, b = (fixed, other) if fixed_side == "a" else (other, fixed)
        score = rescore(conn, a, b)
        if score < pair_threshold:
            continue
        if best is None or score > best.score:
            best = ConnectionMatch(a, b, score)
    return best


def _located(candidate: JointCandidate | None) -> LocatedJoint | None:
    if candidate is None:
        return None
    return LocatedJoint(candidate.x, candidate.y, candidate.score)


def assemble_pose(
    candidates: Mapping[JointId, Sequence[JointCandidate]],
    matches: Mapping[ConnectionId, Sequence[ConnectionMatch]],
    rescore: RescoreFn,
    pair_threshold: float = 0.2,
    video: str = "",
    frame: int = 0,
) -> PoseEstimate:
    """Assemble matched pairs into the four limb chains.

    Each limb takes the best pair of each of its two connections. If those
    pairs disagree on the shared middle joint, the higher-scoring
    connection keeps its assignment and the other connection is re-scored
    against the remaining candidates with the middle joint fixed. Joint
    slots still empty afterwards fall back to the highest-scoring bare
    candidate. A limb's confidence is the mean score of its present joints
    and connections.
    """
    limbs: dict[LimbId, LimbPose] = {}
    for limb in LIMBS:
        proximal, middle, distal = limb.joints
        conn1, conn2 = limb.connections
        best1 = next(iter(matches.get(conn1, ())), None)
        best2 = next(iter(matches.get(conn2, ())), None)

        if best1 is not None and best2 is not None and best1.b != best2.a:
            if best1.score >= best2.score:
                best2 = _best_rematch(
                    conn2, best1.b, candidates.get(distal, ()), "a", rescore, pair_threshold
                )
            else:
                best1 = _best_rematch(
                    conn1, best2.a, candidates.get(proximal, ()), "b", rescore, pair_threshold
                )

        slots: dict[JointId, JointCandidate | None] = {proximal: None, middle: None, distal: None}
        if best1 is not None:
            slots[proximal] = best1.a
            slots[middle] = best1.b
        if best2 is not None:
            slots[middle] = best2.a
            slots[distal] = best2.b
        for joint in limb.joints:
            if slots[joint] is None:
                pool = candidates.get(joint, ())
                if pool:
                    slots[joint] = max(pool, key=lambda c: c.score)

        scores = {
            conn1: best1.score if best1 is not None else None,
            conn2: best2.score if best2 is not None else None,
        }
        present = [c.score for c in slots.values() if c is not None]
        present += [s for s in scores.values() if s is not None]
        confidence = float(np.mean(present)) if present else 0.0
        limbs[limb.limb_id] = LimbPose(
            joints={j: _located(slots[j]) for j in limb.joints},
            connection_scores=scores,
            confidence=confidence,
        )
    return PoseEstimate(video=video, frame=frame, limbs=limbs)


def extract_candidates(
    stack: MapStack, config: DecoderConfig | None = None
) -> dict[JointId, list[JointCandidate]]:
    cfg = config or DecoderConfig()
    return {
        joint: nms(
            stack.channel(joint),
            joint,
            threshold=cfg.threshold,
            window=cfg.window,
            min_dist=cfg.min_dist,
        )
        for joint in JointId
    }


def decode_frame(
    stack: MapStack,
    config: DecoderConfig | None = None,
    video: str = "",
    frame: int = 0,
) -> PoseEstimate:
    """Full decoding of one 20-channel map stack into a pose estimate."""
    cfg = config or DecoderConfig()
    candidates = extract_candidates(stack, cfg)
    matches: dict[ConnectionId, list[ConnectionMatch]] = {}
    for conn in ConnectionId:
        a, b = connection_endpoints(conn)
        matches[conn] = match_connection(
            candidates[a],
            candidates[b],
            stack.channel(conn),
            num_samples=cfg.num_samples,
            pair_threshold=cfg.pair_threshold,
            mode=cfg.integral_mode,
        )

    def rescore(conn: ConnectionId, a: JointCandidate, b: JointCandidate) -> float:
        return line_integral(
            stack.channel(conn),
            (a.x, a.y),
            (b.x, b.y),
            num_samples=cfg.num_samples,
            mode=cfg.integral_mode,
        )

    return assemble_pose(
        candidates,
        matches,
        rescore,
        pair_threshold=cfg.pair_threshold,
        video=video,
        frame=frame,
    )
