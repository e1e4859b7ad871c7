"""Synthetic depth scenes of an articulated infant-like figure.

Each frame places an elliptical torso on a farther background plane and
grows four limb chains from its corners; limbs render as capsules slightly
nearer to the camera than the torso. Optional circular occluders cover
limb ends to exercise the occlusion paths, and Gaussian sensor noise is
added in millimetres before normalization. Every frame is generated from
its own deterministic RNG stream keyed by (seed, frame index), so datasets
are reproducible frame by frame and trivially parallelizable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .skeleton import (
    ConnectionId,
    JointId,
    connection_endpoints,
)
from .types import Annotation, DepthFrame, JointAnnotation, Visibility

Range = tuple[float, float]

SCALE_FLOOR = 0.5
SCALE_CEIL = 1.5


@dataclass(frozen=True)
class SceneParams:
    """Sampling ranges and rendering constants for synthetic scenes.

    Ranges are (low, high) pairs sampled uniformly per frame. Lengths and
    torso half-extents are in pixels at scale 1 and multiply by the drawn
    body scale; angles are radians, with 0 pointing away from the body
    horizontally and pi/2 pointing down the image.
    """

    seed: int = 0
    width: int = 128
    height: int = 96
    torso_center_x: Range = (54.0, 74.0)
    torso_center_y: Range = (40.0, 54.0)
    torso_half_width: Range = (13.0, 18.0)
    torso_half_height: Range = (17.0, 24.0)
    upper_arm_length: Range = (13.0, 19.0)
    forearm_length: Range = (11.0, 17.0)
    thigh_length: Range = (14.0, 20.0)
    shin_length: Range = (12.0, 18.0)
    arm_base_angle: Range = (-0.7, 1.2)
    arm_bend_angle: Range = (-1.0, 1.0)
    leg_base_angle: Range = (0.5, 1.25)
    leg_bend_angle: Range = (-0.7, 0.7)
    scale: Range = (0.7, 1.25)
    noise_sigma_mm: float = 4.0
    occluder_prob: float = 0.05
    background_depth_mm: float = 1100.0
    torso_elevation_mm: float = 250.0
    limb_elevation_mm: float = 300.0
    occluder_elevation_mm: float = 380.0
    limb_radius_px: float = 3.0
    occluder_radius_px: float = 7.0
    max_range_mm: float = 4000.0

    def __post_init__(self) -> None:
        for name in (
            "torso_center_x",
            "torso_center_y",
            "torso_half_width",
            "torso_half_height",
            "upper_arm_length",
            "forearm_length",
            "thigh_length",
            "shin_length",
            "arm_base_angle",
            "arm_bend_angle",
            "leg_base_angle",
            "leg_bend_angle",
            "scale",
        ):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} range ({lo}, {hi}) has low > high")
        for name in ("torso_half_width", "torso_half_height", "upper_arm_length",
                     "forearm_length", "thigh_length", "shin_length"):
            if getattr(self, name)[0] <= 0:
                raise ValueError(f"{name} must be positive")
        if not (SCALE_FLOOR <= self.scale[0] and self.scale[1] <= SCALE_CEIL):
            raise ValueError(f"scale range must lie within [{SCALE_FLOOR}, {SCALE_CEIL}]")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("scene resolution must be positive")
        if not 0.0 <= self.occluder_prob <= 1.0:
            raise ValueError("occluder_prob must lie in [0, 1]")
        if self.noise_sigma_mm < 0:
            raise ValueError("noise_sigma_mm must be non-negative")
        if self.max_range_mm <= 0 or self.background_depth_mm <= 0:
            raise ValueError("depths must be positive")
        for name in ("torso_elevation_mm", "limb_elevation_mm", "occluder_elevation_mm"):
            if not 0 < getattr(self, name) < self.background_depth_mm:
                raise ValueError(f"{name} must lie between 0 and the background depth")
        if self.limb_radius_px <= 0 or self.occluder_radius_px <= 0:
            raise ValueError("render radii must be positive")


@dataclass(frozen=True)
class SkeletonSample:
    """One drawn skeleton: per-joint annotations plus the scale and torso
    geometry needed to render it."""

    joints: dict[JointId, JointAnnotation]
    scale: float
    torso: tuple[float, float, float, float]  # cx, cy, half_width, half_height


@dataclass(frozen=True)
class SyntheticFrame:
    frame: DepthFrame
    annotation: Annotation
    skeleton: SkeletonSample
    seed: int
    index: int
    params: SceneParams

    @property
    def key(self) -> str:
        return f"{self.annotation.video}/{self.annotation.frame}"


_ARMS = (
    (-1.0, JointId.RIGHT_SHOULDER, JointId.RIGHT_ELBOW, JointId.RIGHT_WRIST),
    (1.0, JointId.LEFT_SHOULDER, JointId.LEFT_ELBOW, JointId.LEFT_WRIST),
)
_LEGS = (
    (-1.0, JointId.RIGHT_HIP, JointId.RIGHT_KNEE, JointId.RIGHT_ANKLE),
    (1.0, JointId.LEFT_HIP, JointId.LEFT_KNEE, JointId.LEFT_ANKLE),
)
_LIMB_ENDS = (JointId.RIGHT_WRIST, JointId.LEFT_WRIST, JointId.RIGHT_ANKLE, JointId.LEFT_ANKLE)


def sample_skeleton(params: SceneParams, rng: np.random.Generator) -> SkeletonSample:
    """Draw one skeleton. The draw sequence is fixed, so two parameter sets
    differing only in a range produce aligned draws for everything else;
    all inter-joint distances scale linearly with the drawn body scale."""
    s = rng.uniform(*params.scale)
    cx = rng.uniform(*params.torso_center_x)
    cy = rng.uniform(*params.torso_center_y)
    hw = s * rng.uniform(*params.torso_half_width)
    hh = s * rng.uniform(*params.torso_half_height)

    points: dict[JointId, tuple[float, float]] = {
        JointId.RIGHT_SHOULDER: (cx - 0.9 * hw, cy - 0.8 * hh),
        JointId.LEFT_SHOULDER: (cx + 0.9 * hw, cy - 0.8 * hh),
        JointId.RIGHT_HIP: (cx - 0.55 * hw, cy + 0.85 * hh),
        JointId.LEFT_HIP: (cx + 0.55 * hw, cy + 0.85 * hh),
    }

    def grow(root: JointId, side: float, base_range: Range, bend_range: Range,
             first_range: Range, second_range: Range) -> tuple[tuple[float, float], tuple[float, float]]:
        base = rng.uniform(*base_range)
        bend = rng.uniform(*bend_range)
        first = s * rng.uniform(*first_range)
        second = s * rng.uniform(*second_range)
        rx, ry = points[root]
        mx = rx + side * first * math.cos(base)
        my = ry + first * math.sin(base)
        ex = mx + side * second * math.cos(base + bend)
        ey = my + second * math.sin(base + bend)
        return (mx, my), (ex, ey)

    for side, shoulder, elbow, wrist in _ARMS:
        points[elbow], points[wrist] = grow(
            shoulder, side, params.arm_base_angle, params.arm_bend_angle,
            params.upper_arm_length, params.forearm_length,
        )
    for side, hip, knee, ankle in _LEGS:
        points[knee], points[ankle] = grow(
            hip, side, params.leg_base_angle, params.leg_bend_angle,
            params.thigh_length, params.shin_length,
        )

    visibility: dict[JointId, Visibility] = {}
    for joint in JointId:
        x, y = points[joint]
        in_frame = 0.0 <= x < params.width and 0.0 <= y < params.height
        visibility[joint] = Visibility.VISIBLE if in_frame else Visibility.OUT_OF_FRAME

    # Occlusion draws always consume RNG so variants stay stream-aligned.
    for joint in _LIMB_ENDS:
        u = rng.uniform()
        if u < params.occluder_prob and visibility[joint] is Visibility.VISIBLE:
            visibility[joint] = Visibility.OCCLUDED

    joints = {
        joint: JointAnnotation(points[joint][0], points[joint][1], visibility[joint])
        for joint in JointId
    }
    return SkeletonSample(joints=joints, scale=s, torso=(cx, cy, hw, hh))


def _grids(height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    ys = np.arange(height, dtype=np.float64)[:, None]
    xs = np.arange(width, dtype=np.float64)[None, :]
    return xs, ys


def _capsule_mask(
    p1: tuple[float, float], p2: tuple[float, float], radius: float, height: int, width: int
) -> np.ndarray:
    """Pixels within radius of the segment p1-p2 (round caps)."""
    xs, ys = _grids(height, width)
    dx = p2[0] - p1[0]
    dy = p2[1] - p1[1]
    l2 = dx * dx + dy * dy
    if l2 == 0.0:
        d2 = (xs - p1[0]) ** 2 + (ys - p1[1]) ** 2
        return d2 <= radius * radius
    t = np.clip(((xs - p1[0]) * dx + (ys - p1[1]) * dy) / l2, 0.0, 1.0)
    px = p1[0] + t * dx
    py = p1[1] + t * dy
    d2 = (xs - px) ** 2 + (ys - py) ** 2
    return d2 <= radius * radius


def connection_capsules(
    skeleton: SkeletonSample, params: SceneParams
) -> dict[ConnectionId, np.ndarray]:
    """Render masks of all eight limb capsules (ignoring occluders)."""
    radius = params.limb_radius_px * skeleton.scale
    masks = {}
    for conn in ConnectionId:
        a, b = connection_endpoints(conn)
        pa, pb = skeleton.joints[a], skeleton.joints[b]
        masks[conn] = _capsule_mask(
            (pa.x, pa.y), (pb.x, pb.y), radius, params.height, params.width
        )
    return masks


def render_depth(
    skeleton: SkeletonSample,
    params: SceneParams,
    rng: np.random.Generator,
    video: str = "synthetic",
    frame: int = 0,
) -> DepthFrame:
    """Render a skeleton into a normalized depth frame.

    Surfaces combine by taking the nearest depth per pixel: background,
    torso ellipse, limb capsules, then occluder discs over occluded limb
    ends. With noise_sigma_mm = 0 the output is piecewise constant.
    """
    h, w = params.height, params.width
    xs, ys = _grids(h, w)
    depth = np.full((h, w), params.background_depth_mm, dtype=np.float64)

    cx, cy, hw, hh = skeleton.torso
    ellipse = ((xs - cx) / hw) ** 2 + ((ys - cy) / hh) ** 2 <= 1.0
    depth[ellipse] = params.background_depth_mm - params.torso_elevation_mm

    limb_depth = params.background_depth_mm - params.limb_elevation_mm
    for mask in connection_capsules(skeleton, params).values():
        depth[mask] = np.minimum(depth[mask], limb_depth)

    occluder_depth = params.background_depth_mm - params.occluder_elevation_mm
    occluder_radius = params.occluder_radius_px * skeleton.scale
    for joint, ann in skeleton.joints.items():
        if ann.visibility is Visibility.OCCLUDED:
            disc = (xs - ann.x) ** 2 + (ys - ann.y) ** 2 <= occluder_radius * occluder_radius
            depth[disc] = np.minimum(depth[disc], occluder_depth)

    depth = depth + params.noise_sigma_mm * rng.standard_normal((h, w))
    normalized = np.clip(depth / params.max_range_mm, 0.0, 1.0).astype(np.float32)
    return DepthFrame(normalized, max_range_mm=params.max_range_mm, video=video, frame=frame)


def generate_frame(
    params: SceneParams, seed: int, index: int, video: str = "synthetic"
) -> SyntheticFrame:
    """Generate frame number `index` of the stream keyed by `seed`."""
    if seed < 0 or index < 0:
        raise ValueError("seed and index must be non-negative")
    rng = np.random.default_rng([seed, index])
    skeleton = sample_skeleton(params, rng)
    frame = render_depth(skeleton, params, rng, video=video, frame=index)
    annotation = Annotation(
        video=video,
        frame=index,
        width=params.width,
        height=params.height,
        joints=dict(skeleton.joints),
    )
    return SyntheticFrame(
        frame=frame,
        annotation=annotation,
        skeleton=skeleton,
        seed=seed,
        index=index,
        params=params,
    )


def generate_dataset(
    n_frames: int,
    params: SceneParams,
    seed: int | None = None,
    video: str = "synthetic",
) -> list[SyntheticFrame]:
    """Generate a reproducible sequence of frames for one video."""
    if n_frames < 1:
        raise ValueError(f"n_frames must be at least 1, got {n_frames}")
    if seed is None:
        seed = params.seed
    return [generate_frame(params, seed, index, video=video) for index in range(n_frames)]


def patient_params(base: SceneParams, rng: np.random.Generator) -> SceneParams:
    """Draw a per-patient variation of the base parameters.

    Each synthetic patient gets its own body scale band and torso position
    band, standing in for a different infant and camera placement."""
    s0 = rng.uniform(max(base.scale[0], 0.7), min(base.scale[1], 1.25))
    scale = (max(base.scale[0], s0 - 0.06), min(base.scale[1], s0 + 0.06))
    cx0 = rng.uniform(*base.torso_center_x)
    cy0 = rng.uniform(*base.torso_center_y)
    torso_x = (max(base.torso_center_x[0], cx0 - 4.0), min(base.torso_center_x[1], cx0 + 4.0))
    torso_y = (max(base.torso_center_y[0], cy0 - 4.0), min(base.torso_center_y[1], cy0 + 4.0))
    return replace(base, scale=scale, torso_center_x=torso_x, torso_center_y=torso_y)


def generate_patient_set(
    base_params: SceneParams,
    n_patients: int = 4,
    frames_per_patient: int = 540,
    seed: int | None = None,
) -> tuple[list[SyntheticFrame], dict[str, SceneParams]]:
    """Generate one video per synthetic patient, each with its own drawn
    parameter band. Returns all frames plus the per-video parameters."""
    if n_patients < 1:
        raise ValueError("need at least one patient")
    if seed is None:
        seed = base_params.seed
    frames: list[SyntheticFrame] = []
    per_video: dict[str, SceneParams] = {}
    for k in range(n_patients):
        rng = np.random.default_rng([seed, 0x9A, k])
        params = patient_params(base_params, rng)
        patient_seed = int(np.random.default_rng([seed, 0x5EED, k]).integers(2**31))
        video = f"patient{k:02d}"
        per_video[video] = params
        frames.extend(generate_dataset(frames_per_patient, params, seed=patient_seed, video=video))
    return frames, per_video
