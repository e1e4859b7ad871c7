"""File formats: depth PNGs, annotation files, manifests, pose records.

All JSON payloads carry a schema_version field and are written with sorted
keys, so identical inputs produce byte-identical files. Depth images are
16-bit grayscale PNGs holding millimetre values; annotations store
native-resolution coordinates together with the resize factor that maps
them to the working resolution.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from .decoding import LimbPose, LocatedJoint, PoseEstimate
from .errors import DataFormatError
from .skeleton import LIMBS, ConnectionId, JointId, LimbId
from .synthdata import SceneParams, SyntheticFrame
from .training import DatasetSplit, EpochRecord
from .types import Annotation, DepthFrame, JointAnnotation, Visibility

ANNOTATION_SCHEMA_VERSION = 1
MANIFEST_SCHEMA_VERSION = 1
POSE_SCHEMA_VERSION = 1
REPORT_SCHEMA_VERSION = 1


def _dump_json(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def _load_json(path: Path, what: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"cannot read {what} {path}: {exc}") from exc


def _require_version(payload: dict, expected: int, path: Path, what: str) -> None:
    found = payload.get("schema_version")
    if found != expected:
        raise DataFormatError(
            f"{what} {path} has schema_version {found!r}, expected {expected}"
        )


# -- depth images -----------------------------------------------------------


def write_depth_image(path: str | Path, frame: DepthFrame) -> None:
    """Write a normalized depth frame as a 16-bit PNG of millimetres."""
    mm = np.round(frame.data.astype(np.float64) * frame.max_range_mm)
    mm = np.clip(mm, 0, 65535).astype(np.uint16)
    Image.fromarray(mm).save(Path(path), format="PNG")


def read_depth_image(
    path: str | Path,
    max_range_mm: float = 4000.0,
    video: str = "",
    frame: int = 0,
) -> DepthFrame:
    """Read a 16-bit depth PNG back into a normalized frame."""
    try:
        with Image.open(Path(path)) as img:
            arr = np.asarray(img)
    except (OSError, UnidentifiedImageError, ValueError) as exc:
        raise DataFormatError(f"cannot read depth image {path}: {exc}") from exc
    if arr.ndim != 2:
        raise DataFormatError(f"depth image {path} is not single-channel, shape {arr.shape}")
    normalized = np.clip(arr.astype(np.float64) / max_range_mm, 0.0, 1.0).astype(np.float32)
    return DepthFrame(normalized, max_range_mm=max_range_mm, video=video, frame=frame)


# -- annotations ------------------------------------------------------------


def write_annotation_file(
    path: str | Path,
    video: str,
    annotations: Sequence[Annotation],
    resize_factor: float = 1.0,
) -> None:
    """Write one video's annotations, storing native-resolution coordinates.

    Working coordinates are divided by resize_factor before writing; a
    factor of 1 stores them as-is.
    """
    if resize_factor <= 0:
        raise ValueError("resize_factor must be positive")
    if not annotations:
        raise DataFormatError("refusing to write an empty annotation file")
    width = annotations[0].width
    height = annotations[0].height
    frames = []
    for ann in annotations:
        if ann.video != video:
            raise DataFormatError(f"annotation for {ann.video!r} in file for {video!r}")
        if (ann.width, ann.height) != (width, height):
            raise DataFormatError("mixed resolutions in one annotation file")
        joints = {
            joint.value: {
                "x": ja.x / resize_factor,
                "y": ja.y / resize_factor,
                "visibility": ja.visibility.value,
            }
            for joint, ja in ann.joints.items()
        }
        frames.append({"frame": ann.frame, "joints": joints})
    payload = {
        "schema_version": ANNOTATION_SCHEMA_VERSION,
        "video": video,
        "resize_factor": resize_factor,
        "native_resolution": {
            "width": round(width / resize_factor),
            "height": round(height / resize_factor),
        },
        "frames": frames,
    }
    Path(path).write_text(_dump_json(payload))


def read_annotation_file(path: str | Path) -> list[Annotation]:
    """Read an annotation file, returning working-resolution annotations."""
    payload = _load_json(Path(path), "annotation file")
    _require_version(payload, ANNOTATION_SCHEMA_VERSION, Path(path), "annotation file")
    try:
        video = payload["video"]
        factor = float(payload["resize_factor"])
        native = payload["native_resolution"]
        width = round(native["width"] * factor)
        height = round(native["height"] * factor)
        annotations = []
        for record in payload["frames"]:
            joints = {}
            for name, data in record["joints"].items():
                joint = JointId(name)
                joints[joint] = JointAnnotation(
                    x=float(data["x"]) * factor,
                    y=float(data["y"]) * factor,
                    visibility=Visibility(data["visibility"]),
                )
            annotations.append(
                Annotation(
                    video=video,
                    frame=int(record["frame"]),
                    width=width,
                    height=height,
                    joints=joints,
                )
            )
    except (KeyError, ValueError, TypeError) as exc:
        raise DataFormatError(f"malformed annotation file {path}: {exc}") from exc
    return annotations


# -- datasets ---------------------------------------------------------------


def _params_to_dict(params: SceneParams) -> dict:
    out = dataclasses.asdict(params)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in out.items()}


def _params_from_dict(data: dict) -> SceneParams:
    kwargs = {}
    fields = {f.name: f for f in dataclasses.fields(SceneParams)}
    for key, value in data.items():
        if key not in fields:
            raise DataFormatError(f"unknown scene parameter {key!r}")
        kwargs[key] = tuple(value) if isinstance(value, list) else value
    return SceneParams(**kwargs)


@dataclasses.dataclass
class LoadedFrame:
    """A dataset frame restored from disk; mirrors SyntheticFrame's surface
    as far as training needs it."""

    frame: DepthFrame
    annotation: Annotation

    @property
    def key(self) -> str:
        return f"{self.annotation.video}/{self.annotation.frame}"


def write_dataset(
    root: str | Path,
    frames: Sequence[SyntheticFrame],
    split: DatasetSplit,
    seed: int,
    per_video_params: dict[str, SceneParams] | None = None,
) -> None:
    """Write frames, annotations, and a manifest under a dataset root.

    Layout: frames/<video>/<frame>.png, annotations/<video>.json, and
    manifest.json recording seed, per-video parameters, and the split
    assignment as video/frame keys.
    """
    root = Path(root)
    by_video: dict[str, list[SyntheticFrame]] = {}
    for item in frames:
        by_video.setdefault(item.annotation.video, []).append(item)

    (root / "frames").mkdir(parents=True, exist_ok=True)
    (root / "annotations").mkdir(parents=True, exist_ok=True)
    max_range = frames[0].frame.max_range_mm if frames else 4000.0
    for video, items in by_video.items():
        items.sort(key=lambda it: it.annotation.frame)
        frame_dir = root / "frames" / video
        frame_dir.mkdir(parents=True, exist_ok=True)
        for item in items:
            write_depth_image(frame_dir / f"{item.annotation.frame:06d}.png", item.frame)
        write_annotation_file(
            root / "annotations" / f"{video}.json",
            video,
            [item.annotation for item in items],
        )

    videos = {}
    for video, items in sorted(by_video.items()):
        entry: dict = {"frames": len(items)}
        if per_video_params and video in per_video_params:
            entry["params"] = _params_to_dict(per_video_params[video])
        videos[video] = entry
    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "seed": seed,
        "max_range_mm": max_range,
        "videos": videos,
        "split": {
            "train": sorted(item.key for item in split.train),
            "val": sorted(item.key for item in split.val),
            "test": sorted(item.key for item in split.test),
        },
    }
    (root / "manifest.json").write_text(_dump_json(manifest))


def read_manifest(root: str | Path) -> dict:
    path = Path(root) / "manifest.json"
    payload = _load_json(path, "manifest")
    _require_version(payload, MANIFEST_SCHEMA_VERSION, path, "manifest")
    return payload


def load_dataset(root: str | Path) -> tuple[list[LoadedFrame], dict]:
    """Load every frame of a dataset directory along with its manifest."""
    root = Path(root)
    if not root.is_dir():
        raise DataFormatError(f"dataset directory {root} does not exist")
    manifest = read_manifest(root)
    max_range = float(manifest.get("max_range_mm", 4000.0))
    frames: list[LoadedFrame] = []
    for video in sorted(manifest["videos"]):
        annotations = read_annotation_file(root / "annotations" / f"{video}.json")
        for ann in annotations:
            png = root / "frames" / video / f"{ann.frame:06d}.png"
            depth = read_depth_image(png, max_range, video=video, frame=ann.frame)
            if (depth.height, depth.width) != (ann.height, ann.width):
                raise DataFormatError(
                    f"frame {png} is {depth.width}x{depth.height} but its annotation "
                    f"says {ann.width}x{ann.height}"
                )
            frames.append(LoadedFrame(frame=depth, annotation=ann))
    if not frames:
        raise DataFormatError(f"dataset {root} contains no frames")
    return frames, manifest


def split_from_manifest(frames: Sequence[LoadedFrame], manifest: dict) -> DatasetSplit:
    """Reassemble the manifest's split assignment over loaded frames."""
    by_key = {item.key: item for item in frames}
    split_spec = manifest.get("split")
    if not split_spec:
        raise DataFormatError("manifest has no split assignment")
    parts = {}
    for part in ("train", "val", "test"):
        keys = split_spec.get(part, [])
        missing = [k for k in keys if k not in by_key]
        if missing:
            raise DataFormatError(f"split references missing frames: {missing[:5]}")
        parts[part] = [by_key[k] for k in keys]
    return DatasetSplit(parts["train"], parts["val"], parts["test"])


# -- pose records -----------------------------------------------------------


def pose_to_record(pose: PoseEstimate) -> dict:
    limbs = {}
    for limb in LIMBS:
        if limb.limb_id not in pose.limbs:
            continue
        lp = pose.limbs[limb.limb_id]
        joints = {}
        for joint in limb.joints:
            located = lp.joints.get(joint)
            joints[joint.value] = (
                None
                if located is None
                else {"x": located.x, "y": located.y, "score": located.score}
            )
        connections = {
            conn.value: lp.connection_scores.get(conn) for conn in limb.connections
        }
        limbs[limb.limb_id.value] = {
            "joints": joints,
            "connections": connections,
            "confidence": lp.confidence,
        }
    return {
        "schema_version": POSE_SCHEMA_VERSION,
        "video": pose.video,
        "frame": pose.frame,
        "limbs": limbs,
    }


def pose_from_record(record: dict) -> PoseEstimate:
    try:
        if record.get("schema_version") != POSE_SCHEMA_VERSION:
            raise DataFormatError(
                f"pose record schema {record.get('schema_version')!r} unsupported"
            )
        limbs = {}
        for limb_name, data in record["limbs"].items():
            limb_id = LimbId(limb_name)
            joints = {}
            for joint_name, loc in data["joints"].items():
                joint = JointId(joint_name)
                joints[joint] = (
                    None
                    if loc is None
                    else LocatedJoint(float(loc["x"]), float(loc["y"]), float(loc["score"]))
                )
            connections = {
                ConnectionId(name): (None if score is None else float(score))
                for name, score in data["connections"].items()
            }
            limbs[limb_id] = LimbPose(
                joints=joints,
                connection_scores=connections,
                confidence=float(data.get("confidence", 0.0)),
            )
        return PoseEstimate(video=record["video"], frame=int(record["frame"]), limbs=limbs)
    except (KeyError, ValueError, TypeError) as exc:
        raise DataFormatError(f"malformed pose record: {exc}") from exc


def write_pose_records(path: str | Path, poses: Iterable[PoseEstimate]) -> None:
    """Write poses as JSON lines ordered by (video, frame)."""
    records = sorted(poses, key=lambda p: (p.video, p.frame))
    with open(Path(path), "w") as fh:
        for pose in records:
            fh.write(json.dumps(pose_to_record(pose), sort_keys=True) + "\n")


def read_pose_records(path: str | Path) -> list[PoseEstimate]:
    poses = []
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise DataFormatError(f"cannot read pose records {path}: {exc}") from exc
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}:{number} is not valid JSON: {exc}") from exc
        poses.append(pose_from_record(record))
    return poses


# -- training histories ------------------------------------------------------


def write_history(path: str | Path, history: Sequence[EpochRecord]) -> None:
    with open(Path(path), "w") as fh:
        for record in history:
            fh.write(json.dumps(dataclasses.asdict(record), sort_keys=True) + "\n")


def write_report(path: str | Path, report: dict) -> None:
    payload = dict(report)
    payload.setdefault("schema_version", REPORT_SCHEMA_VERSION)
    Path(path).write_text(_dump_json(payload))
