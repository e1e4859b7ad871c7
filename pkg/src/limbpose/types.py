"""Core value types shared across the pipeline.

Coordinate convention: a point (x, y) is measured in pixels with x running
along image width and y along height; integer coordinates fall on pixel
centers, so pixel (ix, iy) covers the point (float(ix), float(iy)). Joint
coordinates may be sub-pixel reals.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import AnnotationError, ShapeMismatchError
from .skeleton import NUM_CHANNELS, ConnectionId, JointId, channel_index


class Visibility(Enum):
    VISIBLE = "visible"
    OCCLUDED = "occluded"
    OUT_OF_FRAME = "out_of_frame"


@dataclass(frozen=True)
class JointAnnotation:
    """Annotated position of one joint. Coordinates of non-visible joints
    are carried through unchanged but never enter target maps or metrics."""

    x: float
    y: float
    visibility: Visibility = Visibility.VISIBLE


@dataclass
class Annotation:
    """Ground-truth joint positions for one frame at a given resolution."""

    video: str
    frame: int
    width: int
    height: int
    joints: dict[JointId, JointAnnotation]

    def __post_init__(self) -> None:
        missing = [j.value for j in JointId if j not in self.joints]
        if missing:
            raise AnnotationError(f"annotation lacks joints: {missing}")
        if self.width <= 0 or self.height <= 0:
            raise AnnotationError("annotation resolution must be positive")
        for joint, ann in self.joints.items():
            if ann.visibility is Visibility.VISIBLE and not (
                0.0 <= ann.x < self.width and 0.0 <= ann.y < self.height
            ):
                raise AnnotationError(
                    f"visible joint {joint.value} at ({ann.x}, {ann.y}) lies outside "
                    f"{self.width}x{self.height}"
                )

    def visible(self, joint: JointId) -> bool:
        return self.joints[joint].visibility is Visibility.VISIBLE

    def point(self, joint: JointId) -> tuple[float, float]:
        ann = self.joints[joint]
        return (ann.x, ann.y)


class MapKind(Enum):
    BINARY = "binary-detection"
    GAUSSIAN = "gaussian-regression"
    OUTPUT = "network-output"


@dataclass
class MapStack:
    """A (20, H, W) stack of per-joint and per-connection maps.

    Channel order is fixed by the skeleton module: joints first, then
    connections. The dtype is whatever the producer chose; binary stacks
    hold {0, 1} and Gaussian or network-output stacks hold [0, 1] reals.
    """

    data: np.ndarray
    kind: MapKind

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data)
        if self.data.ndim != 3 or self.data.shape[0] != NUM_CHANNELS:
            raise ShapeMismatchError(
                f"map stack must have shape ({NUM_CHANNELS}, H, W), got {self.data.shape}"
            )

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def channel(self, ident: JointId | ConnectionId) -> np.ndarray:
        return self.data[channel_index(ident)]

    def validate_values(self) -> None:
        """Check the value invariant for this stack's kind."""
        if self.kind is MapKind.BINARY:
            values = np.unique(self.data)
            if not np.isin(values, (0, 1)).all():
                raise ValueError("binary stack contains values other than 0 and 1")
        else:
            if self.data.min() < 0.0 or self.data.max() > 1.0:
                raise ValueError(f"{self.kind.value} stack leaves [0, 1]")


@dataclass
class DepthFrame:
    """A depth image normalized to [0, 1] by its maximum range in mm."""

    data: np.ndarray
    max_range_mm: float = 4000.0
    video: str = ""
    frame: int = 0

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data)
        if self.data.ndim != 2:
            raise ShapeMismatchError(f"depth frame must be 2-D, got shape {self.data.shape}")
        if self.max_range_mm <= 0:
            raise ValueError("max_range_mm must be positive")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def millimetres(self) -> np.ndarray:
        return self.data.astype(np.float64) * self.max_range_mm
