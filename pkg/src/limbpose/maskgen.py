"""Ground-truth target maps: binary detection masks and Gaussian regression maps.

Joint targets are discs of radius r around the annotated centre. Connection
targets are axis-aligned-to-the-segment rectangles: a pixel belongs to a
connection when its perpendicular distance to the segment axis is at most
r/2 and its longitudinal projection falls between the endpoints. Regression
variants replace the hard membership with a Gaussian falloff of width
sigma = 3 r (distance from the centre for joints, longitudinal distance
from the segment midpoint for connections).

Pixel membership uses the shared coordinate convention from types: integer
coordinates are pixel centres. Boundary pixels (distance exactly r) are
inside.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import AnnotationError, DegenerateConnectionError
from .skeleton import (
    NUM_CHANNELS,
    ConnectionId,
    JointId,
    channel_index,
    connection_endpoints,
)
from .types import Annotation, MapKind, MapStack

DEFAULT_SIGMA_FACTOR = 3.0

Point = tuple[float, float]


def _check_geometry(radius: float, height: int, width: int) -> None:
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    if height <= 0 or width <= 0:
        raise ValueError(f"map size must be positive, got {height}x{width}")


def _grids(height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    ys = np.arange(height, dtype=np.float64)[:, None]
    xs = np.arange(width, dtype=np.float64)[None, :]
    return xs, ys


def _segment_frame(p1: Point, p2: Point) -> tuple[float, float, float]:
    # Returns (dx, dy, squared length); raises if the segment is degenerate.
    dx = float(p2[0]) - float(p1[0])
    dy = float(p2[1]) - float(p1[1])
    l2 = dx * dx + dy * dy
    if l2 == 0.0:
        raise DegenerateConnectionError(f"connection endpoints coincide at {p1}")
    return dx, dy, l2


def joint_detection_mask(center: Point, radius: float, height: int, width: int) -> np.ndarray:
    """Binary disc of the given radius around center, clipped to the map."""
    _check_geometry(radius, height, width)
    xs, ys = _grids(height, width)
    dx = xs - float(center[0])
    dy = ys - float(center[1])
    inside = dx * dx + dy * dy <= float(radius) * float(radius)
    return inside.astype(np.uint8)


def connection_detection_mask(
    p1: Point, p2: Point, thickness: float, height: int, width: int
) -> np.ndarray:
    """Binary rectangle along the segment p1-p2 with half-width thickness/2.

    A pixel is inside when its projection onto the segment axis lies within
    [0, |p1 p2|] and its perpendicular distance to the axis is at most
    thickness / 2. Endpoint order does not matter.
    """
    _check_geometry(thickness, height, width)
    dx, dy, l2 = _segment_frame(p1, p2)
    xs, ys = _grids(height, width)
    rx = xs - float(p1[0])
    ry = ys - float(p1[1])
    # s is the projection scaled by |p1 p2|; cross is the perpendicular
    # offset scaled the same way, so the r/2 bound becomes r/2 * |p1 p2|.
    s = rx * dx + ry * dy
    cross = rx * dy - ry * dx
    bound = (float(thickness) / 2.0) * math.sqrt(l2)
    inside = (s >= 0.0) & (s <= l2) & (np.abs(cross) <= bound)
    return inside.astype(np.uint8)


def joint_regression_map(
    center: Point,
    radius: float,
    height: int,
    width: int,
    sigma: float | None = None,
    truncate_radius: float | None = None,
) -> np.ndarray:
    """Gaussian bump exp(-d^2 / (2 sigma^2)) around center, peak value 1.

    sigma defaults to 3 * radius. When truncate_radius is given, values
    beyond that distance are zeroed.
    """
    _check_geometry(radius, height, width)
    if sigma is None:
        sigma = DEFAULT_SIGMA_FACTOR * radius
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    xs, ys = _grids(height, width)
    dx = xs - float(center[0])
    dy = ys - float(center[1])
    d2 = dx * dx + dy * dy
    out = np.exp(-d2 / (2.0 * sigma * sigma))
    if truncate_radius is not None:
        out[d2 > truncate_radius * truncate_radius] = 0.0
    return out


def connection_regression_map(
    p1: Point,
    p2: Point,
    radius: float,
    height: int,
    width: int,
    sigma: float | None = None,
) -> np.ndarray:
    """Gaussian ridge along the segment p1-p2.

    Support equals the binary connection rectangle for the same radius; the
    value falls off with longitudinal distance from the segment midpoint as
    exp(-t^2 / (2 sigma^2)), so both endpoints get the same value and the
    midpoint peaks at 1. sigma defaults to 3 * radius.
    """
    _check_geometry(radius, height, width)
    if sigma is None:
        sigma = DEFAULT_SIGMA_FACTOR * radius
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    dx, dy, l2 = _segment_frame(p1, p2)
    length = math.sqrt(l2)
    xs, ys = _grids(height, width)
    rx = xs - float(p1[0])
    ry = ys - float(p1[1])
    s = rx * dx + ry * dy
    cross = rx * dy - ry * dx
    bound = (float(radius) / 2.0) * length
    inside = (s >= 0.0) & (s <= l2) & (np.abs(cross) <= bound)
    t = s / length - length / 2.0
    out = np.exp(-(t * t) / (2.0 * sigma * sigma))
    out[~inside] = 0.0
    return out


def build_targets(
    annotation: Annotation,
    radius: float,
    kind: MapKind,
    sigma: float | None = None,
    truncate_radius: float | None = None,
    height: int | None = None,
    width: int | None = None,
) -> MapStack:
    """Assemble the full 20-channel target stack for one annotated frame.

    Joint channels of non-visible joints are all zero, as is any connection
    channel whose endpoints are not both visible. The stack is built at the
    annotation's resolution; passing an explicit height/width that differs
    is an error rather than a silent rescale.
    """
    if kind not in (MapKind.BINARY, MapKind.GAUSSIAN):
        raise ValueError(f"targets must be binary or gaussian, not {kind}")
    if height is None:
        height = annotation.height
    if width is None:
        width = annotation.width
    if height != annotation.height or width != annotation.width:
        raise AnnotationError(
            f"annotation is {annotation.width}x{annotation.height} but targets were "
            f"requested at {width}x{height}"
        )
    dtype = np.uint8 if kind is MapKind.BINARY else np.float64
    data = np.zeros((NUM_CHANNELS, height, width), dtype=dtype)

    for joint in JointId:
        if not annotation.visible(joint):
            continue
        center = annotation.point(joint)
        if kind is MapKind.BINARY:
            data[channel_index(joint)] = joint_detection_mask(center, radius, height, width)
        else:
            data[channel_index(joint)] = joint_regression_map(
                center, radius, height, width, sigma=sigma, truncate_radius=truncate_radius
            )

    for conn in ConnectionId:
        a, b = connection_endpoints(conn)
        if not (annotation.visible(a) and annotation.visible(b)):
            continue
        p1 = annotation.point(a)
        p2 = annotation.point(b)
        if kind is MapKind.BINARY:
            data[channel_index(conn)] = connection_detection_mask(p1, p2, radius, height, width)
        else:
            data[channel_index(conn)] = connection_regression_map(
                p1, p2, radius, height, width, sigma=sigma
            )

    return MapStack(data, kind)
