"""Overlay rendering of pose estimates on depth frames.

Limbs use fixed colors: green right arm, red left arm, blue right leg,
yellow left leg.
"""

from __future__ import annotations

from PIL import Image, ImageDraw

from .decoding import PoseEstimate
from .skeleton import LIMBS, LimbId, connection_endpoints
from .types import DepthFrame

LIMB_COLORS: dict[LimbId, tuple[int, int, int]] = {
    LimbId.RIGHT_ARM: (0, 210, 0),
    LimbId.LEFT_ARM: (230, 30, 30),
    LimbId.RIGHT_LEG: (40, 90, 255),
    LimbId.LEFT_LEG: (240, 220, 0),
}


def render_overlay(frame: DepthFrame, pose: PoseEstimate, upscale: int = 4) -> Image.Image:
    """Draw located joints and linked connections over the depth image."""
    if upscale < 1:
        raise ValueError("upscale must be at least 1")
    base = Image.fromarray((frame.data * 255.0).clip(0, 255).astype("uint8"), mode="L")
    img = base.convert("RGB").resize(
        (frame.width * upscale, frame.height * upscale), Image.NEAREST
    )
    draw = ImageDraw.Draw(img)
    radius = max(2, upscale)
    for limb in LIMBS:
        color = LIMB_COLORS[limb.limb_id]
        lp = pose.limbs.get(limb.limb_id)
        if lp is None:
            continue
        for conn in limb.connections:
            if lp.connection_scores.get(conn) is None:
                continue
            a, b = connection_endpoints(conn)
            la, lb = lp.joints.get(a), lp.joints.get(b)
            if la is None or lb is None:
                continue
            draw.line(
                [(la.x * upscale, la.y * upscale), (lb.x * upscale, lb.y * upscale)],
                fill=color,
                width=max(1, upscale // 2),
            )
        for joint in limb.joints:
            located = lp.joints.get(joint)
            if located is None:
                continue
            x, y = located.x * upscale, located.y * upscale
            draw.ellipse([x - radius, y - radius, x + radius, y + radius], outline=color, width=2)
    return img
