"""Body model for the 12-joint, 8-connection limb skeleton.

Four limbs (right/left arm, right/left leg), each a chain of three joints
joined by two connections. Joints occupy channels [0, 12) and connections
channels [12, 20) of every map stack in the package; the layout follows
enumeration order (arms before legs, right before left, proximal before
distal) and is fixed, so serialized maps and checkpoints stay compatible.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class JointId(Enum):
    RIGHT_SHOULDER = "right_shoulder"
    RIGHT_ELBOW = "right_elbow"
    RIGHT_WRIST = "right_wrist"
    LEFT_SHOULDER = "left_shoulder"
    LEFT_ELBOW = "left_elbow"
    LEFT_WRIST = "left_wrist"
    RIGHT_HIP = "right_hip"
    RIGHT_KNEE = "right_knee"
    RIGHT_ANKLE = "right_ankle"
    LEFT_HIP = "left_hip"
    LEFT_KNEE = "left_knee"
    LEFT_ANKLE = "left_ankle"


class ConnectionId(Enum):
    RIGHT_SHOULDER_ELBOW = "right_shoulder_elbow"
    RIGHT_ELBOW_WRIST = "right_elbow_wrist"
    LEFT_SHOULDER_ELBOW = "left_shoulder_elbow"
    LEFT_ELBOW_WRIST = "left_elbow_wrist"
    RIGHT_HIP_KNEE = "right_hip_knee"
    RIGHT_KNEE_ANKLE = "right_knee_ankle"
    LEFT_HIP_KNEE = "left_hip_knee"
    LEFT_KNEE_ANKLE = "left_knee_ankle"


class LimbId(Enum):
    RIGHT_ARM = "right_arm"
    LEFT_ARM = "left_arm"
    RIGHT_LEG = "right_leg"
    LEFT_LEG = "left_leg"


@dataclass(frozen=True)
class Limb:
    """A three-joint chain: (proximal, middle, distal) plus its two connections."""

    limb_id: LimbId
    joints: tuple[JointId, JointId, JointId]
    connections: tuple[ConnectionId, ConnectionId]

    @property
    def proximal(self) -> JointId:
        return self.joints[0]

    @property
    def middle(self) -> JointId:
        return self.joints[1]

    @property
    def distal(self) -> JointId:
        return self.joints[2]


CONNECTION_ENDPOINTS: dict[ConnectionId, tuple[JointId, JointId]] = {
    ConnectionId.RIGHT_SHOULDER_ELBOW: (JointId.RIGHT_SHOULDER, JointId.RIGHT_ELBOW),
    ConnectionId.RIGHT_ELBOW_WRIST: (JointId.RIGHT_ELBOW, JointId.RIGHT_WRIST),
    ConnectionId.LEFT_SHOULDER_ELBOW: (JointId.LEFT_SHOULDER, JointId.LEFT_ELBOW),
    ConnectionId.LEFT_ELBOW_WRIST: (JointId.LEFT_ELBOW, JointId.LEFT_WRIST),
    ConnectionId.RIGHT_HIP_KNEE: (JointId.RIGHT_HIP, JointId.RIGHT_KNEE),
    ConnectionId.RIGHT_KNEE_ANKLE: (JointId.RIGHT_KNEE, JointId.RIGHT_ANKLE),
    ConnectionId.LEFT_HIP_KNEE: (JointId.LEFT_HIP, JointId.LEFT_KNEE),
    ConnectionId.LEFT_KNEE_ANKLE: (JointId.LEFT_KNEE, JointId.LEFT_ANKLE),
}

LIMBS: tuple[Limb, ...] = (
    Limb(
        LimbId.RIGHT_ARM,
        (JointId.RIGHT_SHOULDER, JointId.RIGHT_ELBOW, JointId.RIGHT_WRIST),
        (ConnectionId.RIGHT_SHOULDER_ELBOW, ConnectionId.RIGHT_ELBOW_WRIST),
    ),
    Limb(
        LimbId.LEFT_ARM,
        (JointId.LEFT_SHOULDER, JointId.LEFT_ELBOW, JointId.LEFT_WRIST),
        (ConnectionId.LEFT_SHOULDER_ELBOW, ConnectionId.LEFT_ELBOW_WRIST),
    ),
    Limb(
        LimbId.RIGHT_LEG,
        (JointId.RIGHT_HIP, JointId.RIGHT_KNEE, JointId.RIGHT_ANKLE),
        (ConnectionId.RIGHT_HIP_KNEE, ConnectionId.RIGHT_KNEE_ANKLE),
    ),
    Limb(
        LimbId.LEFT_LEG,
        (JointId.LEFT_HIP, JointId.LEFT_KNEE, JointId.LEFT_ANKLE),
        (ConnectionId.LEFT_HIP_KNEE, ConnectionId.LEFT_KNEE_ANKLE),
    ),
)

NUM_JOINTS = len(JointId)
NUM_CONNECTIONS = len(ConnectionId)
NUM_CHANNELS = NUM_JOINTS + NUM_CONNECTIONS

_JOINT_CHANNEL = {joint: index for index, joint in enumerate(JointId)}
_CONNECTION_CHANNEL = {conn: NUM_JOINTS + index for index, conn in enumerate(ConnectionId)}
_CHANNEL_IDS: tuple[JointId | ConnectionId, ...] = tuple(JointId) + tuple(ConnectionId)

_LIMB_OF_JOINT = {joint: limb for limb in LIMBS for joint in limb.joints}
_LIMB_OF_CONNECTION = {conn: limb for limb in LIMBS for conn in limb.connections}
_LIMB_BY_ID = {limb.limb_id: limb for limb in LIMBS}


def limb_of(joint: JointId) -> Limb:
    """Return the limb that owns a joint."""
    return _LIMB_OF_JOINT[joint]


def limb_of_connection(connection: ConnectionId) -> Limb:
    """Return the limb that owns a connection."""
    return _LIMB_OF_CONNECTION[connection]


def limb(limb_id: LimbId) -> Limb:
    return _LIMB_BY_ID[limb_id]


def connection_endpoints(connection: ConnectionId) -> tuple[JointId, JointId]:
    """Endpoints of a connection, proximal joint first."""
    return CONNECTION_ENDPOINTS[connection]


def channel_index(ident: JointId | ConnectionId) -> int:
    """Map a joint or connection to its map-stack channel."""
    if isinstance(ident, JointId):
        return _JOINT_CHANNEL[ident]
    if isinstance(ident, ConnectionId):
        return _CONNECTION_CHANNEL[ident]
    raise TypeError(f"expected JointId or ConnectionId, got {type(ident).__name__}")


def channel_id(index: int) -> JointId | ConnectionId:
    """Inverse of channel_index."""
    if not 0 <= index < NUM_CHANNELS:
        raise ValueError(f"channel index {index} outside [0, {NUM_CHANNELS})")
    return _CHANNEL_IDS[index]


def describe() -> str:
    """Human-readable dump of the body model and channel layout."""
    lines = [
        f"{NUM_JOINTS} joints, {NUM_CONNECTIONS} connections, "
        f"{len(LIMBS)} limbs, {NUM_CHANNELS} map channels",
        "",
        "limbs:",
    ]
    for lm in LIMBS:
        chain = " - ".join(j.value for j in lm.joints)
        lines.append(f"  {lm.limb_id.value}: {chain}")
    lines.append("")
    lines.append("channels:")
    for index in range(NUM_CHANNELS):
        ident = channel_id(index)
        kind = "joint" if isinstance(ident, JointId) else "connection"
        lines.append(f"  {index:2d}  {kind:10s}  {ident.value}")
    return "\n".join(lines)
