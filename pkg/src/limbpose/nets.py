"""Detection and regression networks with their losses and checkpoints.

The detection network is a fully convolutional encoder-decoder that turns
one normalized depth channel into 20 sigmoid confidence maps at input
resolution. Each encoder stage halves the resolution through two parallel
branches (a 2x2 stride-2 convolution followed by a 3x3 refinement) whose
concatenation is fused by a 1x1 convolution; decoder stages mirror this
with 2x2 stride-2 transposed convolutions per branch. Every convolution is
followed by batch norm and ReLU except the two 1x1 output heads.

The regression network refines the 20 detection maps, stacked with the
depth channel into 21 inputs, through five 3x3 stride-1 convolutions and a
linear 1x1 head producing 20 real-valued maps.

base_width scales every layer proportionally; 64 is the full-size model
and smaller even values give cheap variants for tests and ablations.
"""

from __future__ import annotations

import math
from typing import Any

import numpy as np
import torch
from torch import nn

from .errors import CheckpointError, ShapeMismatchError
from .skeleton import NUM_CHANNELS
from .types import DepthFrame, MapKind, MapStack

DOWNSAMPLE_FACTOR = 16
CHECKPOINT_SCHEMA_VERSION = 1


def _conv_unit(
    in_ch: int, out_ch: int, kernel: int, stride: int = 1, padding: int = 0, transposed: bool = False
) -> nn.Sequential:
    conv_cls = nn.ConvTranspose2d if transposed else nn.Conv2d
    return nn.Sequential(
        conv_cls(in_ch, out_ch, kernel, stride=stride, padding=padding),
        nn.BatchNorm2d(out_ch),
        nn.ReLU(inplace=True),
    )


class _DownBlock(nn.Module):
    """Two parallel halving branches fused by a pointwise convolution."""

    def __init__(self, in_ch: int, branch_ch: int, out_ch: int):
        super().__init__()
        self.branch1 = nn.Sequential(
            _conv_unit(in_ch, branch_ch, 2, stride=2),
            _conv_unit(branch_ch, branch_ch, 3, padding=1),
        )
        self.branch2 = nn.Sequential(
            _conv_unit(in_ch, branch_ch, 2, stride=2),
            _conv_unit(branch_ch, branch_ch, 3, padding=1),
        )
        self.fuse = _conv_unit(2 * branch_ch, out_ch, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fuse(torch.cat([self.branch1(x), self.branch2(x)], dim=1))


class _UpBlock(nn.Module):
    """Two parallel doubling branches, optionally concatenated with an
    encoder skip before refinement, fused by a pointwise convolution."""

    def __init__(self, in_ch: int, branch_ch: int, out_ch: int, skip_ch: int = 0):
        super().__init__()
        self.up1 = _conv_unit(in_ch, branch_ch, 2, stride=2, transposed=True)
        self.up2 = _conv_unit(in_ch, branch_ch, 2, stride=2, transposed=True)
        self.refine1 = _conv_unit(branch_ch + skip_ch, branch_ch, 3, padding=1)
        self.refine2 = _conv_unit(branch_ch + skip_ch, branch_ch, 3, padding=1)
        self.fuse = _conv_unit(2 * branch_ch, out_ch, 1)

    def forward(self, x: torch.Tensor, skip: torch.Tensor | None = None) -> torch.Tensor:
        h1 = self.up1(x)
        h2 = self.up2(x)
        if skip is not None:
            h1 = torch.cat([h1, skip], dim=1)
            h2 = torch.cat([h2, skip], dim=1)
        return self.fuse(torch.cat([self.refine1(h1), self.refine2(h2)], dim=1))


def _init_parameters(module: nn.Module, seed: int) -> None:
    # Fan-in-scaled uniform init from a dedicated generator, so identical
    # seeds give bit-identical parameters regardless of global RNG state.
    gen = torch.Generator().manual_seed(int(seed))
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            kh, kw = m.kernel_size
            fan_in = (m.in_channels // m.groups) * kh * kw
            bound = 1.0 / math.sqrt(fan_in)
            with torch.no_grad():
                m.weight.uniform_(-bound, bound, generator=gen)
                if m.bias is not None:
                    m.bias.uniform_(-bound, bound, generator=gen)
        elif isinstance(m, nn.BatchNorm2d):
            with torch.no_grad():
                m.weight.fill_(1.0)
                m.bias.fill_(0.0)
            m.reset_running_stats()


class DetectionNet(nn.Module):
    def __init__(self, base_width: int = 64, skip_connections: bool = False, seed: int = 0):
        super().__init__()
        if base_width < 2 or base_width % 2 != 0:
            raise ValueError(f"base_width must be even and >= 2, got {base_width}")
        b = base_width
        self.base_width = b
        self.skip_connections = bool(skip_connections)

        self.stem = _conv_unit(1, b, 3, padding=1)
        down_in = [b, 2 * b, 4 * b, 8 * b]
        down_branch = [b, 2 * b, 4 * b, 8 * b]
        down_out = [2 * b, 4 * b, 8 * b, 16 * b]
        self.down_blocks = nn.ModuleList(
            _DownBlock(i, br, o) for i, br, o in zip(down_in, down_branch, down_out)
        )
        up_in = [16 * b, 8 * b, 4 * b, 2 * b]
        up_branch = [4 * b, 2 * b, b, b // 2]
        up_out = [8 * b, 4 * b, 2 * b, b]
        skip_ch = [8 * b, 4 * b, 2 * b, b] if self.skip_connections else [0, 0, 0, 0]
        self.up_blocks = nn.ModuleList(
            _UpBlock(i, br, o, sc) for i, br, o, sc in zip(up_in, up_branch, up_out, skip_ch)
        )
        self.head = nn.Conv2d(b, NUM_CHANNELS, 1)
        _init_parameters(self, seed)

    def descriptor(self) -> dict[str, Any]:
        return {
            "arch": "detection",
            "base_width": self.base_width,
            "skip_connections": self.skip_connections,
            "in_channels": 1,
            "out_channels": NUM_CHANNELS,
        }

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4 or x.shape[1] != 1:
            raise ShapeMismatchError(f"expected input (B, 1, H, W), got {tuple(x.shape)}")
        h, w = x.shape[-2:]
        if h % DOWNSAMPLE_FACTOR or w % DOWNSAMPLE_FACTOR:
            raise ShapeMismatchError(
                f"input {h}x{w} not divisible by the downsampling factor {DOWNSAMPLE_FACTOR}"
            )
        t = self.stem(x)
        skips = [t]
        for block in self.down_blocks:
            t = block(t)
            skips.append(t)
        # Decoder stage k upsamples back to the resolution of encoder
        # output 3-k, which serves as its skip partner when enabled.
        partners = [skips[3], skips[2], skips[1], skips[0]]
        for block, partner in zip(self.up_blocks, partners):
            t = block(t, partner if self.skip_connections else None)
        return torch.sigmoid(self.head(t))


class RegressionNet(nn.Module):
    def __init__(self, base_width: int = 64, seed: int = 0):
        super().__init__()
        if base_width < 2 or base_width % 2 != 0:
            raise ValueError(f"base_width must be even and >= 2, got {base_width}")
        b = base_width
        self.base_width = b
        widths = [b, 2 * b, 4 * b, 4 * b, 4 * b]
        layers: list[nn.Module] = []
        in_ch = NUM_CHANNELS + 1
        for w in widths:
            layers.append(_conv_unit(in_ch, w, 3, padding=1))
            in_ch = w
        self.body = nn.Sequential(*layers)
        self.head = nn.Conv2d(in_ch, NUM_CHANNELS, 1)
        _init_parameters(self, seed)

    def descriptor(self) -> dict[str, Any]:
        return {
            "arch": "regression",
            "base_width": self.base_width,
            "in_channels": NUM_CHANNELS + 1,
            "out_channels": NUM_CHANNELS,
        }

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4 or x.shape[1] != NUM_CHANNELS + 1:
            raise ShapeMismatchError(
                f"expected input (B, {NUM_CHANNELS + 1}, H, W), got {tuple(x.shape)}"
            )
        return self.head(self.body(x))


def detection_loss(
    pred: torch.Tensor, target: torch.Tensor, eps: float = 1e-7
) -> torch.Tensor:
    """Mean binary cross-entropy with predictions clamped to [eps, 1-eps]."""
    pred = torch.as_tensor(pred)
    target = torch.as_tensor(target, dtype=pred.dtype)
    if pred.shape != target.shape:
        raise ShapeMismatchError(f"shape mismatch: pred {tuple(pred.shape)} vs target {tuple(target.shape)}")
    p = pred.clamp(eps, 1.0 - eps)
    return -(target * torch.log(p) + (1.0 - target) * torch.log1p(-p)).mean()


def regression_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean squared error over all map pixels."""
    pred = torch.as_tensor(pred)
    target = torch.as_tensor(target, dtype=pred.dtype)
    if pred.shape != target.shape:
        raise ShapeMismatchError(f"shape mismatch: pred {tuple(pred.shape)} vs target {tuple(target.shape)}")
    diff = pred - target
    return (diff * diff).mean()


def _frame_tensor(frame: DepthFrame) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(frame.data, dtype=np.float32))


def detect_forward(net: DetectionNet, frame: DepthFrame) -> MapStack:
    """Run the detection network on one depth frame in inference mode."""
    net.eval()
    with torch.no_grad():
        x = _frame_tensor(frame)[None, None]
        out = net(x)[0].numpy()
    return MapStack(out, MapKind.OUTPUT)


def regress_forward(net: RegressionNet, frame: DepthFrame, detection: MapStack) -> MapStack:
    """Run the regression network on a depth frame plus its detection maps.

    The depth channel comes first, then the 20 detection channels in
    skeleton order.
    """
    if (detection.height, detection.width) != (frame.height, frame.width):
        raise ShapeMismatchError(
            f"detection stack {detection.height}x{detection.width} does not match "
            f"frame {frame.height}x{frame.width}"
        )
    net.eval()
    with torch.no_grad():
        depth = _frame_tensor(frame)[None]
        maps = torch.from_numpy(np.ascontiguousarray(detection.data, dtype=np.float32))
        x = torch.cat([depth, maps], dim=0)[None]
        out = net(x)[0].numpy()
    return MapStack(out, MapKind.OUTPUT)


def _build_from_descriptor(desc: dict[str, Any]) -> nn.Module:
    arch = desc.get("arch")
    if arch == "detection":
        return DetectionNet(
            base_width=int(desc["base_width"]),
            skip_connections=bool(desc.get("skip_connections", False)),
        )
    if arch == "regression":
        return RegressionNet(base_width=int(desc["base_width"]))
    raise CheckpointError(f"unknown architecture {arch!r} in checkpoint")


def save_checkpoint(path: str, net: nn.Module, meta: dict[str, Any] | None = None) -> None:
    """Persist a network with its architecture descriptor and metadata."""
    if not hasattr(net, "descriptor"):
        raise CheckpointError(f"cannot checkpoint a {type(net).__name__}")
    payload = {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "descriptor": net.descriptor(),
        "state": net.state_dict(),
        "meta": dict(meta or {}),
    }
    torch.save(payload, path)


def load_checkpoint(
    path: str, expect_arch: str | None = None
) -> tuple[nn.Module, dict[str, Any]]:
    """Load a checkpoint, rebuilding the network from its descriptor.

    The stored descriptor is validated against the architectures this
    package compiles; a checkpoint saved for a different network or schema
    raises CheckpointError instead of silently loading.
    """
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or "descriptor" not in payload or "state" not in payload:
        raise CheckpointError(f"{path} is not a network checkpoint")
    if payload.get("schema_version") != CHECKPOINT_SCHEMA_VERSION:
        raise CheckpointError(
            f"checkpoint schema {payload.get('schema_version')!r} unsupported, "
            f"expected {CHECKPOINT_SCHEMA_VERSION}"
        )
    desc = payload["descriptor"]
    if expect_arch is not None and desc.get("arch") != expect_arch:
        raise CheckpointError(
            f"expected a {expect_arch} checkpoint but {path} holds {desc.get('arch')!r}"
        )
    net = _build_from_descriptor(desc)
    try:
        net.load_state_dict(payload["state"], strict=True)
    except RuntimeError as exc:
        raise CheckpointError(f"checkpoint state does not fit its descriptor: {exc}") from exc
    net.eval()
    return net, dict(payload.get("meta", {}))
