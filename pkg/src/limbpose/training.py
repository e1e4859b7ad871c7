"""Training harness: preprocessing, dataset splitting, and the fitting
loops for both networks.

The detection network trains with Adam on binary cross-entropy against
binary target stacks; the regression network trains with high-momentum SGD
on mean squared error against Gaussian target stacks, fed by the frozen
detection network's outputs. Both runs share the same protocol: batches of
16, 100 epochs, initial learning rate 0.01 decayed by 10 percent every 10
epochs, and per-epoch model selection on the validation set.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np
import torch

from .errors import DataFormatError, ShapeMismatchError, TrainingDivergedError
from .maskgen import build_targets
from .nets import (
    DetectionNet,
    RegressionNet,
    detection_loss,
    regression_loss,
)
from .skeleton import NUM_JOINTS
from .types import Annotation, DepthFrame, JointAnnotation, MapKind, MapStack

DEFAULT_MAX_RANGE_MM = 4000.0


@dataclass
class TrainConfig:
    """Optimization protocol shared by both networks.

    continuous_decay switches the learning-rate schedule from the default
    step decay (multiply by decay_factor once per decay_every epochs) to a
    smooth exponential with the same half-life.
    """

    learning_rate: float = 0.01
    decay_factor: float = 0.9
    decay_every: int = 10
    momentum: float = 0.98
    batch_size: int = 16
    epochs: int = 100
    val_fraction: float = 0.3
    radius: float = 6.0
    sigma: float | None = None
    width: int = 128
    height: int = 96
    seed: int = 0
    continuous_decay: bool = False

    def __post_init__(self) -> None:
        if self.learning_rate <= 0 or self.decay_factor <= 0:
            raise ValueError("learning rate and decay factor must be positive")
        if self.decay_every <= 0:
            raise ValueError("decay_every must be a positive epoch count")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.batch_size <= 0 or self.epochs <= 0:
            raise ValueError("batch size and epoch count must be positive")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError(f"validation fraction must lie in (0, 1), got {self.val_fraction}")
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.sigma is not None and self.sigma <= 0:
            raise ValueError("sigma must be positive when given")
        if self.width % 16 or self.height % 16 or self.width <= 0 or self.height <= 0:
            raise ValueError("working resolution must be positive and divisible by 16")


def lr_at_epoch(config: TrainConfig, epoch: int) -> float:
    """Learning rate for a 0-based epoch under the configured schedule."""
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    if config.continuous_decay:
        exponent = epoch / config.decay_every
    else:
        exponent = epoch // config.decay_every
    return config.learning_rate * config.decay_factor**exponent


@dataclass
class DatasetSplit:
    train: list
    val: list
    test: list


def split_dataset(
    frames: Sequence,
    config: TrainConfig,
    seed: int | None = None,
    video_key: Callable | None = None,
) -> DatasetSplit:
    """Split frames per video: half of each video's frames are held out for
    testing, and the validation fraction is carved from the remainder.

    Every video contributes to all three parts (stratified by source), the
    parts are disjoint, and the split depends only on the seed and the
    per-video frame order.
    """
    if len(frames) < 10:
        raise ValueError(f"need at least 10 frames to split, got {len(frames)}")
    if seed is None:
        seed = config.seed
    if video_key is None:
        video_key = lambda item: item.annotation.video
    groups: dict[str, list] = {}
    for item in frames:
        groups.setdefault(video_key(item), []).append(item)

    split = DatasetSplit([], [], [])
    for index, video in enumerate(sorted(groups)):
        items = groups[video]
        rng = np.random.default_rng([seed, index])
        order = rng.permutation(len(items))
        n_test = len(items) // 2
        pool = order[n_test:]
        n_val = round(config.val_fraction * len(pool))
        split.test.extend(items[i] for i in order[:n_test])
        split.val.extend(items[i] for i in pool[:n_val])
        split.train.extend(items[i] for i in pool[n_val:])
    if not split.train or not split.val or not split.test:
        raise ValueError("split produced an empty part; provide more frames per video")
    return split


def preprocess(
    raw: np.ndarray,
    max_range_mm: float = DEFAULT_MAX_RANGE_MM,
    out_height: int = 96,
    out_width: int = 128,
    video: str = "",
    frame: int = 0,
) -> DepthFrame:
    """Area-average a raw depth image in millimetres down to the working
    resolution and normalize it by the maximum sensor range.

    The raw resolution must be an integer multiple of the output in both
    axes (640x480 -> 128x96 uses 5x5 blocks). Values are clipped to
    [0, max_range_mm] before scaling, so the result lies in [0, 1].
    """
    arr = np.asarray(raw, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeMismatchError(f"raw depth must be 2-D, got shape {arr.shape}")
    if max_range_mm <= 0:
        raise ValueError(f"max_range_mm must be positive, got {max_range_mm}")
    h, w = arr.shape
    if h % out_height or w % out_width:
        raise ShapeMismatchError(
            f"raw {w}x{h} is not an integer multiple of the working {out_width}x{out_height}"
        )
    fy = h // out_height
    fx = w // out_width
    pooled = arr.reshape(out_height, fy, out_width, fx).mean(axis=(1, 3))
    normalized = np.clip(pooled / max_range_mm, 0.0, 1.0).astype(np.float32)
    return DepthFrame(normalized, max_range_mm=max_range_mm, video=video, frame=frame)


def scale_annotation(annotation: Annotation, factor: float) -> Annotation:
    """Rescale annotated coordinates (and the resolution) by a factor."""
    if factor <= 0:
        raise ValueError(f"scale factor must be positive, got {factor}")
    joints = {
        joint: JointAnnotation(ann.x * factor, ann.y * factor, ann.visibility)
        for joint, ann in annotation.joints.items()
    }
    return Annotation(
        video=annotation.video,
        frame=annotation.frame,
        width=round(annotation.width * factor),
        height=round(annotation.height * factor),
        joints=joints,
    )


class DetectionSample(NamedTuple):
    frame: DepthFrame
    targets: MapStack


class RegressionSample(NamedTuple):
    frame: DepthFrame
    detection: MapStack
    targets: MapStack


def make_detection_samples(items: Sequence, config: TrainConfig) -> list[DetectionSample]:
    """Pair each frame with its binary target stack.

    items need a .frame (DepthFrame) and an .annotation at the frame's
    resolution; synthetic frames and loaded dataset frames both qualify.
    """
    samples = []
    for item in items:
        frame, annotation = item.frame, item.annotation
        if (annotation.height, annotation.width) != (frame.height, frame.width):
            raise DataFormatError(
                f"annotation {annotation.video}/{annotation.frame} is "
                f"{annotation.width}x{annotation.height} but the frame is "
                f"{frame.width}x{frame.height}"
            )
        targets = build_targets(annotation, config.radius, MapKind.BINARY)
        samples.append(DetectionSample(frame, targets))
    return samples


def make_regression_samples(
    items: Sequence,
    detection_net: DetectionNet,
    config: TrainConfig,
    teacher_forcing: bool = False,
    map_dtype: np.dtype = np.float16,
) -> list[RegressionSample]:
    """Pair each frame with detection maps and Gaussian target stacks.

    By default the detection maps come from the frozen detection network,
    so the regression network trains on what it will see at inference;
    teacher_forcing substitutes the binary ground-truth masks instead. Maps
    are stored at reduced precision to keep full datasets in memory; they
    are widened again at batch time.
    """
    from .nets import detect_forward

    samples = []
    was_training = detection_net.training
    for item in items:
        frame, annotation = item.frame, item.annotation
        if teacher_forcing:
            det = build_targets(annotation, config.radius, MapKind.BINARY)
            det_data = det.data.astype(map_dtype)
        else:
            det_data = detect_forward(detection_net, frame).data.astype(map_dtype)
        targets = build_targets(annotation, config.radius, MapKind.GAUSSIAN, sigma=config.sigma)
        samples.append(
            RegressionSample(
                frame,
                MapStack(det_data, MapKind.OUTPUT),
                MapStack(targets.data.astype(map_dtype), MapKind.GAUSSIAN),
            )
        )
    if was_training:
        detection_net.train()
    return samples


@dataclass
class EpochRecord:
    epoch: int
    learning_rate: float
    train_loss: float
    val_loss: float
    val_metric: float


def _check_finite(value: float, epoch: int, batch: int) -> None:
    if not math.isfinite(value):
        raise TrainingDivergedError(
            f"non-finite loss {value} at epoch {epoch}, batch {batch}; aborting"
        )


def _frames_tensor(samples: Sequence, idx: np.ndarray) -> torch.Tensor:
    data = np.stack([np.asarray(samples[i].frame.data, dtype=np.float32) for i in idx])
    return torch.from_numpy(data).unsqueeze(1)


def _stack_tensor(stacks: Sequence[MapStack], idx: np.ndarray) -> torch.Tensor:
    data = np.stack([np.asarray(stacks[i].data, dtype=np.float32) for i in idx])
    return torch.from_numpy(data)


def _regression_input(samples: Sequence[RegressionSample], idx: np.ndarray) -> torch.Tensor:
    frames = _frames_tensor(samples, idx)
    maps = _stack_tensor([s.detection for s in samples], idx)
    return torch.cat([frames, maps], dim=1)


def _mean_joint_dsc(pred: torch.Tensor, target: torch.Tensor, threshold: float = 0.5) -> float:
    """Mean Dice over the 12 joint channels of a batch, empty-vs-empty = 1."""
    p = pred[:, :NUM_JOINTS] >= threshold
    t = target[:, :NUM_JOINTS] >= threshold
    tp = (p & t).sum(dim=(2, 3)).double()
    fp = (p & ~t).sum(dim=(2, 3)).double()
    fn = (~p & t).sum(dim=(2, 3)).double()
    denom = 2 * tp + fp + fn
    dice = torch.where(denom > 0, 2 * tp / denom.clamp(min=1), torch.ones_like(denom))
    return float(dice.mean())


def _batches(n: int, batch_size: int, order: np.ndarray | None = None):
    idx = order if order is not None else np.arange(n)
    for start in range(0, n, batch_size):
        yield idx[start : start + batch_size]


def fit_detection(
    net: DetectionNet,
    train: Sequence[DetectionSample],
    val: Sequence[DetectionSample],
    config: TrainConfig,
    log: Callable[[EpochRecord], None] | None = None,
) -> tuple[DetectionNet, list[EpochRecord]]:
    """Train the detection network with Adam on binary cross-entropy.

    Model selection keeps the epoch with the highest validation mean joint
    DSC at threshold 0.5; the network is left holding those parameters.
    Gradient steps only ever see the training set.
    """
    if not train or not val:
        raise ValueError("training and validation sets must both be non-empty")
    optimizer = torch.optim.Adam(
        net.parameters(), lr=config.learning_rate, betas=(0.9, 0.999), eps=1e-8
    )

    def train_step(batch_idx: np.ndarray) -> tuple[torch.Tensor, int]:
        x = _frames_tensor(train, batch_idx)
        t = _stack_tensor([s.targets for s in train], batch_idx)
        return detection_loss(net(x), t), len(batch_idx)

    def validate() -> tuple[float, float]:
        losses, metrics, weights = [], [], []
        with torch.no_grad():
            for batch_idx in _batches(len(val), config.batch_size):
                x = _frames_tensor(val, batch_idx)
                t = _stack_tensor([s.targets for s in val], batch_idx)
                pred = net(x)
                losses.append(float(detection_loss(pred, t)))
                metrics.append(_mean_joint_dsc(pred, t))
                weights.append(len(batch_idx))
        return float(np.average(losses, weights=weights)), float(
            np.average(metrics, weights=weights)
        )

    history = _run_epochs(
        net, optimizer, len(train), config, train_step, validate, higher_is_better=True, log=log
    )
    return net, history


def fit_regression(
    net: RegressionNet,
    train: Sequence[RegressionSample],
    val: Sequence[RegressionSample],
    config: TrainConfig,
    log: Callable[[EpochRecord], None] | None = None,
) -> tuple[RegressionNet, list[EpochRecord]]:
    """Train the regression network with high-momentum SGD on MSE.

    Model selection keeps the epoch with the lowest validation MSE.
    """
    if not train or not val:
        raise ValueError("training and validation sets must both be non-empty")
    optimizer = torch.optim.SGD(net.parameters(), lr=config.learning_rate, momentum=config.momentum)

    def train_step(batch_idx: np.ndarray) -> tuple[torch.Tensor, int]:
        x = _regression_input(train, batch_idx)
        t = _stack_tensor([s.targets for s in train], batch_idx)
        return regression_loss(net(x), t), len(batch_idx)

    def validate() -> tuple[float, float]:
        losses, weights = [], []
        with torch.no_grad():
            for batch_idx in _batches(len(val), config.batch_size):
                x = _regression_input(val, batch_idx)
                t = _stack_tensor([s.targets for s in val], batch_idx)
                losses.append(float(regression_loss(net(x), t)))
                weights.append(len(batch_idx))
        loss = float(np.average(losses, weights=weights))
        return loss, loss  # validation MSE doubles as the selection metric

    history = _run_epochs(
        net, optimizer, len(train), config, train_step, validate, higher_is_better=False, log=log
    )
    return net, history


def _run_epochs(
    net: torch.nn.Module,
    optimizer: torch.optim.Optimizer,
    n_train: int,
    config: TrainConfig,
    train_step: Callable[[np.ndarray], tuple[torch.Tensor, int]],
    validate: Callable[[], tuple[float, float]],
    higher_is_better: bool,
    log: Callable[[EpochRecord], None] | None,
) -> list[EpochRecord]:
    rng = np.random.default_rng([config.seed, 0x5E0])
    best_metric = -math.inf if higher_is_better else math.inf
    best_state: dict | None = None
    history: list[EpochRecord] = []
    for epoch in range(config.epochs):
        lr = lr_at_epoch(config, epoch)
        for group in optimizer.param_groups:
            group["lr"] = lr
        net.train()
        order = rng.permutation(n_train)
        total, seen = 0.0, 0
        for batch_number, batch_idx in enumerate(_batches(n_train, config.batch_size, order)):
            optimizer.zero_grad()
            loss, count = train_step(batch_idx)
            value = float(loss.detach())
            _check_finite(value, epoch, batch_number)
            loss.backward()
            optimizer.step()
            total += value * count
            seen += count
        net.eval()
        val_loss, val_metric = validate()
        record = EpochRecord(epoch, lr, total / seen, val_loss, val_metric)
        history.append(record)
        if log is not None:
            log(record)
        improved = val_metric > best_metric if higher_is_better else val_metric < best_metric
        if improved or best_state is None:
            best_metric = val_metric
            best_state = copy.deepcopy(net.state_dict())
    net.load_state_dict(best_state)
    net.eval()
    return history


def train_detection_pipeline(
    frames: Sequence,
    config: TrainConfig,
    base_width: int = 64,
    skip_connections: bool = False,
    split: DatasetSplit | None = None,
    log: Callable[[EpochRecord], None] | None = None,
) -> tuple[DetectionNet, list[EpochRecord], DatasetSplit]:
    """Split frames, build binary targets, and fit a fresh detection network.

    Test frames are split off first and never touched: neither targets nor
    forward passes are computed for them here.
    """
    if split is None:
        split = split_dataset(frames, config)
    net = DetectionNet(base_width=base_width, skip_connections=skip_connections, seed=config.seed)
    train_samples = make_detection_samples(split.train, config)
    val_samples = make_detection_samples(split.val, config)
    net, history = fit_detection(net, train_samples, val_samples, config, log=log)
    return net, history, split


def train_regression_pipeline(
    frames: Sequence,
    detection_net: DetectionNet,
    config: TrainConfig,
    base_width: int = 64,
    teacher_forcing: bool = False,
    split: DatasetSplit | None = None,
    log: Callable[[EpochRecord], None] | None = None,
) -> tuple[RegressionNet, list[EpochRecord], DatasetSplit]:
    """Split frames and fit a fresh regression network on top of a frozen
    detection network. The detection parameters are not modified."""
    if split is None:
        split = split_dataset(frames, config)
    net = RegressionNet(base_width=base_width, seed=config.seed)
    train_samples = make_regression_samples(
        split.train, detection_net, config, teacher_forcing=teacher_forcing
    )
    val_samples = make_regression_samples(
        split.val, detection_net, config, teacher_forcing=teacher_forcing
    )
    net, history = fit_regression(net, train_samples, val_samples, config, log=log)
    return net, history, split
