"""Training harness: schedule, splitting, preprocessing, fitting loops."""

import math
from types import SimpleNamespace

import numpy as np
import pytest
import torch

from limbpose.errors import DataFormatError, ShapeMismatchError, TrainingDivergedError
from limbpose.nets import DetectionNet, RegressionNet
from limbpose.skeleton import JointId
from limbpose.synthdata import SceneParams, generate_dataset
from limbpose.training import (
    TrainConfig,
    fit_detection,
    fit_regression,
    lr_at_epoch,
    make_detection_samples,
    make_regression_samples,
    preprocess,
    scale_annotation,
    split_dataset,
    train_detection_pipeline,
    _mean_joint_dsc,
)
from limbpose.types import Annotation, DepthFrame, JointAnnotation, MapKind

from _oracles import dsc_oracle, sgd_momentum_oracle

torch.set_num_threads(1)


def test_lr_schedule_step_decay():
    cfg = TrainConfig()
    assert lr_at_epoch(cfg, 0) == pytest.approx(0.01)
    assert lr_at_epoch(cfg, 9) == pytest.approx(0.01)
    assert lr_at_epoch(cfg, 10) == pytest.approx(0.009)
    # Two completed decay periods by epoch 25.
    assert lr_at_epoch(cfg, 25) == pytest.approx(0.01 * 0.9**2)
    assert lr_at_epoch(cfg, 25) == pytest.approx(0.0081)


def test_lr_schedule_continuous_decay():
    cfg = TrainConfig(continuous_decay=True)
    assert lr_at_epoch(cfg, 10) == pytest.approx(0.009)
    assert lr_at_epoch(cfg, 5) == pytest.approx(0.01 * 0.9**0.5)
    with pytest.raises(ValueError):
        lr_at_epoch(cfg, -1)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(momentum=1.0)
    with pytest.raises(ValueError):
        TrainConfig(val_fraction=0.0)
    with pytest.raises(ValueError):
        TrainConfig(width=100)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)


def _fake_items(per_video, videos):
    return [
        SimpleNamespace(annotation=SimpleNamespace(video=v, frame=i))
        for v in videos
        for i in range(per_video)
    ]


def test_split_dataset_paper_scale_counts():
    # 4 videos x 540 frames: half held out for test, then 30 percent of the
    # remaining pool for validation.
    items = _fake_items(540, ["a", "b", "c", "d"])
    split = split_dataset(items, TrainConfig())
    assert len(split.test) == 1080
    assert len(split.train) == 756
    assert len(split.val) == 324


def test_split_dataset_disjoint_and_stratified():
    items = _fake_items(20, ["a", "b"])
    split = split_dataset(items, TrainConfig(seed=3))
    ids = [id(i) for part in (split.train, split.val, split.test) for i in part]
    assert len(ids) == len(set(ids)) == 40
    for part in (split.train, split.val, split.test):
        assert {i.annotation.video for i in part} == {"a", "b"}


def test_split_dataset_deterministic_per_seed():
    items = _fake_items(30, ["a", "b"])
    cfg = TrainConfig(seed=7)
    s1 = split_dataset(items, cfg)
    s2 = split_dataset(items, cfg)
    assert [id(i) for i in s1.train] == [id(i) for i in s2.train]
    assert [id(i) for i in s1.test] == [id(i) for i in s2.test]
    s3 = split_dataset(items, TrainConfig(seed=8))
    assert [id(i) for i in s3.train] != [id(i) for i in s1.train]


def test_split_dataset_rejects_tiny_input():
    with pytest.raises(ValueError):
        split_dataset(_fake_items(4, ["a"]), TrainConfig())


def test_preprocess_block_means_and_normalization():
    raw = np.zeros((4, 4), dtype=np.float64)
    raw[:2, :2] = [[1000, 2000], [3000, 4000]]  # mean 2500
    raw[:2, 2:] = 4000.0
    raw[2:, :2] = 0.0
    raw[2:, 2:] = [[8000, 8000], [8000, 8000]]  # clipped to max range
    frame = preprocess(raw, max_range_mm=4000.0, out_height=2, out_width=2)
    assert frame.data.shape == (2, 2)
    assert frame.data[0, 0] == pytest.approx(2500.0 / 4000.0)
    assert frame.data[0, 1] == pytest.approx(1.0)
    assert frame.data[1, 0] == pytest.approx(0.0)
    assert frame.data[1, 1] == pytest.approx(1.0)  # clipped, not 2.0


def test_preprocess_full_sensor_resolution():
    raw = np.full((480, 640), 1500.0)
    frame = preprocess(raw)
    assert frame.data.shape == (96, 128)
    assert np.allclose(frame.data, 1500.0 / 4000.0)


def test_preprocess_rejects_non_integer_factor():
    with pytest.raises(ShapeMismatchError):
        preprocess(np.zeros((100, 100)), out_height=96, out_width=128)


def _grid_annotation(width=16, height=16, video="v", frame=0):
    joints = {}
    for k, joint in enumerate(JointId):
        joints[joint] = JointAnnotation(float(2 + (k % 4) * 3), float(2 + (k // 4) * 4))
    return Annotation(video=video, frame=frame, width=width, height=height, joints=joints)


def test_scale_annotation():
    ann = Annotation(
        video="v",
        frame=0,
        width=640,
        height=480,
        joints={j: JointAnnotation(320.0, 240.0) for j in JointId},
    )
    scaled = scale_annotation(ann, 0.2)
    assert (scaled.width, scaled.height) == (128, 96)
    for joint in JointId:
        assert scaled.point(joint) == (64.0, 48.0)


def test_make_detection_samples_targets_and_mismatch():
    ann = _grid_annotation()
    frame = DepthFrame(np.zeros((16, 16), dtype=np.float32), video="v", frame=0)
    item = SimpleNamespace(frame=frame, annotation=ann)
    cfg = TrainConfig(width=16, height=16, radius=1.5)
    samples = make_detection_samples([item], cfg)
    assert samples[0].targets.kind is MapKind.BINARY
    assert samples[0].targets.data.shape == (20, 16, 16)
    bad = SimpleNamespace(
        frame=DepthFrame(np.zeros((32, 32), dtype=np.float32)), annotation=ann
    )
    with pytest.raises(DataFormatError):
        make_detection_samples([bad], cfg)


def test_make_regression_samples_storage_and_teacher_forcing():
    ann = _grid_annotation()
    frame = DepthFrame(np.random.default_rng(0).random((16, 16)).astype(np.float32))
    item = SimpleNamespace(frame=frame, annotation=ann)
    cfg = TrainConfig(width=16, height=16, radius=1.5)
    net = DetectionNet(base_width=2, seed=0)
    forced = make_regression_samples([item], net, cfg, teacher_forcing=True)
    assert forced[0].detection.data.dtype == np.float16
    assert forced[0].targets.data.dtype == np.float16
    assert set(np.unique(forced[0].detection.data)) <= {0.0, 1.0}
    live = make_regression_samples([item], net, cfg)
    assert live[0].detection.data.dtype == np.float16
    assert not np.array_equal(live[0].detection.data, forced[0].detection.data)


def test_sgd_momentum_matches_scalar_oracle():
    # Quadratic loss 0.5 theta^2 so the gradient equals theta itself.
    theta = torch.nn.Parameter(torch.tensor([2.0], dtype=torch.float64))
    opt = torch.optim.SGD([theta], lr=0.1, momentum=0.98)
    torch_trace = []
    oracle_grads = []
    for _ in range(6):
        opt.zero_grad()
        loss = 0.5 * theta**2
        loss.backward()
        oracle_grads.append(float(theta.detach()))
        opt.step()
        torch_trace.append(float(theta.detach()))
    # Replay the recorded gradient sequence through the hand-rolled update.
    oracle_trace = sgd_momentum_oracle(2.0, oracle_grads, lr=0.1, momentum=0.98)
    assert torch_trace == pytest.approx(oracle_trace, abs=1e-12)


def test_mean_joint_dsc_against_oracle():
    rng = np.random.default_rng(5)
    pred = rng.random((2, 20, 6, 6))
    target = (rng.random((2, 20, 6, 6)) > 0.7).astype(np.float64)
    got = _mean_joint_dsc(torch.from_numpy(pred), torch.from_numpy(target))
    per_channel = []
    for b in range(2):
        for c in range(12):  # joint channels only
            p = (pred[b, c] >= 0.5).astype(np.uint8)
            t = (target[b, c] >= 0.5).astype(np.uint8)
            per_channel.append(dsc_oracle(p, t))
    assert got == pytest.approx(float(np.mean(per_channel)), abs=1e-12)


def test_mean_joint_dsc_empty_channels_score_one():
    pred = torch.zeros(1, 20, 4, 4)
    target = torch.zeros(1, 20, 4, 4)
    assert _mean_joint_dsc(pred, target) == 1.0


def _small_scene_frames(n, seed):
    return generate_dataset(n, SceneParams(), seed=seed, video="unit")


def test_fit_detection_two_epoch_smoke():
    frames = _small_scene_frames(32, seed=11)
    cfg = TrainConfig(epochs=2, batch_size=8, seed=11)
    train = make_detection_samples(frames[:24], cfg)
    val = make_detection_samples(frames[24:], cfg)
    net = DetectionNet(base_width=4, seed=11)
    net, history = fit_detection(net, train, val, cfg)
    assert len(history) == 2
    assert history[1].train_loss < history[0].train_loss
    assert all(math.isfinite(r.val_loss) for r in history)
    assert not net.training  # left in eval mode holding the selected epoch


def test_fit_regression_two_epoch_smoke():
    frames = _small_scene_frames(32, seed=13)
    cfg = TrainConfig(epochs=2, batch_size=8, seed=13)
    det = DetectionNet(base_width=4, seed=13)
    train = make_regression_samples(frames[:24], det, cfg, teacher_forcing=True)
    val = make_regression_samples(frames[24:], det, cfg, teacher_forcing=True)
    net = RegressionNet(base_width=4, seed=13)
    net, history = fit_regression(net, train, val, cfg)
    assert len(history) == 2
    assert history[1].train_loss < history[0].train_loss
    # Validation MSE doubles as the selection metric.
    assert history[0].val_metric == history[0].val_loss


def test_fit_detection_rejects_empty_sets():
    cfg = TrainConfig(epochs=1)
    net = DetectionNet(base_width=2, seed=0)
    with pytest.raises(ValueError):
        fit_detection(net, [], [], cfg)


def test_fit_detection_aborts_on_nan():
    frames = _small_scene_frames(16, seed=17)
    cfg = TrainConfig(epochs=1, batch_size=8, seed=17)
    train = make_detection_samples(frames[:12], cfg)
    val = make_detection_samples(frames[12:], cfg)
    net = DetectionNet(base_width=2, seed=17)
    with torch.no_grad():
        net.head.weight.fill_(float("nan"))
    with pytest.raises(TrainingDivergedError):
        fit_detection(net, train, val, cfg)


class _AuditedItem:
    """Wraps a synthetic frame and counts accesses to its pixel data."""

    def __init__(self, inner):
        self._inner = inner
        self.annotation = inner.annotation
        self.frame_reads = 0

    @property
    def frame(self):
        self.frame_reads += 1
        return self._inner.frame


def test_pipeline_never_touches_test_frames():
    frames = [_AuditedItem(f) for f in _small_scene_frames(24, seed=19)]
    cfg = TrainConfig(epochs=1, batch_size=8, seed=19)
    net, history, split = train_detection_pipeline(frames, cfg, base_width=2)
    assert len(history) == 1
    for item in split.test:
        assert item.frame_reads == 0
    assert all(item.frame_reads > 0 for item in split.train)
    assert all(item.frame_reads > 0 for item in split.val)
