"""Command-line interface for the limb-pose pipeline.

Exit codes: 0 success, 1 usage errors, 2 missing or malformed data,
3 numeric failures during training or inference.
"""

from __future__ import annotations

import dataclasses
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
import torch

from . import skeleton
from .config import PipelineConfig, apply_seed, config_to_yaml, load_config
from .decoding import decode_frame
from .errors import DataFormatError, LimbPoseError, NumericError
from .evaluation import evaluate_poses, format_report
from .io import (
    load_dataset,
    read_depth_image,
    read_pose_records,
    split_from_manifest,
    write_dataset,
    write_history,
    write_pose_records,
    write_report,
)
from .nets import load_checkpoint, save_checkpoint, detect_forward, regress_forward
from .synthdata import generate_patient_set
from .training import (
    DatasetSplit,
    fit_detection,
    fit_regression,
    make_detection_samples,
    make_regression_samples,
    split_dataset,
)
from .viz import render_overlay

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

# Set per invocation by the group callback; module-level because click
# commands run in the same process as the group.
_SERIAL = False


def _worker_count() -> int:
    if _SERIAL:
        return 1
    return max(1, min(4, os.cpu_count() or 1))


def _load_pipeline_config(config_path: str | None, seed: int | None) -> PipelineConfig:
    config = load_config(config_path)
    if seed is not None:
        apply_seed(config, seed)
    config.validate_consistency()
    return config


def _echo_record(record) -> None:
    click.echo(json.dumps(dataclasses.asdict(record), sort_keys=True))


@click.group()
@click.option(
    "--serial",
    is_flag=True,
    default=False,
    help="Force single-worker, single-thread execution for bit-reproducible runs.",
)
def cli(serial: bool) -> None:
    """Limb-pose estimation on depth images."""
    global _SERIAL
    _SERIAL = serial
    if serial:
        torch.set_num_threads(1)


@cli.command("describe-skeleton")
def describe_skeleton() -> None:
    """Print the body model and channel layout."""
    click.echo(skeleton.describe())


@cli.command("show-config")
@click.option("--config", "config_path", type=click.Path(), default=None, help="YAML config file.")
def show_config(config_path: str | None) -> None:
    """Print the effective configuration after applying a config file."""
    click.echo(config_to_yaml(load_config(config_path)), nl=False)


@cli.command("synth")
@click.option("--config", "config_path", type=click.Path(), default=None, help="YAML config file.")
@click.option("--out", "out_dir", type=click.Path(), default=None, help="Dataset directory.")
@click.option("--seed", type=int, default=None, help="Override every seed in the config.")
@click.option("--patients", type=int, default=None)
@click.option("--frames-per-patient", type=int, default=None)
def synth(
    config_path: str | None,
    out_dir: str | None,
    seed: int | None,
    patients: int | None,
    frames_per_patient: int | None,
) -> None:
    """Generate a synthetic dataset with a manifest and split assignment."""
    config = _load_pipeline_config(config_path, seed)
    if patients is not None:
        config.patients = patients
    if frames_per_patient is not None:
        config.frames_per_patient = frames_per_patient
    config.validate_consistency()
    root = Path(out_dir or config.paths.dataset)
    started = time.perf_counter()
    frames, per_video = generate_patient_set(
        config.scene,
        n_patients=config.patients,
        frames_per_patient=config.frames_per_patient,
        seed=config.seed,
    )
    split = split_dataset(frames, config.train, seed=config.seed)
    write_dataset(root, frames, split, config.seed, per_video_params=per_video)
    elapsed = time.perf_counter() - started
    click.echo(
        f"wrote {len(frames)} frames ({config.patients} videos) to {root} "
        f"[train {len(split.train)} / val {len(split.val)} / test {len(split.test)}] "
        f"in {elapsed:.1f}s"
    )


def _load_split(data_dir: str, config: PipelineConfig) -> tuple[list, DatasetSplit]:
    frames, manifest = load_dataset(data_dir)
    try:
        split = split_from_manifest(frames, manifest)
    except DataFormatError:
        split = split_dataset(frames, config.train, seed=config.seed)
    return frames, split


@cli.command("train-detect")
@click.option("--config", "config_path", type=click.Path(), default=None, help="YAML config file.")
@click.option("--data", "data_dir", type=click.Path(), default=None, help="Dataset directory.")
@click.option("--out", "out_dir", type=click.Path(), default=None, help="Checkpoint directory.")
@click.option("--seed", type=int, default=None, help="Override every seed in the config.")
def train_detect(
    config_path: str | None, data_dir: str | None, out_dir: str | None, seed: int | None
) -> None:
    """Train the detection network on a dataset's train/val split."""
    from .nets import DetectionNet

    config = _load_pipeline_config(config_path, seed)
    data = data_dir or config.paths.dataset
    ckpt_dir = Path(out_dir or config.paths.checkpoints)
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    _, split = _load_split(data, config)
    net = DetectionNet(
        base_width=config.nets.detection_base_width,
        skip_connections=config.nets.skip_connections,
        seed=config.seed,
    )
    train_samples = make_detection_samples(split.train, config.train)
    val_samples = make_detection_samples(split.val, config.train)
    net, history = fit_detection(net, train_samples, val_samples, config.train, log=_echo_record)
    best = max(history, key=lambda r: r.val_metric)
    save_checkpoint(
        ckpt_dir / "detection.pt",
        net,
        meta={"epoch": best.epoch, "val_metric": best.val_metric, "seed": config.seed},
    )
    write_history(ckpt_dir / "detection_history.jsonl", history)
    click.echo(
        f"saved {ckpt_dir / 'detection.pt'} (best epoch {best.epoch}, "
        f"val joint DSC {best.val_metric:.4f})"
    )


@cli.command("train-regress")
@click.option("--config", "config_path", type=click.Path(), default=None, help="YAML config file.")
@click.option("--data", "data_dir", type=click.Path(), default=None, help="Dataset directory.")
@click.option("--out", "out_dir", type=click.Path(), default=None, help="Checkpoint directory.")
@click.option("--detector", type=click.Path(), default=None, help="Detection checkpoint path.")
@click.option("--seed", type=int, default=None, help="Override every seed in the config.")
def train_regress(
    config_path: str | None,
    data_dir: str | None,
    out_dir: str | None,
    detector: str | None,
    seed: int | None,
) -> None:
    """Train the regression network on top of a frozen detection network."""
    from .nets import RegressionNet

    config = _load_pipeline_config(config_path, seed)
    data = data_dir or config.paths.dataset
    ckpt_dir = Path(out_dir or config.paths.checkpoints)
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    detector_path = Path(detector or ckpt_dir / "detection.pt")
    if not detector_path.exists():
        raise DataFormatError(f"detection checkpoint {detector_path} does not exist")
    detection_net, _ = load_checkpoint(str(detector_path), expect_arch="detection")
    _, split = _load_split(data, config)
    net = RegressionNet(base_width=config.nets.regression_base_width, seed=config.seed)
    train_samples = make_regression_samples(split.train, detection_net, config.train)
    val_samples = make_regression_samples(split.val, detection_net, config.train)
    net, history = fit_regression(net, train_samples, val_samples, config.train, log=_echo_record)
    best = min(history, key=lambda r: r.val_metric)
    save_checkpoint(
        ckpt_dir / "regression.pt",
        net,
        meta={"epoch": best.epoch, "val_metric": best.val_metric, "seed": config.seed},
    )
    write_history(ckpt_dir / "regression_history.jsonl", history)
    click.echo(
        f"saved {ckpt_dir / 'regression.pt'} (best epoch {best.epoch}, "
        f"val MSE {best.val_metric:.6f})"
    )


def _iter_input_frames(data_dir: Path, config: PipelineConfig, which: str):
    """Yield DepthFrames from a dataset directory (selected split) or from
    a flat directory of 16-bit depth PNGs."""
    if (data_dir / "manifest.json").exists():
        frames, manifest = load_dataset(data_dir)
        if which != "all":
            split = split_from_manifest(frames, manifest)
            frames = getattr(split, which)
        for item in frames:
            yield item.frame
        return
    pngs = sorted(data_dir.glob("*.png"))
    if not pngs:
        raise DataFormatError(f"{data_dir} holds no manifest and no PNG frames")
    for index, png in enumerate(pngs):
        yield read_depth_image(
            png, config.scene.max_range_mm, video=data_dir.name, frame=index
        )


@cli.command("infer")
@click.option("--config", "config_path", type=click.Path(), default=None, help="YAML config file.")
@click.option("--data", "data_dir", type=click.Path(), required=True, help="Dataset directory or directory of depth PNGs.")
@click.option("--out", "out_dir", type=click.Path(), default=None, help="Output directory.")
@click.option("--detector", type=click.Path(), default=None, help="Detection checkpoint path.")
@click.option("--regressor", type=click.Path(), default=None, help="Regression checkpoint path.")
@click.option("--split", "which", type=click.Choice(["train", "val", "test", "all"]), default="test",
              help="Which split to run when --data has a manifest.")
@click.option("--overlays/--no-overlays", default=False, help="Write overlay PNGs.")
def infer(
    config_path: str | None,
    data_dir: str,
    out_dir: str | None,
    detector: str | None,
    regressor: str | None,
    which: str,
    overlays: bool,
) -> None:
    """Run the two-stage pipeline over frames and write pose records."""
    config = _load_pipeline_config(config_path, None)
    ckpt_dir = Path(config.paths.checkpoints)
    detector_path = Path(detector or ckpt_dir / "detection.pt")
    regressor_path = Path(regressor or ckpt_dir / "regression.pt")
    for path, arch in ((detector_path, "detection"), (regressor_path, "regression")):
        if not path.exists():
            raise DataFormatError(f"{arch} checkpoint {path} does not exist")
    detection_net, _ = load_checkpoint(str(detector_path), expect_arch="detection")
    regression_net, _ = load_checkpoint(str(regressor_path), expect_arch="regression")

    out = Path(out_dir or config.paths.outputs)
    out.mkdir(parents=True, exist_ok=True)
    overlay_dir = out / "overlays"
    if overlays:
        overlay_dir.mkdir(exist_ok=True)

    def _attempt(frame):
        try:
            t0 = time.perf_counter()
            det = detect_forward(detection_net, frame)
            t1 = time.perf_counter()
            reg = regress_forward(regression_net, frame, det)
            t2 = time.perf_counter()
            pose = decode_frame(reg, config.decoder, video=frame.video, frame=frame.frame)
            t3 = time.perf_counter()
            return frame, (pose, (t1 - t0, t2 - t1, t3 - t2)), None
        except LimbPoseError as exc:
            return frame, None, exc

    frames_iter = _iter_input_frames(Path(data_dir), config, which)
    workers = _worker_count()
    pool = None
    if workers == 1:
        results = map(_attempt, frames_iter)
    else:
        # Frozen networks are safe to share; file writing stays on this thread.
        pool = ThreadPoolExecutor(max_workers=workers)
        results = pool.map(_attempt, frames_iter)
    poses = []
    failures = 0
    stage_time = {"detect": 0.0, "regress": 0.0, "decode": 0.0}
    try:
        for frame, outcome, exc in results:
            if exc is not None:
                failures += 1
                click.echo(f"frame {frame.video}/{frame.frame} failed: {exc}", err=True)
                continue
            pose, (dt_detect, dt_regress, dt_decode) = outcome
            stage_time["detect"] += dt_detect
            stage_time["regress"] += dt_regress
            stage_time["decode"] += dt_decode
            poses.append(pose)
            if overlays:
                image = render_overlay(frame, pose)
                image.save(overlay_dir / f"{frame.video}_{frame.frame:06d}.png")
    finally:
        if pool is not None:
            pool.shutdown()
    if not poses:
        raise DataFormatError("no frame produced a pose estimate")
    write_pose_records(out / "poses.jsonl", poses)
    n = len(poses)
    click.echo(
        f"decoded {n} frames ({failures} failed) -> {out / 'poses.jsonl'}; "
        f"mean per-frame seconds: detect {stage_time['detect'] / n:.3f}, "
        f"regress {stage_time['regress'] / n:.3f}, decode {stage_time['decode'] / n:.3f}"
    )


@cli.command("eval")
@click.option("--config", "config_path", type=click.Path(), default=None, help="YAML config file.")
@click.option("--poses", "poses_path", type=click.Path(), required=True, help="poses.jsonl from infer.")
@click.option("--data", "data_dir", type=click.Path(), required=True, help="Dataset directory with annotations.")
@click.option("--out", "report_path", type=click.Path(), default=None, help="Report JSON path.")
def eval_cmd(
    config_path: str | None, poses_path: str, data_dir: str, report_path: str | None
) -> None:
    """Score pose records against a dataset's ground-truth annotations."""
    config = _load_pipeline_config(config_path, None)
    poses = read_pose_records(poses_path)
    frames, _ = load_dataset(data_dir)
    annotations = {
        (item.annotation.video, item.annotation.frame): item.annotation for item in frames
    }
    report = evaluate_poses(poses, annotations, radius=config.train.radius)
    if report_path is None:
        report_path = str(Path(config.paths.outputs) / "report.json")
    Path(report_path).parent.mkdir(parents=True, exist_ok=True)
    write_report(report_path, report)
    click.echo(format_report(report))
    click.echo(f"\nwrote {report_path}")


def main(argv: list[str] | None = None) -> int:
    """Entry point translating errors into documented exit codes."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.UsageError as exc:
        exc.show(file=sys.stderr)
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show(file=sys.stderr)
        return EXIT_USAGE
    except click.Abort:
        click.echo("aborted", err=True)
        return EXIT_USAGE
    except NumericError as exc:
        click.echo(f"numeric failure: {exc}", err=True)
        return EXIT_NUMERIC
    except FloatingPointError as exc:
        click.echo(f"numeric failure: {exc}", err=True)
        return EXIT_NUMERIC
    except (DataFormatError, FileNotFoundError, NotADirectoryError) as exc:
        click.echo(f"data error: {exc}", err=True)
        return EXIT_DATA
    except LimbPoseError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
