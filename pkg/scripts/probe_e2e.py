"""Run the full training protocol at a reduced width and report RMSD.

Mirrors the end-to-end acceptance test but with a configurable base width,
to measure what the pipeline achieves when the full-width run would be too
slow for the machine at hand.
"""

import sys
import time

import torch

from limbpose.decoding import DecoderConfig, decode_frame
from limbpose.evaluation import evaluate_poses, format_report
from limbpose.nets import detect_forward, regress_forward
from limbpose.synthdata import SceneParams, generate_patient_set
from limbpose.training import (
    TrainConfig,
    split_dataset,
    train_detection_pipeline,
    train_regression_pipeline,
)

torch.set_num_threads(1)


def main():
    base_width = int(sys.argv[1]) if len(sys.argv) > 1 else 16
    epochs = int(sys.argv[2]) if len(sys.argv) > 2 else 100
    t0 = time.time()

    frames, _ = generate_patient_set(SceneParams(), n_patients=4, frames_per_patient=540, seed=0)
    config = TrainConfig(epochs=epochs)
    split = split_dataset(frames, config)
    print(
        f"b{base_width} data {len(frames)} frames "
        f"(train {len(split.train)} val {len(split.val)} test {len(split.test)}) "
        f"t {time.time() - t0:.0f}s",
        flush=True,
    )

    def log_det(rec):
        print(
            f"b{base_width} det ep {rec.epoch} lr {rec.learning_rate:.5f} "
            f"train {rec.train_loss:.4f} val {rec.val_loss:.4f} dsc {rec.val_metric:.4f} "
            f"t {time.time() - t0:.0f}s",
            flush=True,
        )

    def log_reg(rec):
        print(
            f"b{base_width} reg ep {rec.epoch} lr {rec.learning_rate:.5f} "
            f"train {rec.train_loss:.6f} val {rec.val_loss:.6f} t {time.time() - t0:.0f}s",
            flush=True,
        )

    det_net, det_hist, split = train_detection_pipeline(
        frames, config, base_width=base_width, split=split, log=log_det
    )
    print(f"b{base_width} detection done t {time.time() - t0:.0f}s", flush=True)

    reg_net, reg_hist, _ = train_regression_pipeline(
        frames, det_net, config, base_width=base_width, split=split, log=log_reg
    )
    print(f"b{base_width} regression done t {time.time() - t0:.0f}s", flush=True)

    decoder = DecoderConfig()
    poses, annotations = [], {}
    for item in split.test:
        det = detect_forward(det_net, item.frame)
        reg = regress_forward(reg_net, item.frame, det)
        poses.append(
            decode_frame(reg, decoder, video=item.annotation.video, frame=item.annotation.frame)
        )
        annotations[(item.annotation.video, item.annotation.frame)] = item.annotation
    print(f"b{base_width} inference done t {time.time() - t0:.0f}s", flush=True)

    report = evaluate_poses(poses, annotations, radius=config.radius)
    print(format_report(report), flush=True)
    worst = max(row["rmsd_median"] for row in report["limbs"])
    print(f"b{base_width} worst limb rmsd median {worst:.3f} px t {time.time() - t0:.0f}s", flush=True)


if __name__ == "__main__":
    main()
