"""Probe batch-size / lr variants for the 10-epoch smoke target.

Prints per-epoch validation joint DSC at several binarization thresholds
plus predicted-probability peak statistics, to see whether the network's
confidence simply has not crossed 0.5 yet.
"""

import sys
import time

import numpy as np
import torch

from limbpose.metrics import dsc
from limbpose.nets import DetectionNet
from limbpose.skeleton import NUM_JOINTS
from limbpose.synthdata import SceneParams, generate_dataset
from limbpose.training import TrainConfig, fit_detection, make_detection_samples

torch.set_num_threads(1)

VARIANTS = {
    "b4_lr01": dict(batch=4, lr=0.01),
    "b8_lr01": dict(batch=8, lr=0.01),
    "b4_lr003": dict(batch=4, lr=0.003),
    "b2_lr01": dict(batch=2, lr=0.01),
    "b4_lr02": dict(batch=4, lr=0.02),
    "b2_lr02": dict(batch=2, lr=0.02),
    "b1_lr01": dict(batch=1, lr=0.01),
}

THRESHOLDS = (0.5, 0.4, 0.3, 0.2)


def sweep(net, val):
    xs = torch.stack(
        [torch.from_numpy(np.asarray(s.frame.data, dtype=np.float32))[None] for s in val]
    )
    with torch.no_grad():
        preds = net(xs).numpy()
    gts = np.stack([np.asarray(s.targets.data)[:NUM_JOINTS] for s in val])
    preds = preds[:, :NUM_JOINTS]
    peaks = preds.reshape(preds.shape[0], NUM_JOINTS, -1).max(axis=2)
    out = {}
    for thr in THRESHOLDS:
        vals = [
            dsc((preds[i, c] >= thr).astype(np.uint8), gts[i, c].astype(np.uint8))
            for i in range(preds.shape[0])
            for c in range(NUM_JOINTS)
        ]
        out[thr] = float(np.mean(vals))
    return out, float(peaks.max()), float(np.median(peaks))


def main():
    name = sys.argv[1]
    v = VARIANTS[name]
    frames = generate_dataset(200, SceneParams(), seed=42, video="probe")
    cfg = TrainConfig(epochs=10, seed=42, learning_rate=v["lr"], batch_size=v["batch"])
    train = make_detection_samples(frames[:140], cfg)
    val = make_detection_samples(frames[140:], cfg)
    net = DetectionNet(base_width=64, skip_connections=False, seed=42)
    t0 = time.time()

    def log(rec):
        table, peak_max, peak_med = sweep(net, val)
        cells = " ".join(f"d{int(t * 100)} {table[t]:.3f}" for t in THRESHOLDS)
        print(
            f"{name} ep {rec.epoch} train {rec.train_loss:.4f} val {rec.val_loss:.4f} "
            f"{cells} peak_max {peak_max:.3f} peak_med {peak_med:.3f} "
            f"t {time.time() - t0:.0f}s",
            flush=True,
        )

    fit_detection(net, train, val, cfg, log=log)
    print(f"{name} total {time.time() - t0:.1f}s", flush=True)


if __name__ == "__main__":
    main()
