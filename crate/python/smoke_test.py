"""Smoke test for the masknet Python extension.

Build and run from the repository root:

    cargo build --release -p masknet-py --features extension-module
    cp target/release/libmasknet_py.so python/masknet.so
    python3 python/smoke_test.py
"""

import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import masknet  # noqa: E402


def check(cond, what):
    if not cond:
        raise SystemExit(f"FAIL: {what}")
    print(f"ok: {what}")


def main():
    cloud = masknet.sample_shape("torus", 128, seed=3)
    check(len(cloud) == 128 and len(cloud[0]) == 3, "sample_shape returns 128 rows")
    radius = max(math.sqrt(x * x + y * y + z * z) for x, y, z in cloud)
    check(radius <= 1.0 + 1e-9, "sampled cloud fits the unit sphere")

    cfg = {"n_points": 96, "keep_fraction": 0.7, "shapes": ["box", "cone"], "seed": 5}
    pair = masknet.generate_pair(0, cfg)
    check(sum(pair["gt_mask"]) == len(pair["source"]), "gt_mask count matches source size")

    moved = masknet.transform_cloud(pair["registration_truth"], pair["source"])
    t = masknet.kabsch(pair["source"], moved)
    check(masknet.rotation_error_deg(t, pair["registration_truth"]) < 1e-6, "kabsch recovers a known transform")

    est = masknet.register("icp", pair["template"], pair["source"])
    check(len(est) == 12, "icp returns 12 numbers")

    net = masknet.MaskNet(seed=1, encoder=[16, 32], head=[32, 16, 1])
    probs = net.predict_mask(pair["template"], pair["source"])
    check(len(probs) == len(pair["template"]) and all(0.0 < p < 1.0 for p in probs), "predict_mask yields probabilities")
    est = masknet.register("mask-icp", pair["template"], pair["source"], net=net)
    check(all(math.isfinite(v) for v in est), "mask-icp produces a finite transform")

    trained, losses = masknet.train(cfg | {"count": 8}, epochs=3, batch_size=4, lr=1e-3, arch=net)
    check(len(losses) == 3 and all(math.isfinite(v) for v in losses), "train runs three epochs")

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "net.ckpt")
        trained.save(path)
        again = masknet.MaskNet.load(path)
        check(again.predict_mask(pair["template"], pair["source"]) == trained.predict_mask(pair["template"], pair["source"]),
              "checkpoint round trip preserves predictions")
        xyz = os.path.join(d, "c.xyz")
        masknet.write_cloud(cloud, xyz)
        check(masknet.load_cloud(xyz) == cloud, "xyz round trip is exact")

    try:
        masknet.register("mask-flk", pair["template"], pair["source"])
    except ValueError:
        print("ok: mask backend without a network raises ValueError")
    else:
        raise SystemExit("FAIL: expected ValueError")
    print("smoke test passed")


if __name__ == "__main__":
    main()
