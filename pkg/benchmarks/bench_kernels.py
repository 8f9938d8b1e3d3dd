"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json]

Sizes mirror real use: a handful of leaves per description node at D=512,
trajectory slices of ~100 samples, and batches of a few waypoints.
"""

import argparse
import json
import sys
import timeit

import numpy as np

from skillbank import _kernels
from skillbank.geometry import local_frames


def cases(rng):
    eye = np.eye(4)
    cam = (500.0, 500.0, 320.0, 240.0)
    traj_t = np.arange(101) / 10.0
    traj_p = np.array([0.0, 0.0, 1.0]) + np.cumsum(rng.normal(scale=0.004, size=(101, 3)), axis=0)
    leaves = rng.normal(size=(8, 512))
    query = rng.normal(size=512)
    big = rng.normal(size=(2000, 512))
    rots = np.array([np.linalg.qr(rng.normal(size=(3, 3)))[0] for _ in range(6)])
    rots *= np.sign(np.linalg.det(rots))[:, None, None]
    fs = local_frames(rng.normal(size=(6, 3)))
    ft = local_frames(rng.normal(size=(6, 3)))
    return {
        "cosine_scores 8x512": lambda k: k.cosine_scores(leaves, query),
        "cosine_scores 2000x512": lambda k: k.cosine_scores(big, query),
        "project_points 101": lambda k: k.project_points(*cam, eye, traj_p),
        "out_of_view 101": lambda k: k.out_of_view(*cam, 640, 480, eye, traj_p),
        "longest_stationary_span 101": lambda k: k.longest_stationary_span(traj_t, traj_p, 0.005),
        "transfer_orientations 6": lambda k: k.transfer_orientations(rots, fs, ft),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", action="store_true")
    args = ap.parse_args(argv)

    if _kernels.compiled_backend is None:
        print("compiled extension not built; only the fallback can be timed", file=sys.stderr)
    backends = {"python": _kernels.python_backend}
    if _kernels.compiled_backend is not None:
        backends["compiled"] = _kernels.compiled_backend

    rows = []
    for name, fn in cases(np.random.default_rng(0)).items():
        row = {"kernel": name}
        for label, mod in backends.items():
            timer = timeit.Timer(lambda: fn(mod))
            n, _ = timer.autorange()
            row[label] = min(timer.repeat(args.repeat, n)) / n * 1e6  # us per call
        if "compiled" in row:
            row["speedup"] = row["python"] / row["compiled"]
        rows.append(row)

    if args.json:
        print(json.dumps(rows, indent=1))
        return
    print(f"{'kernel':<30}{'python us':>12}{'compiled us':>14}{'speedup':>9}")
    for r in rows:
        comp = f"{r['compiled']:14.2f}{r['speedup']:8.1f}x" if "compiled" in r else f"{'-':>14}{'-':>9}"
        print(f"{r['kernel']:<30}{r['python']:12.2f}{comp}")


if __name__ == "__main__":
    main()
