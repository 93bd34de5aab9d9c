"""Compiled versus pure-Python geometry kernels.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each row times one kernel call on the same inputs for both backends and
checks that the two agree before reporting the speedup.
"""

import argparse
import timeit

import numpy as np

from scenegrid import kernels


def workloads(rng):
    pairs = [tuple(rng.uniform([-4, -4, 3, 1.5, -np.pi], [4, 4, 5, 2.5, np.pi])) for _ in range(2)]
    boxes = np.column_stack([
        rng.uniform(-40, 40, (60, 2)),
        np.full(60, 4.5),
        np.full(60, 2.0),
        rng.uniform(-np.pi, np.pi, 60),
    ])
    h = 30
    track = np.column_stack([np.linspace(0, 60, h), np.zeros(h), np.zeros(h)])
    others = np.stack([np.column_stack([np.linspace(60, 0, h), np.full(h, y), np.full(h, np.pi)])
                       for y in np.linspace(3.0, 12.0, 12)])
    ang = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    polygon = np.column_stack([30 * np.cos(ang), 30 * np.sin(ang)])
    points = rng.uniform(-40, 40, (5000, 2))
    return {
        "obb_iou": lambda be: be.obb_iou(*pairs),
        "tick_collision_flags (60 boxes)": lambda be: be.tick_collision_flags(boxes, 0.02),
        "track_conflict (12 x 30 steps)": lambda be: be.track_conflict(track, others, 4.5, 2.0),
        "points_in_polygon (5000 pts)": lambda be: be.points_in_polygon(points, polygon),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if kernels.compiled_backend is None:
        print("compiled kernels are not built; only the Python backend is available")
    jobs = workloads(np.random.default_rng(0))
    print(f"{'kernel':<34} {'python ms':>10} {'cython ms':>10} {'speedup':>8}")
    for name, call in jobs.items():
        times = {}
        for label, be in (("python", kernels.python_backend), ("cython", kernels.compiled_backend)):
            if be is None:
                continue
            number = max(1, int(0.2 / max(timeit.timeit(lambda: call(be), number=1), 1e-6)))
            best = min(timeit.repeat(lambda: call(be), number=number, repeat=args.repeat)) / number
            times[label] = best * 1e3
        if kernels.compiled_backend is not None:
            a = np.asarray(call(kernels.python_backend))
            b = np.asarray(call(kernels.compiled_backend))
            assert np.allclose(a, b, atol=1e-12), f"{name}: backends disagree"
            print(f"{name:<34} {times['python']:10.4f} {times['cython']:10.4f} "
                  f"{times['python'] / times['cython']:7.1f}x")
        else:
            print(f"{name:<34} {times['python']:10.4f} {'-':>10} {'-':>8}")


if __name__ == "__main__":
    main()
