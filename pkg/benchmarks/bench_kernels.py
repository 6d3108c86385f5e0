"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5] [--skip-end-to-end]

Each kernel runs on inputs sized like one 250-cell heat map (or one KDE
evaluation against a 1000-row prior). Outputs are checked for agreement
before timing. Numba compile time is excluded by a warmup call. The
end-to-end part times training and one heat map per backend in a subprocess,
since the backend is picked at import from ``ROOMAUG_DISABLE_NUMBA``.
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from roomaug import _kernels
from roomaug.geometry import box_corners


def _boxes(rng, n, spread=4.0):
    c = rng.uniform(0, spread, (n, 2))
    th = rng.uniform(0, 2 * np.pi, n)
    h = rng.uniform(0.1, 0.8, (n, 2))
    return c, th, h, box_corners(c, th, h)


def cases(rng):
    _, _, _, cand = _boxes(rng, 250 * 16)
    c, th, h, scene = _boxes(rng, 12)
    axes = np.stack([np.cos(th), np.sin(th)], axis=1)
    walls = rng.uniform(0, 5, (8, 2, 2))
    origins = rng.uniform(0, 5, (4000, 2))
    ang = rng.uniform(0, 2 * np.pi, 4000)
    dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    obs = np.column_stack([rng.integers(0, 4, 1000)] + [rng.normal(0, 1, 1000) for _ in range(9)]
                          + [rng.integers(0, 3, 1000) for _ in range(18)]).astype(float)
    queries = obs[rng.integers(0, 1000, 250)] + np.r_[0, rng.normal(0, 0.1, 9), np.zeros(18)]
    bw = np.r_[0.3, np.full(9, 0.2), np.full(18, 0.4)]
    disc = np.r_[True, np.zeros(9, bool), np.ones(18, bool)]
    return {
        "point_segment_distances": (origins, walls),
        "box_box_distances": (cand[:250], scene),
        "ray_segment_hits": (origins, dirs, walls),
        "ray_box_hits": (origins, dirs, c, axes, h),
        "footprint_overlaps": (cand, scene),
        "overlap_areas": (cand[:250], scene),
        "kde_log_pdf": (queries, obs, bw, disc),
    }


def best_of(fn, args, repeat):
    out = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        out.append(time.perf_counter() - t0)
    return min(out)


END_TO_END = """
import time
from roomaug import _kernels, train
from roomaug.augment import position_heatmap
from roomaug.synth import SynthConfig, synthesize
scenes, _ = synthesize(SynthConfig(), 200, seed=1)
model = train(scenes)
room = scenes[0].without(scenes[0].objects[0].id)
cat = scenes[0].objects[0].category
position_heatmap(room, cat, model)
t0 = time.perf_counter(); train(scenes); t_train = time.perf_counter() - t0
t0 = time.perf_counter()
for _ in range(5):
    position_heatmap(room, cat, model)
print(_kernels.BACKEND, t_train, (time.perf_counter() - t0) / 5)
"""


def end_to_end():
    print(f"\n{'backend':<8} {'train 200 rooms s':>18} {'heat map s':>11}")
    for flag in ("1", "0"):
        env = dict(os.environ, ROOMAUG_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", END_TO_END], env=env, capture_output=True, text=True, check=True)
        backend, t_train, t_map = out.stdout.split()
        print(f"{backend:<8} {float(t_train):>18.3f} {float(t_map):>11.3f}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--skip-end-to-end", action="store_true", help="only time the kernels")
    args = ap.parse_args()
    if _kernels.numba_impl is None:
        raise SystemExit("numba is not importable; nothing to compare")
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<26} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for name, inputs in cases(rng).items():
        f_np, f_nb = getattr(_kernels.numpy_impl, name), getattr(_kernels.numba_impl, name)
        a, b = f_np(*inputs), f_nb(*inputs)  # also warms the jit
        np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-10)
        t_np, t_nb = best_of(f_np, inputs, args.repeat), best_of(f_nb, inputs, args.repeat)
        print(f"{name:<26} {t_np * 1e3:>10.3f} {t_nb * 1e3:>10.3f} {t_np / t_nb:>7.1f}x")
    if not args.skip_end_to_end:
        end_to_end()


if __name__ == "__main__":
    main()
