"""Time the compiled kernels against the numpy fallback.

Each backend runs in its own interpreter because the choice is fixed at import
(``D2D_OFFLOAD_KERNELS=python`` forces the fallback)::

    python3 benchmarks/bench_kernels.py            # both backends
    python3 benchmarks/bench_kernels.py --child    # current backend only
"""
import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np


def _cases():
    rng = np.random.default_rng(0)
    n = 200_000
    x = rng.uniform(50, 300, n)
    y = rng.uniform(1.0, x)
    r = rng.uniform(np.abs(x - y), x + y)
    px, py = rng.uniform(-2000, 2000, (2, 20_000))
    sx, sy = rng.uniform(-2500, 2500, (2, 400))
    return r, y, x, px, py, sx, sy


def child(repeat):
    from d2d_offload import kernels

    r, y, x, px, py, sx, sy = _cases()
    jobs = {
        "lens_area (2e5)": lambda: kernels.lens_area(r, y, x),
        "lens_area_dr (2e5)": lambda: kernels.lens_area_dr(r, y, x),
        "nearest_site (2e4 x 400)": lambda: kernels.nearest_site(px, py, sx, sy),
        "nearest_site torus (2e4 x 400)": lambda: kernels.nearest_site(px, py, sx, sy, 5000.0),
    }
    out = {"backend": kernels.BACKEND}
    for name, fn in jobs.items():
        fn()
        out[name] = min(timeit.repeat(fn, number=1, repeat=repeat))
    # results must agree across backends; report a checksum
    out["checksum"] = float(np.sum(kernels.lens_area(r, y, x))) + float(np.sum(kernels.nearest_site(px, py, sx, sy)))
    print(json.dumps(out))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--child", action="store_true")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if args.child:
        child(args.repeat)
        return
    res = {}
    for forced in ("", "python"):
        env = dict(os.environ, D2D_OFFLOAD_KERNELS=forced)
        p = subprocess.run([sys.executable, __file__, "--child", "--repeat", str(args.repeat)],
                           env=env, capture_output=True, text=True, check=True)
        d = json.loads(p.stdout)
        res[d["backend"]] = d
    if len(res) < 2:
        print(f"only the {next(iter(res))} backend is available")
    names = [k for k in next(iter(res.values())) if k not in ("backend", "checksum")]
    cy, py = res.get("cython"), res["python"]
    print(f"{'kernel':34s} {'cython ms':>10s} {'python ms':>10s} {'speedup':>8s}")
    for k in names:
        c = cy[k] * 1e3 if cy else float("nan")
        print(f"{k:34s} {c:10.2f} {py[k] * 1e3:10.2f} {py[k] * 1e3 / c:8.1f}x")
    if cy:
        rel = abs(cy["checksum"] - py["checksum"]) / abs(py["checksum"])
        print(f"checksum relative difference: {rel:.1e}")


if __name__ == "__main__":
    main()
