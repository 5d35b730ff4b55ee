"""Benchmark the compiled integration core against the NumPy fallback.

Times the moment-integration stage (where the backends differ) and the full
operator build (integration plus shared solve/algebra stage) over the
structured meshes.

Run:  python benchmarks/bench_kernels.py [--level 6] [--repeats 3]
"""

import argparse
import time

from wgelast.kernels import available_backends, build_operators, moment_arrays
from wgelast.localops import mesh_element_arrays
from wgelast.mesh import build_square_mesh


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--level", type=int, default=6)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--degrees", default="1,2,3")
    args = ap.parse_args()

    backends = available_backends()
    mesh = build_square_mesh(args.level)
    coords, ecoords, signs = mesh_element_arrays(mesh)
    print(f"mesh level {args.level}: {mesh.n_triangles} elements; backends: {', '.join(backends)}")
    header = f"{'k':>2} {'stage':>11}" + "".join(f" {b:>12}" for b in backends)
    if len(backends) == 2:
        header += f" {'speedup':>9}"
    print(header)
    for k in [int(d) for d in args.degrees.split(",")]:
        for stage, fn in [
            ("integration", lambda b: moment_arrays(k, coords, ecoords, signs, backend=b)),
            ("full build", lambda b: build_operators(k, coords, ecoords, signs, backend=b)),
        ]:
            times = [best_of(lambda b=b: fn(b), args.repeats) for b in backends]
            row = f"{k:>2} {stage:>11}" + "".join(f" {t*1e3:>10.1f}ms" for t in times)
            if len(times) == 2:
                row += f" {times[1]/times[0]:>8.2f}x" if backends[0] == "compiled" \
                    else f" {times[0]/times[1]:>8.2f}x"
            print(row)


if __name__ == "__main__":
    main()
