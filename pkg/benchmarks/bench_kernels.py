"""Compare the compiled and pure-numpy kernel backends.

Times the three hot kernels on training-shaped inputs and reports the best
of --repeats runs per backend, plus a cross-backend agreement check. The
numba path pays a one-off JIT cost that a warmup call absorbs.

Usage: python benchmarks/bench_kernels.py [--rows 20000] [--dim 512]
       [--prompts 16] [--classes 100] [--repeats 5]
"""

import argparse
import time

import numpy as np

from promptgeo import kernels
from promptgeo.subspace import PromptMatrix, gram_inverse


def make_inputs(rows, dim, prompts, classes, seed=0):
    rng = np.random.default_rng(seed)
    F = rng.standard_normal((rows, dim))
    G = rng.standard_normal((classes, dim))
    G /= np.linalg.norm(G, axis=1)[:, None]
    pm = PromptMatrix(rng.standard_normal((dim, prompts)), epsilon=1e-4)
    Ginv = gram_inverse(pm)
    mask = rng.random(rows) < 0.5
    return F, G, pm.W, Ginv, mask


def bench_one(fn, repeats):
    fn()  # warmup: JIT compile + allocator
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rows", type=int, default=20_000)
    ap.add_argument("--dim", type=int, default=512)
    ap.add_argument("--prompts", type=int, default=16)
    ap.add_argument("--classes", type=int, default=100)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    F, G, W, Ginv, mask = make_inputs(args.rows, args.dim, args.prompts, args.classes)
    cases = {
        "cosine_softmax": lambda: kernels.cosine_softmax(F, G, 0.01),
        "project_rows": lambda: kernels.project_rows(F, W, Ginv),
        "ratio_terms": lambda: kernels.ratio_terms(F, W, Ginv, mask, 1e-12, False),
    }

    backends = kernels.available_backends()
    print(f"rows={args.rows} dim={args.dim} prompts={args.prompts} "
          f"classes={args.classes} repeats={args.repeats}")
    print(f"backends: {', '.join(backends)}\n")

    times = {}
    outputs = {}
    for backend in backends:
        kernels.set_backend(backend)
        for name, fn in cases.items():
            times[(backend, name)] = bench_one(fn, args.repeats)
        outputs[backend] = {
            "cosine_softmax": kernels.cosine_softmax(F, G, 0.01),
            "project_rows": kernels.project_rows(F, W, Ginv),
        }
    kernels.set_backend(None)

    header = f"{'kernel':<16}" + "".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'ratio':>10}"
    print(header)
    for name in cases:
        row = f"{name:<16}"
        vals = [times[(b, name)] for b in backends]
        row += "".join(f"{v * 1e3:>10.2f}ms" for v in vals)
        if len(vals) == 2:
            row += f"{vals[1] / vals[0]:>10.2f}"
        print(row)

    if len(backends) == 2:
        a, b = backends
        for name in ("cosine_softmax", "project_rows"):
            drift = float(np.max(np.abs(outputs[a][name] - outputs[b][name])))
            print(f"\nmax |{a} - {b}| for {name}: {drift:.2e}")


if __name__ == "__main__":
    main()
