"""Compare the numba and numpy kernel backends on model-shaped workloads.

Usage: python3 benchmarks/bench_kernels.py [--repeats N]

Reports the minimum and median wall time per kernel for both backends at
sizes matching a training batch of the default model (batch 512, 32 graph
nodes, 30-sample windows).  Timing on shared machines is noisy; the minimum
is the most stable estimate of the achievable cost.
"""

import argparse
import time

import numpy as np

from htgnn import _kernels_numpy as knp

try:
    from htgnn import _kernels_numba as knb
except ImportError:
    knb = None


def timeit(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times), sorted(times)[len(times) // 2]


def workloads(rng):
    batch, nodes, window, hidden = 512, 32, 30, 80
    edges = batch * 120  # flattened batched edge list
    rows = batch * 20    # GRU rows: one per temperature node
    gh = 10              # GRU hidden width

    vals2 = rng.normal(size=(edges, hidden))
    ids = rng.integers(0, batch * nodes, size=edges)
    vals1 = rng.normal(size=edges)
    src = rng.integers(0, batch * nodes, size=edges)
    dst = rng.integers(0, batch * nodes, size=edges)
    scale = rng.normal(size=edges)
    gout = rng.normal(size=(batch * nodes, hidden))
    gcols = rng.normal(size=(batch, window, nodes, 5))
    x = rng.normal(size=(rows, window))
    h0 = rng.normal(size=(rows, gh))
    gru_w = [rng.normal(size=s) * 0.3
             for s in [(1, gh), (gh, gh), (gh,)] * 3]
    gfinal = rng.normal(size=(rows, gh))

    n_seg = batch * nodes
    yield "segment_sum_2d", lambda k: k.segment_sum_2d(vals2, ids, n_seg)
    yield "segment_sum_1d", lambda k: k.segment_sum_1d(vals1, ids, n_seg)
    yield "segment_max_1d", lambda k: k.segment_max_1d(vals1, ids, n_seg)
    yield "weighted_scatter", lambda k: k.weighted_scatter(
        gout, src, dst, scale, n_seg)
    yield "weighted_scatter_scale_grad", lambda k: (
        k.weighted_scatter_scale_grad(gout, gout, src, dst))
    yield "col2im_add", lambda k: k.col2im_add(gcols, window + 4)

    def gru_fwd(k):
        return k.gru_forward(x, h0, *gru_w)

    yield "gru_forward", gru_fwd
    fwd = knp.gru_forward(x, h0, *gru_w)
    wz, uz, _, wr, ur, _, wc, uc, _ = gru_w
    yield "gru_backward", lambda k: k.gru_backward(
        x, *fwd, wz, uz, wr, ur, wc, uc, gfinal)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=7)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    backends = [("numpy", knp)] + ([("numba", knb)] if knb else [])
    if knb is None:
        print("numba unavailable; benchmarking numpy only")

    print(f"{'kernel':<28} " + " ".join(
        f"{name + ' min':>12} {name + ' med':>12}" for name, _ in backends))
    for name, fn in workloads(rng):
        for _, mod in backends:
            fn(mod)  # warm up (numba compiles on first call)
        cells = []
        for _, mod in backends:
            lo, med = timeit(lambda: fn(mod), args.repeats)
            cells.append(f"{lo * 1e3:>10.2f}ms {med * 1e3:>10.2f}ms")
        print(f"{name:<28} " + " ".join(cells))


if __name__ == "__main__":
    main()
