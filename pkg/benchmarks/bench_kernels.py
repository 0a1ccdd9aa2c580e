"""Numba vs pure-numpy timings of the hot kernels on the full-scale workload.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--seed 0]

Each kernel runs once per backend to warm up (and to compile), then
``--repeat`` timed runs; the best time is reported. Outputs of both backends
are compared so the benchmark doubles as an equivalence check.
"""
import argparse
import time

import numpy as np

from uwbnet import _accel, community, contact, dynamic, smooth, synthgen, trace


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def workload(seed):
    sc = synthgen.default_scenario(seed=seed)
    raw, _ = synthgen.generate(sc)
    trajs = trace.downsample_all(raw)
    return trajs


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    trajs = workload(args.seed)
    lo = min(t.t0 for t in trajs.values())
    hi = max(t.end for t in trajs.values())
    z = np.full((hi - lo, 2 * len(trajs)), np.nan)
    for i, tr in enumerate(trajs.values()):
        z[tr.t0 - lo:tr.end - lo, 2 * i:2 * i + 2] = tr.xy
    sm = smooth.smooth_all(trajs)
    table = contact.ContactTable(sm)
    pos = np.ascontiguousarray(table.positions)
    pairs = table._pair_idx
    th = np.array(contact.DEFAULT_THRESHOLDS)
    windows = dynamic.make_windows(table.start, table.end)
    bounds = np.array([w.start for w in windows] + [windows[-1].end]) - table.start
    graphs = dynamic.windowed_networks(table, 1.0)

    cases = {
        "kalman+rts": lambda use: smooth.run_kalman(z, use_numba=use)[1],
        "distances": lambda use: _accel.pick(contact._distances_numba, contact._distances_numpy, use)(pos, pairs),
        "window counts": lambda use: _accel.pick(contact._counts_numba, contact._counts_numpy, use)(
            table.distances, th, bounds),
        "communities x24": lambda use: [
            community.detect_communities(g, seed=dynamic.window_seed(0, i), use_numba=use).key()
            for i, g in enumerate(graphs)
        ],
    }
    print(f"workload: {len(trajs)} tags, {table.n_seconds} s, {len(table.pairs)} pairs, "
          f"{len(graphs)} windows, repeat={args.repeat}")
    print(f"{'kernel':<18}{'numba (s)':>12}{'numpy (s)':>12}{'speedup':>10}  equal")
    for name, fn in cases.items():
        t_nb, out_nb = best_of(lambda: fn(True), args.repeat)
        t_np, out_np = best_of(lambda: fn(False), args.repeat)
        if isinstance(out_nb, np.ndarray):
            same = np.array_equal(out_nb, out_np, equal_nan=True)
            if not same and out_nb.dtype.kind == "f":
                same = bool(np.nanmax(np.abs(out_nb - out_np)) < 1e-9)
        else:
            same = out_nb == out_np
        print(f"{name:<18}{t_nb:>12.4f}{t_np:>12.4f}{t_np / t_nb:>9.1f}x  {same}")


if __name__ == "__main__":
    main()
