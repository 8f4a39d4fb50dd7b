"""Time the compiled kernels against their pure-Python twins.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import math
import sys
import timeit

import numpy as np

from bgload import _kernels_py as py

try:
    from bgload import _ckernels as cy
except ImportError:
    cy = None


def cases(rng):
    # a busy PM: a few dozen flows, some uncapped
    demands = [math.inf if rng.random() < 0.3 else float(rng.uniform(0.1, 4.0)) for _ in range(40)]
    yield "maxmin_share (40 flows)", lambda m: m.maxmin_share(32.0, demands), 2000

    n = 26
    ex = rng.uniform(50, 500, n)
    obs = ex * rng.uniform(1.0, 1.6, (2000, n))
    ks = np.arange(1, n + 1)
    yield "batch_errors (2000 runs x 26 k)", lambda m: m.batch_errors(py.MAPE, ex, obs, ks), 1

    ts = np.sort(rng.choice(10_000_000, 2000, replace=False)).astype(float)
    past = rng.uniform(0, 50, ts.size)
    members = sorted(rng.choice(ts, 20, replace=False).tolist())
    eprime = rng.uniform(0, 50, 20).tolist()
    xs = rng.uniform(0, 9_000_000, 32).tolist()
    ts_l, past_l = ts.tolist(), past.tolist()
    yield "phi_batch (32 offsets x 20 members)", lambda m: m.phi_batch(
        xs, members, eprime, ts_l, past_l, members[0], 500.0), 200


def best(fn, number, repeat):
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if cy is None:
        print("compiled kernels are not built; only the Python timings are shown", file=sys.stderr)
    print(f"{'kernel':<38} {'python':>12} {'cython':>12} {'speedup':>8}")
    for name, call, number in cases(np.random.default_rng(args.seed)):
        t_py = best(lambda: call(py), number, args.repeat)
        if cy is None:
            print(f"{name:<38} {t_py * 1e6:>10.1f}us {'-':>12} {'-':>8}")
            continue
        t_cy = best(lambda: call(cy), number, args.repeat)
        print(f"{name:<38} {t_py * 1e6:>10.1f}us {t_cy * 1e6:>10.1f}us {t_py / t_cy:>7.1f}x")


if __name__ == "__main__":
    main()
