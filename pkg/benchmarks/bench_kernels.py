"""Compare the compiled kernels against the pure-Python fallback.

Run with ``python3 benchmarks/bench_kernels.py``.  Prints one line per
kernel with median wall times and the largest output difference.
"""
import argparse
import timeit

import numpy as np

from mg1kit import _kernels_py
from mg1kit.oracle import _map_tables
from mg1kit.presets import mp2_map
from mg1kit.mapg1 import Exponential

try:
    from mg1kit import _kernels as _compiled
except ImportError:
    _compiled = None


def _cases(rng, n):
    P = rng.random((n, n))
    P /= P.sum(axis=1, keepdims=True)
    X = rng.random((4, 4)) / 8
    coeffs = rng.random((60, 4, 4))
    c = rng.random((400, 2))
    R = rng.random((30, 2, 2)) / 40
    mp = mp2_map()
    cum, rates, arr = _map_tables(mp)
    kind, params, ph_cum, ph_rates = Exponential(4.0).sampler()

    def sim(mod):
        bg = np.random.Philox(1)
        return np.asarray(mod.simulate_queue(bg, cum, rates, arr, 0, 11, 200_000, 10,
                                             kind, params, ph_cum, ph_rates)[1], float)

    return {
        "gth": lambda mod: mod.gth(P)[0],
        "horner_right": lambda mod: mod.horner_right(coeffs, X),
        "ramaswami": lambda mod: mod.ramaswami(c, R),
        "simulate_queue": sim,
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=200, help="GTH matrix order")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _compiled is None:
        print("compiled extension not built; only the fallback is timed")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<16}{'python [ms]':>14}{'cython [ms]':>14}{'speedup':>10}{'max diff':>12}")
    for name, fn in _cases(rng, args.n).items():
        t_py = min(timeit.repeat(lambda: fn(_kernels_py), number=1, repeat=args.repeat))
        if _compiled is None:
            print(f"{name:<16}{1e3 * t_py:14.2f}{'-':>14}{'-':>10}{'-':>12}")
            continue
        t_c = min(timeit.repeat(lambda: fn(_compiled), number=1, repeat=args.repeat))
        diff = float(np.abs(fn(_kernels_py) - fn(_compiled)).max())
        print(f"{name:<16}{1e3 * t_py:14.2f}{1e3 * t_c:14.2f}{t_py / t_c:10.1f}{diff:12.2e}")


if __name__ == "__main__":
    main()
