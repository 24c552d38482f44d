"""Time the compiled kernels against the NumPy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Each kernel is run on identical inputs through both backends; the script
prints the median wall time per call, the speed-up, and the largest output
difference so that parity is visible next to the timing.
"""
import argparse
import statistics
import time

import numpy as np

from multires import _kernels_py as py

try:
    from multires import _kernels as cy
except ImportError:
    cy = None


def _inputs():
    rng = np.random.default_rng(0)
    # Bell-basis spectrum of a two-qubit state and the four F_css vertices
    r = rng.dirichlet(np.ones(4))
    verts = np.array([[0.5, 0.5, 0, 0], [0.5, 0, 0.5, 0], [0.5, 0, 0, 0.5]], dtype=float)
    w0 = np.full(3, 1 / 3)
    mu = np.sort(rng.uniform(0.01, 1.0, 16))
    return {
        "loewner_log2(d=16)": (lambda k: k.loewner_log2(mu)),
        "simplex_grid_kl_min(res=200)": (lambda k: k.simplex_grid_kl_min(r, verts, 200)[0]),
        "binary_entropy_upper_inverse": (lambda k: k.binary_entropy_upper_inverse(0.73, 1e-12)),
        "classical_pairwise_fw": (lambda k: k.classical_pairwise_fw(r, verts, w0, 1e-12, 1000)[1]),
    }


def _time(fn, repeat):
    out = fn()
    samples = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t)
    return statistics.median(samples), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=50)
    args = ap.parse_args(argv)
    if cy is None:
        print("compiled extension not built; timing the fallback only")
    print(f"{'kernel':32s} {'python [ms]':>12s} {'cython [ms]':>12s} {'speed-up':>9s} {'max diff':>10s}")
    for name, call in _inputs().items():
        tp, op = _time(lambda: call(py), args.repeat)
        if cy is None:
            print(f"{name:32s} {tp * 1e3:12.4f}")
            continue
        tc, oc = _time(lambda: call(cy), args.repeat)
        diff = float(np.max(np.abs(np.asarray(op, float) - np.asarray(oc, float))))
        print(f"{name:32s} {tp * 1e3:12.4f} {tc * 1e3:12.4f} {tp / tc:9.1f}x {diff:10.2e}")


if __name__ == "__main__":
    main()
