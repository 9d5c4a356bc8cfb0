"""Compare the compiled kernel backend against the numpy fallback.

Times the four hot kernels at a few problem sizes and prints per-kernel
medians plus the speedup.  Run from the repository root:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --sizes 128,1024 --repeats 30

The compiled extension is required; install the package first so both
backends are importable.
"""

import argparse
import importlib
import sys
import time

import numpy as np

from ltecorr._kernels import numpy_impl

try:
    from ltecorr._kernels import _core
except ImportError:
    print(
        "the compiled extension ltecorr._kernels._core is not built; "
        "run pip install -e . --no-build-isolation first",
        file=sys.stderr,
    )
    raise SystemExit(1)


def _median_seconds(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def _cases(n, d, k, rng):
    """(name, callable) per kernel at cloud size n, feature width d."""
    a = rng.normal(size=(n, 3))
    b = rng.normal(size=(n, 3))
    h = rng.normal(size=(n, d))
    idx = np.ascontiguousarray(
        rng.integers(0, n, size=(n, k), dtype=np.int64)
    )
    g = rng.normal(size=(n, k, 2 * d))
    src = rng.normal(size=(n * k, d))
    flat_idx = np.ascontiguousarray(idx.reshape(-1))
    return [
        ("pairwise_sqdist", lambda impl: impl.pairwise_sqdist(a, b)),
        ("edge_features", lambda impl: impl.edge_features(h, idx)),
        ("edge_features_grad", lambda impl: impl.edge_features_grad(g, idx)),
        ("scatter_add_rows", lambda impl: impl.scatter_add_rows(flat_idx, src, n)),
    ]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument(
        "--sizes", default="128,512,1024",
        help="comma-separated cloud sizes (default 128,512,1024)",
    )
    ap.add_argument("--dim", type=int, default=64, help="feature width (default 64)")
    ap.add_argument("--k", type=int, default=10, help="neighbors per point (default 10)")
    ap.add_argument("--repeats", type=int, default=20, help="timing repeats (default 20)")
    args = ap.parse_args(argv)

    sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    rng = np.random.default_rng(0)

    header = f"{'kernel':<20} {'n':>6} {'python':>12} {'compiled':>12} {'speedup':>9}"
    print(header)
    print("-" * len(header))
    for n in sizes:
        for name, call in _cases(n, args.dim, args.k, rng):
            # agreement check before timing
            ref = call(numpy_impl)
            got = call(_core)
            if not np.allclose(ref, got, rtol=0, atol=1e-12):
                print(f"MISMATCH in {name} at n={n}", file=sys.stderr)
                return 1
            t_py = _median_seconds(lambda: call(numpy_impl), args.repeats)
            t_c = _median_seconds(lambda: call(_core), args.repeats)
            print(
                f"{name:<20} {n:>6} {t_py * 1e3:>10.3f}ms {t_c * 1e3:>10.3f}ms "
                f"{t_py / t_c:>8.2f}x"
            )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
