"""Console entry point.

Applies the LTE_THREADS cap to the BLAS thread pools before numpy is
imported, then hands off to the CLI.  Library code never spawns threads of
its own, so this cap is the only parallelism control needed for
reproducible runs.
"""

import os
import sys


def main(argv=None):
    threads = os.environ.get("LTE_THREADS", "").strip()
    if threads:
        try:
            n = int(threads)
            if n < 1:
                raise ValueError
        except ValueError:
            sys.stderr.write(f"ERROR: LTE_THREADS must be a positive integer, got {threads!r}\n")
            return 2
        for var in (
            "OMP_NUM_THREADS",
            "OPENBLAS_NUM_THREADS",
            "MKL_NUM_THREADS",
            "NUMEXPR_NUM_THREADS",
        ):
            os.environ.setdefault(var, str(n))

    from ltecorr.cli import run

    return run(argv)


if __name__ == "__main__":
    sys.exit(main())
