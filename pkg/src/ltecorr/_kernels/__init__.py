"""Numeric kernels with a compiled fast path and a numpy fallback.

The compiled extension ``ltecorr._kernels._core`` (Cython) implements the
hot inner loops.  ``numpy_impl`` provides the same operations in pure
numpy.  One backend is selected when this package is imported:

* ``LTE_KERNELS=auto`` (default): compiled if built, else numpy
* ``LTE_KERNELS=compiled``: compiled, ImportError if the extension is missing
* ``LTE_KERNELS=python``: force the numpy fallback

``benchmarks/bench_kernels.py`` compares the two.
"""

import os

from . import numpy_impl

_requested = os.environ.get("LTE_KERNELS", "auto").strip().lower()
if _requested not in ("auto", "compiled", "python"):
    raise ValueError(
        f"unrecognized LTE_KERNELS value {_requested!r}; "
        "expected auto, compiled or python"
    )

_impl = None
if _requested in ("auto", "compiled"):
    try:
        from . import _core as _impl
    except ImportError:
        if _requested == "compiled":
            raise ImportError(
                "LTE_KERNELS=compiled but the ltecorr._kernels._core "
                "extension is not built; run pip install -e . or "
                "python setup.py build_ext --inplace"
            ) from None
if _impl is None:
    _impl = numpy_impl

pairwise_sqdist = _impl.pairwise_sqdist
scatter_add_rows = _impl.scatter_add_rows
edge_features = _impl.edge_features
edge_features_grad = _impl.edge_features_grad


def backend_name():
    """Name of the active kernel backend: 'compiled' or 'python'."""
    return "python" if _impl is numpy_impl else "compiled"
