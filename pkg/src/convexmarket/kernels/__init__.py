"""Hot numerical kernels.

The compiled extension is used when it was built at install time; otherwise the
pure-Python implementation is selected. Set ``CONVEXMARKET_PURE_PYTHON=1`` to
force the fallback (useful for benchmarking and for debugging).
"""

import os

import numpy as np

from . import _fallback

if os.environ.get("CONVEXMARKET_PURE_PYTHON") == "1":
    _compiled = None
else:
    try:
        from . import _dykstra as _compiled
    except ImportError:
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"


def dykstra_box_slabs(y, lo, hi, indptr, indices, data, slo, shi,
                      max_sweeps=50_000, tol=1e-10, backend=None):
    """Dykstra's alternating projections onto ``{lo <= x <= hi} ∩ {slo <= A x <= shi}``.

    ``A`` is given in CSR form (``indptr``, ``indices``, ``data``). Returns
    ``(x, sweeps, converged)``; convergence means the iterate moved less than
    ``tol`` (max-norm) over a full sweep.
    """
    backend = backend or BACKEND
    args = (
        np.ascontiguousarray(y, dtype=np.float64),
        np.ascontiguousarray(lo, dtype=np.float64),
        np.ascontiguousarray(hi, dtype=np.float64),
        np.ascontiguousarray(indptr, dtype=np.int64),
        np.ascontiguousarray(indices, dtype=np.int64),
        np.ascontiguousarray(data, dtype=np.float64),
        np.ascontiguousarray(slo, dtype=np.float64),
        np.ascontiguousarray(shi, dtype=np.float64),
        int(max_sweeps),
        float(tol),
    )
    if backend == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available in this install")
        return _compiled.dykstra_box_slabs(*args)
    if backend == "python":
        return _fallback.dykstra_box_slabs(*args)
    raise ValueError(f"unknown backend {backend!r}")


__all__ = ["BACKEND", "dykstra_box_slabs"]
