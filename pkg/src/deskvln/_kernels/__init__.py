"""Hot kernels: compiled extension when available, pure-Python fallback otherwise.

Set DESKVLN_PURE=1 to force the fallback.  Both implementations are kept
operation-for-operation identical so they produce bit-equal floats;
benchmarks/bench_kernels.py compares their speed.
"""
from __future__ import annotations

import os

if os.environ.get("DESKVLN_PURE"):
    from deskvln._kernels import _fallback as _impl

    BACKEND = "pure"
else:
    try:
        from deskvln._kernels import _core as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:  # extension not built
        from deskvln._kernels import _fallback as _impl  # type: ignore[no-redef]

        BACKEND = "pure"

distance_field = _impl.distance_field
plan_path = _impl.plan_path
dtw_total = _impl.dtw_total

__all__ = ["BACKEND", "distance_field", "plan_path", "dtw_total"]
