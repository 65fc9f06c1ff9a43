"""Hot-kernel backend selection.

The compiled Cython core is preferred; the numpy reference implementation is
the fallback. Set ``VESSELMARK_FORCE_PYTHON=1`` to force the fallback (used by
the benchmark suite to compare backends).
"""

import os

if os.environ.get("VESSELMARK_FORCE_PYTHON"):
    from vesselmark._kernels import reference as _impl

    BACKEND = "python"
else:
    try:
        from vesselmark._kernels import _core as _impl

        BACKEND = "compiled"
    except ImportError:
        from vesselmark._kernels import reference as _impl

        BACKEND = "python"

trilinear_gather = _impl.trilinear_gather
sphere_accumulate = _impl.sphere_accumulate
flood_frontier = _impl.flood_frontier

__all__ = ["BACKEND", "trilinear_gather", "sphere_accumulate", "flood_frontier"]
