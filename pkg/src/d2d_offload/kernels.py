"""Backend selection for the hot kernels.

The Cython build (``_ckernels``) is used when importable; otherwise the numpy
versions in ``_pykernels`` are used. Setting ``D2D_OFFLOAD_KERNELS=python``
forces the fallback, which the benchmark and the cross-backend tests rely on.
"""
import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels
if os.environ.get("D2D_OFFLOAD_KERNELS", "").lower() != "python":
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        pass

__all__ = ["BACKEND", "nearest_site", "lens_area", "lens_area_dr"]


def nearest_site(px, py, sx, sy, period=0.0):
    """Index into the site arrays of the site nearest each point."""
    return _impl.nearest_site(
        np.ascontiguousarray(px, dtype=float),
        np.ascontiguousarray(py, dtype=float),
        np.ascontiguousarray(sx, dtype=float),
        np.ascontiguousarray(sy, dtype=float),
        float(period),
    )


def _flat3(r, y, x):
    r, y, x = np.broadcast_arrays(
        np.asarray(r, dtype=float), np.asarray(y, dtype=float), np.asarray(x, dtype=float)
    )
    shape = r.shape
    return shape, (np.ascontiguousarray(a).ravel() for a in (r, y, x))


def lens_area(r, y, x):
    """Vectorized lens area, no regime checks (arguments clamped)."""
    shape, (rf, yf, xf) = _flat3(r, y, x)
    return np.asarray(_impl.lens_area(rf, yf, xf)).reshape(shape)


def lens_area_dr(r, y, x):
    """Vectorized d(lens area)/dr = 2 r arccos(omega_1 / (2 y r))."""
    shape, (rf, yf, xf) = _flat3(r, y, x)
    return np.asarray(_impl.lens_area_dr(rf, yf, xf)).reshape(shape)
