"""Numpy implementations of the compiled kernels (same semantics, slower)."""
import numpy as np

# points per broadcast chunk in nearest_site; bounds the temporary n x m matrix
_CHUNK = 4096


def nearest_site(px, py, sx, sy, period=0.0):
    px = np.ascontiguousarray(px, dtype=float)
    py = np.ascontiguousarray(py, dtype=float)
    sx = np.ascontiguousarray(sx, dtype=float)
    sy = np.ascontiguousarray(sy, dtype=float)
    out = np.empty(px.shape[0], dtype=np.intp)
    if sx.shape[0] == 0:
        out.fill(-1)
        return out
    for start in range(0, px.shape[0], _CHUNK):
        dx = px[start:start + _CHUNK, None] - sx[None, :]
        dy = py[start:start + _CHUNK, None] - sy[None, :]
        if period > 0.0:
            dx = dx - period * np.floor(dx / period + 0.5)
            dy = dy - period * np.floor(dy / period + 0.5)
        out[start:start + _CHUNK] = np.argmin(dx * dx + dy * dy, axis=1)
    return out


def lens_area(r, y, x):
    w1 = r * r + y * y - x * x
    w2 = x * x + y * y - r * r
    c1 = np.clip(w1 / (2.0 * y * r), -1.0, 1.0)
    c2 = np.clip(w2 / (2.0 * y * x), -1.0, 1.0)
    disc = np.maximum(4.0 * y * y * x * x - w2 * w2, 0.0)
    return r * r * np.arccos(c1) + x * x * np.arccos(c2) - 0.5 * np.sqrt(disc)


def lens_area_dr(r, y, x):
    c1 = np.clip((r * r + y * y - x * x) / (2.0 * y * r), -1.0, 1.0)
    return 2.0 * r * np.arccos(c1)
