"""Backend selection for the hot loops.

The compiled extension ``_ckernels`` is used when it imports; otherwise the
NumPy versions in ``_pykernels`` are used. Set ``PINNED_STRING_PURE=1`` to
force the NumPy path.
"""
import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels
if os.environ.get("PINNED_STRING_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _pykernels


def key_bits(d: int) -> int:
    return min(62 // d, 31)


def ou_advance(modes, decay, noise_sd, normals, impl=None):
    (impl or _impl).ou_advance(modes, decay, noise_sd, normals)


def occupied_cells(points, eps: float, cell: float, outer: bool = False, impl=None) -> np.ndarray:
    """Sorted unique keys of the lattice cells (side ``cell``, anchored at 0) near the points.

    A cell counts when its centre lies within ``eps`` of a point, or with
    ``outer=True`` when any part of it does.
    """
    if not eps > 0 or not cell > 0:
        raise ValueError("eps and cell must be positive")
    pts = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
    keys = (impl or _impl).occupied_cells(pts, float(eps), float(cell), int(bool(outer)), key_bits(pts.shape[1]))
    keys.sort()
    return keys


def polyline_distance(points, z) -> float:
    """Distance from ``z`` to the piecewise-linear path through ``points``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    z = np.asarray(z, dtype=float)
    if pts.shape[0] == 1:
        return float(np.linalg.norm(pts[0] - z))
    a, b = pts[:-1], pts[1:]
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    t = np.einsum("ij,ij->i", z - a, ab)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(denom > 0, t / denom, 0.0)
    t = np.clip(t, 0.0, 1.0)
    closest = a + t[:, None] * ab
    diff = closest - z
    return float(np.sqrt(np.einsum("ij,ij->i", diff, diff).min()))


def min_pair_distance(a, b) -> float:
    """``min_{i,j} |b_j - a_i|`` over two point sets."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    diff = b[None, :, :] - a[:, None, :]
    return float(np.sqrt(np.einsum("ijk,ijk->ij", diff, diff).min()))
