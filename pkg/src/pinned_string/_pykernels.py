"""NumPy implementations of the hot loops, used when the extension is absent."""
import numpy as np


def ou_advance(modes, decay, noise_sd, normals):
    """In place: ``modes = decay * modes + noise_sd * normals`` row by row."""
    if decay.shape[0] != modes.shape[1] or noise_sd.shape[0] != modes.shape[1]:
        raise ValueError("rate vectors do not match mode count")
    if normals.shape != modes.shape:
        raise ValueError("normals shape mismatch")
    np.multiply(modes, decay, out=modes)
    modes += noise_sd * normals


def _axis_gap(p, k, cell, outer):
    if outer:
        lo = k * cell
        hi = (k + 1) * cell
        return np.where(p < lo, lo - p, np.where(p > hi, p - hi, 0.0))
    return (k + 0.5) * cell - p


def occupied_cells(pts, eps, cell, outer, bits, chunk=2048):
    """Encoded keys of lattice cells within ``eps`` of any point (unsorted, unique)."""
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    n, d = pts.shape
    if n == 0:
        return np.empty(0, dtype=np.int64)
    off = 1 << (bits - 1)
    kmin_all = np.floor((pts - eps) / cell).astype(np.int64)
    kmax_all = np.floor((pts + eps) / cell).astype(np.int64)
    if kmin_all.min() < -off or kmax_all.max() >= off:
        raise OverflowError("cell index exceeds key range; use a coarser cell")
    width = int((kmax_all - kmin_all).max()) + 1
    grids = np.stack(np.meshgrid(*[np.arange(width)] * d, indexing="ij"), axis=-1).reshape(-1, d)
    eps2 = eps * eps
    found = []
    for a in range(0, n, chunk):
        p = pts[a:a + chunk]
        kmin = kmin_all[a:a + chunk]
        kmax = kmax_all[a:a + chunk]
        k = kmin[:, None, :] + grids[None, :, :]
        inside = np.all(k <= kmax[:, None, :], axis=-1)
        s = np.zeros(k.shape[:2])
        for ax in range(d):
            g = _axis_gap(p[:, None, ax], k[:, :, ax], cell, outer)
            s = s + g * g
        keep = inside & (s < eps2)
        kk = k[keep]
        key = np.zeros(kk.shape[0], dtype=np.int64)
        for ax in range(d):
            key |= (kk[:, ax] + off) << (bits * ax)
        found.append(np.unique(key))
    return np.unique(np.concatenate(found))
