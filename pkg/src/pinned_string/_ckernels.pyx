# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
# distutils: language = c++
"""Compiled hot loops. Must stay bit-compatible with ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor
from libc.stdlib cimport calloc, free
from libcpp.vector cimport vector
from libcpp.unordered_set cimport unordered_set

cnp.import_array()

DEF MAXDIM = 16
cdef long long MAX_BITMAP = 1 << 28


def ou_advance(double[:, ::1] modes, const double[::1] decay,
               const double[::1] noise_sd, const double[:, ::1] normals):
    """In place: ``modes = decay * modes + noise_sd * normals`` row by row."""
    cdef Py_ssize_t r, j, R = modes.shape[0], M = modes.shape[1]
    if decay.shape[0] != M or noise_sd.shape[0] != M:
        raise ValueError("rate vectors do not match mode count")
    if normals.shape[0] != R or normals.shape[1] != M:
        raise ValueError("normals shape mismatch")
    with nogil:
        for r in range(R):
            for j in range(M):
                modes[r, j] = decay[j] * modes[r, j] + noise_sd[j] * normals[r, j]


cdef inline double _axis_gap(double p, long long k, double cell, int outer) nogil:
    cdef double lo, hi
    if outer:
        lo = k * cell
        hi = (k + 1) * cell
        if p < lo:
            return lo - p
        if p > hi:
            return p - hi
        return 0.0
    return (k + 0.5) * cell - p


def occupied_cells(const double[:, ::1] pts, double eps, double cell, int outer, int bits):
    """Encoded keys of lattice cells within ``eps`` of any point (unsorted, unique)."""
    cdef Py_ssize_t N = pts.shape[0], d = pts.shape[1], i, a
    if d > MAXDIM:
        raise ValueError("dimension too large")
    if N == 0:
        return np.empty(0, dtype=np.int64)
    cdef long long lo[MAXDIM]
    cdef long long hi[MAXDIM]
    cdef long long kmin[MAXDIM]
    cdef long long kmax[MAXDIM]
    cdef long long k[MAXDIM]
    cdef long long stride[MAXDIM]
    cdef double ps[MAXDIM + 1]
    cdef double eps2 = eps * eps, s, g
    cdef long long off = (<long long>1) << (bits - 1)
    cdef long long total = 1, flat, key
    cdef int level
    cdef vector[long long] out
    cdef unordered_set[long long] seen
    cdef unsigned char* bitmap = NULL
    cdef int use_bitmap

    for a in range(d):
        lo[a] = <long long>floor((pts[0, a] - eps) / cell)
        hi[a] = <long long>floor((pts[0, a] + eps) / cell)
    for i in range(1, N):
        for a in range(d):
            kmin[a] = <long long>floor((pts[i, a] - eps) / cell)
            kmax[a] = <long long>floor((pts[i, a] + eps) / cell)
            if kmin[a] < lo[a]:
                lo[a] = kmin[a]
            if kmax[a] > hi[a]:
                hi[a] = kmax[a]
    for a in range(d):
        if lo[a] < -off or hi[a] >= off:
            raise OverflowError("cell index exceeds key range; use a coarser cell")
        stride[a] = total
        if total <= MAX_BITMAP:
            total *= (hi[a] - lo[a] + 1)
    use_bitmap = total <= MAX_BITMAP
    if use_bitmap:
        bitmap = <unsigned char*>calloc(total, 1)
        if bitmap == NULL:
            use_bitmap = 0

    with nogil:
        for i in range(N):
            for a in range(d):
                kmin[a] = <long long>floor((pts[i, a] - eps) / cell)
                kmax[a] = <long long>floor((pts[i, a] + eps) / cell)
            level = 0
            k[0] = kmin[0]
            ps[0] = 0.0
            while level >= 0:
                if k[level] > kmax[level]:
                    level -= 1
                    if level >= 0:
                        k[level] += 1
                    continue
                g = _axis_gap(pts[i, level], k[level], cell, outer)
                s = ps[level] + g * g
                if s >= eps2:
                    k[level] += 1
                    continue
                if level == d - 1:
                    key = 0
                    for a in range(d):
                        key = key | ((k[a] + off) << (bits * a))
                    if use_bitmap:
                        flat = 0
                        for a in range(d):
                            flat += (k[a] - lo[a]) * stride[a]
                        if bitmap[flat] == 0:
                            bitmap[flat] = 1
                            out.push_back(key)
                    else:
                        if seen.find(key) == seen.end():
                            seen.insert(key)
                            out.push_back(key)
                    k[level] += 1
                else:
                    ps[level + 1] = s
                    level += 1
                    k[level] = kmin[level]
    if bitmap != NULL:
        free(bitmap)
    res = np.empty(out.size(), dtype=np.int64)
    cdef long long[::1] rv = res
    for i in range(<Py_ssize_t>out.size()):
        rv[i] = out[i]
    return res
