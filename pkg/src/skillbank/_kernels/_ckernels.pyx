# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels; see _pykernels for the contracts."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, NAN

cnp.import_array()

cdef double MIN_DEPTH = 1e-6


def cosine_scores(matrix, query):
    cdef double[:, ::1] m = np.ascontiguousarray(matrix, dtype=np.float64)
    cdef double[::1] q = np.ascontiguousarray(query, dtype=np.float64)
    cdef Py_ssize_t n = m.shape[0], d = m.shape[1], i, k
    out = np.zeros(n)
    cdef double[::1] o = out
    cdef double qn = 0.0, dot, rn, denom
    for k in range(q.shape[0]):
        qn += q[k] * q[k]
    qn = sqrt(qn)
    for i in range(n):
        dot = 0.0
        rn = 0.0
        for k in range(d):
            dot += m[i, k] * q[k]
            rn += m[i, k] * m[i, k]
        denom = sqrt(rn) * qn
        if denom > 0:
            o[i] = dot / denom
    return out


cdef inline void _to_camera(double[:, ::1] e, double x, double y, double z,
                            double* cx_, double* cy_, double* cz_) nogil:
    cx_[0] = e[0, 0] * x + e[0, 1] * y + e[0, 2] * z + e[0, 3]
    cy_[0] = e[1, 0] * x + e[1, 1] * y + e[1, 2] * z + e[1, 3]
    cz_[0] = e[2, 0] * x + e[2, 1] * y + e[2, 2] * z + e[2, 3]


def project_points(double fx, double fy, double cx, double cy, extrinsic, points):
    cdef double[:, ::1] e = np.ascontiguousarray(extrinsic, dtype=np.float64)
    cdef double[:, ::1] p = np.ascontiguousarray(
        np.asarray(points, dtype=np.float64).reshape(-1, 3))
    cdef Py_ssize_t n = p.shape[0], i
    uv_arr = np.empty((n, 2))
    z_arr = np.empty(n)
    cdef double[:, ::1] uv = uv_arr
    cdef double[::1] zs = z_arr
    cdef double X, Y, Z
    for i in range(n):
        _to_camera(e, p[i, 0], p[i, 1], p[i, 2], &X, &Y, &Z)
        zs[i] = Z
        if Z > MIN_DEPTH:
            uv[i, 0] = fx * X / Z + cx
            uv[i, 1] = fy * Y / Z + cy
        else:
            uv[i, 0] = NAN
            uv[i, 1] = NAN
    return uv_arr, z_arr


def out_of_view(double fx, double fy, double cx, double cy, double width,
                double height, extrinsic, points):
    cdef double[:, ::1] e = np.ascontiguousarray(extrinsic, dtype=np.float64)
    cdef double[:, ::1] p = np.ascontiguousarray(
        np.asarray(points, dtype=np.float64).reshape(-1, 3))
    cdef Py_ssize_t n = p.shape[0], i
    cdef double X, Y, Z, u, v
    for i in range(n):
        _to_camera(e, p[i, 0], p[i, 1], p[i, 2], &X, &Y, &Z)
        if Z <= MIN_DEPTH:
            return True
        u = fx * X / Z + cx
        v = fy * Y / Z + cy
        if u < 0 or u >= width or v < 0 or v >= height:
            return True
    return False


def longest_stationary_span(times, positions, double eps):
    cdef double[::1] t = np.ascontiguousarray(times, dtype=np.float64)
    cdef double[:, ::1] p = np.ascontiguousarray(
        np.asarray(positions, dtype=np.float64).reshape(-1, 3))
    cdef Py_ssize_t n = t.shape[0], i, start = -1
    cdef double best = 0.0, dx, dy, dz, span
    for i in range(n - 1):
        dx = p[i + 1, 0] - p[i, 0]
        dy = p[i + 1, 1] - p[i, 1]
        dz = p[i + 1, 2] - p[i, 2]
        if sqrt(dx * dx + dy * dy + dz * dz) < eps:
            if start < 0:
                start = i
            span = t[i + 1] - t[start]
            if span > best:
                best = span
        else:
            start = -1
    return best


cdef inline void _matmul3(double* a, double* b, double* out, bint ta, bint tb) nogil:
    # out = op(a) @ op(b) for row-major 3x3, op = transpose when flagged
    cdef int i, j, k
    cdef double s, x, y
    for i in range(3):
        for j in range(3):
            s = 0.0
            for k in range(3):
                x = a[k * 3 + i] if ta else a[i * 3 + k]
                y = b[j * 3 + k] if tb else b[k * 3 + j]
                s += x * y
            out[i * 3 + j] = s


def transfer_orientations(r_src, frames_src, frames_tgt):
    cdef double[:, :, ::1] r = np.ascontiguousarray(
        np.asarray(r_src, dtype=np.float64).reshape(-1, 3, 3))
    cdef double[:, :, ::1] fs = np.ascontiguousarray(
        np.asarray(frames_src, dtype=np.float64).reshape(-1, 3, 3))
    cdef double[:, :, ::1] ft = np.ascontiguousarray(
        np.asarray(frames_tgt, dtype=np.float64).reshape(-1, 3, 3))
    cdef Py_ssize_t n = r.shape[0], i
    out_arr = np.empty((n, 3, 3))
    cdef double[:, :, ::1] out = out_arr
    cdef double t1[9]
    cdef double t2[9]
    for i in range(n):
        _matmul3(&fs[i, 0, 0], &r[i, 0, 0], t1, True, False)   # Fs^T R
        _matmul3(t1, &fs[i, 0, 0], t2, False, False)           # (Fs^T R) Fs
        _matmul3(&ft[i, 0, 0], t2, t1, False, False)           # Ft skill
        _matmul3(t1, &ft[i, 0, 0], &out[i, 0, 0], False, True) # (Ft skill) Ft^T
    return out_arr
