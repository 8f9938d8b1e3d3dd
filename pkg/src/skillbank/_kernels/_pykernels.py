"""Pure-Python (numpy) implementations of the hot kernels.

Signatures and semantics match ``_ckernels.pyx`` exactly; the test-suite
runs both against the same oracles.
"""

from __future__ import annotations

import numpy as np

MIN_DEPTH = 1e-6


def cosine_scores(matrix, query):
    """Cosine similarity of every row of ``matrix`` (n, D) with ``query`` (D,).

    Rows or queries with zero norm score 0. Each row is reduced on its own
    (no BLAS gemv), so identical rows always get bit-identical scores and
    ranking ties stay ties.
    """
    m = np.asarray(matrix, dtype=np.float64)
    q = np.asarray(query, dtype=np.float64)
    if m.shape[0] == 0:
        return np.zeros(0)
    dots = (m * q).sum(axis=1)
    norms = np.sqrt((m * m).sum(axis=1)) * np.sqrt((q * q).sum())
    out = np.zeros(m.shape[0])
    nz = norms > 0
    out[nz] = dots[nz] / norms[nz]
    return out


def project_points(fx, fy, cx, cy, extrinsic, points):
    """Project world points through a pinhole camera.

    Returns ``(uv, depth)``; ``uv`` is NaN where depth <= MIN_DEPTH.
    """
    e = np.asarray(extrinsic, dtype=np.float64)
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    cam = p @ e[:3, :3].T + e[:3, 3]
    z = cam[:, 2]
    uv = np.full((p.shape[0], 2), np.nan)
    ok = z > MIN_DEPTH
    uv[ok, 0] = fx * cam[ok, 0] / z[ok] + cx
    uv[ok, 1] = fy * cam[ok, 1] / z[ok] + cy
    return uv, z


def out_of_view(fx, fy, cx, cy, width, height, extrinsic, points):
    """True if any point is behind the camera or lands outside [0,w)x[0,h)."""
    uv, z = project_points(fx, fy, cx, cy, extrinsic, points)
    if np.any(z <= MIN_DEPTH):
        return True
    u, v = uv[:, 0], uv[:, 1]
    return bool(np.any((u < 0) | (u >= width) | (v < 0) | (v >= height)))


def longest_stationary_span(times, positions, eps):
    """Duration of the longest run of consecutive sub-``eps`` displacements.

    A run covering inter-sample steps i..j spans ``times[j+1] - times[i]``.
    """
    t = np.asarray(times, dtype=np.float64)
    p = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    if t.shape[0] < 2:
        return 0.0
    still = np.linalg.norm(np.diff(p, axis=0), axis=1) < eps
    best = 0.0
    start = -1
    for i, s in enumerate(still):
        if s:
            if start < 0:
                start = i
            best = max(best, t[i + 1] - t[start])
        else:
            start = -1
    return float(best)


def transfer_orientations(r_src, frames_src, frames_tgt):
    """Batched two-sided conjugation: F_t (F_s^T R F_s) F_t^T for each triple."""
    r = np.asarray(r_src, dtype=np.float64).reshape(-1, 3, 3)
    fs = np.asarray(frames_src, dtype=np.float64).reshape(-1, 3, 3)
    ft = np.asarray(frames_tgt, dtype=np.float64).reshape(-1, 3, 3)
    skill = np.transpose(fs, (0, 2, 1)) @ r @ fs
    return ft @ skill @ np.transpose(ft, (0, 2, 1))
