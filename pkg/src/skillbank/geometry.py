"""SE(3) poses, pinhole projection, local frames and orientation transfer.

Rotations are plain 3x3 float64 arrays. Quaternions (w, x, y, z) only appear
at the serialization boundary, in :class:`TrajectorySE3`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation as _R

from . import _kernels
from .errors import BehindCamera, InvalidDepth, ZeroLengthSegment

WORLD_UP = (0.0, 0.0, 1.0)
FALLBACK_REF = (1.0, 0.0, 0.0)
DEFAULT_DIRECTION = (1.0, 0.0, 0.0)

SEGMENT_EPS = 1e-9
PARALLEL_EPS = 1e-6
ROTATION_TOL = 1e-9
MIN_DEPTH = _kernels._pykernels.MIN_DEPTH


def as_vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"non-finite vector {a}")
    return a


def normalize(v) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(a)
    if n == 0:
        raise ValueError("cannot normalize a zero vector")
    return a / n


def is_rotation(m, tol: float = ROTATION_TOL) -> bool:
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (3, 3) or not np.all(np.isfinite(m)):
        return False
    ortho = np.max(np.abs(m.T @ m - np.eye(3)))
    return bool(ortho < tol and abs(np.linalg.det(m) - 1.0) < tol)


def as_rotation(m, tol: float = ROTATION_TOL) -> np.ndarray:
    r = np.asarray(m, dtype=np.float64).reshape(3, 3)
    if not is_rotation(r, tol):
        raise ValueError("matrix is not a proper rotation")
    return r


def rot_z(degrees: float) -> np.ndarray:
    return _R.from_euler("z", degrees, degrees=True).as_matrix()


def quat_to_matrix(q) -> np.ndarray:
    """(w, x, y, z) quaternion(s) to rotation matrix/matrices."""
    return _R.from_quat(np.asarray(q, dtype=np.float64), scalar_first=True).as_matrix()


def matrix_to_quat(m) -> np.ndarray:
    """Rotation matrix/matrices to (w, x, y, z) with w >= 0."""
    q = _R.from_matrix(np.asarray(m, dtype=np.float64)).as_quat(scalar_first=True)
    q = np.atleast_2d(q)
    q[q[:, 0] < 0] *= -1.0
    return q if np.ndim(m) == 3 else q[0]


@dataclass(frozen=True)
class Pose6D:
    position: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", as_vec3(self.position))
        object.__setattr__(self, "orientation", as_rotation(self.orientation))

    def to_dict(self) -> dict:
        return {
            "position": [float(x) for x in self.position],
            "rotation": [float(x) for x in self.orientation.reshape(9)],
        }


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera; ``extrinsic`` maps world points into the camera frame."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    extrinsic: np.ndarray = field(default_factory=lambda: np.eye(4))

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        e = np.asarray(self.extrinsic, dtype=np.float64).reshape(4, 4)
        as_rotation(e[:3, :3])
        object.__setattr__(self, "extrinsic", e)

    @property
    def rotation(self) -> np.ndarray:
        return self.extrinsic[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.extrinsic[:3, 3]

    def to_dict(self) -> dict:
        return {
            "fx": float(self.fx),
            "fy": float(self.fy),
            "cx": float(self.cx),
            "cy": float(self.cy),
            "width": int(self.width),
            "height": int(self.height),
            "extrinsic": [float(x) for x in self.extrinsic.reshape(16)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraModel":
        return cls(
            fx=float(d["fx"]),
            fy=float(d["fy"]),
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            width=int(d["width"]),
            height=int(d["height"]),
            extrinsic=np.asarray(d.get("extrinsic", np.eye(4).reshape(16)), dtype=np.float64).reshape(4, 4),
        )

    def __eq__(self, other):
        if not isinstance(other, CameraModel):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    __hash__ = None


@dataclass(frozen=True, eq=False)
class TrajectorySE3:
    """Timestamped poses, stored as arrays.

    ``quats`` keeps the (w, x, y, z) values exactly as read so that a
    load/save cycle does not perturb them; ``rotations`` is derived.
    """

    times: np.ndarray
    positions: np.ndarray
    quats: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64).reshape(-1)
        p = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        q = np.asarray(self.quats, dtype=np.float64).reshape(-1, 4)
        if not (len(t) == len(p) == len(q)) or len(t) < 1:
            raise ValueError("trajectory needs >= 1 sample with matching lengths")
        if np.any(np.diff(t) <= 0):
            raise ValueError("trajectory timestamps must be strictly increasing")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q))):
            raise ValueError("trajectory contains non-finite values")
        if np.any(np.abs(np.linalg.norm(q, axis=1) - 1.0) > 1e-6):
            raise ValueError("trajectory quaternions must be unit-norm")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "quats", q)

    def __len__(self):
        return len(self.times)

    @property
    def rotations(self) -> np.ndarray:
        return quat_to_matrix(self.quats).reshape(-1, 3, 3)

    @property
    def poses(self) -> list[Pose6D]:
        return [Pose6D(p, r) for p, r in zip(self.positions, self.rotations)]

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    @classmethod
    def from_rows(cls, rows) -> "TrajectorySE3":
        a = np.asarray(rows, dtype=np.float64)
        if a.ndim != 2 or a.shape[1] != 8:
            raise ValueError("trajectory rows must be [t, x, y, z, qw, qx, qy, qz]")
        return cls(a[:, 0], a[:, 1:4], a[:, 4:8])

    @classmethod
    def from_poses(cls, times, poses) -> "TrajectorySE3":
        pos = np.array([p.position for p in poses])
        quats = matrix_to_quat(np.array([p.orientation for p in poses]))
        return cls(times, pos, quats)

    def to_rows(self) -> list[list[float]]:
        a = np.column_stack([self.times, self.positions, self.quats])
        return [[float(x) for x in row] for row in a]

    def crop(self, t0: float, t1: float) -> tuple["TrajectorySE3 | None", slice]:
        """Samples with t0 <= t <= t1 (a contiguous range) or None if empty."""
        lo = int(np.searchsorted(self.times, t0, side="left"))
        hi = int(np.searchsorted(self.times, t1, side="right"))
        if hi <= lo:
            return None, slice(lo, lo)
        return TrajectorySE3(self.times[lo:hi], self.positions[lo:hi], self.quats[lo:hi]), slice(lo, hi)

    def __eq__(self, other):
        if not isinstance(other, TrajectorySE3):
            return NotImplemented
        return (
            np.array_equal(self.times, other.times)
            and np.array_equal(self.positions, other.positions)
            and np.array_equal(self.quats, other.quats)
        )

    __hash__ = None


# -- local frames and orientation transfer -----------------------------------


def _segment_direction(a, b) -> np.ndarray:
    d = np.asarray(b, dtype=np.float64) - np.asarray(a, dtype=np.float64)
    n = np.linalg.norm(d)
    if n < SEGMENT_EPS:
        raise ZeroLengthSegment(f"coincident waypoints {tuple(a)} / {tuple(b)}")
    return d / n


def build_local_frame(waypoints, index: int, up=WORLD_UP, fallback=FALLBACK_REF) -> np.ndarray:
    """Orthonormal frame at ``waypoints[index]`` with x along the motion.

    Columns are [x, y, z]: x is the direction to the next waypoint (previous
    segment at the last index, ``DEFAULT_DIRECTION`` for a single point), z is
    ``up`` made orthogonal to x (``fallback`` when up is nearly parallel to
    the motion), and y = z cross x.
    """
    pts = np.asarray(waypoints, dtype=np.float64).reshape(-1, 3)
    n = len(pts)
    if n < 1 or not 0 <= index < n:
        raise IndexError(f"index {index} out of range for {n} waypoints")
    up = normalize(as_vec3(up))
    fallback = normalize(as_vec3(fallback))
    if abs(up @ fallback) > 1 - PARALLEL_EPS:
        raise ValueError("up and fallback references must not be parallel")

    if n == 1:
        x = np.array(DEFAULT_DIRECTION)
    elif index < n - 1:
        x = _segment_direction(pts[index], pts[index + 1])
    else:
        x = _segment_direction(pts[index - 1], pts[index])

    ref = fallback if abs(up @ x) > 1 - PARALLEL_EPS else up
    z = normalize(ref - (ref @ x) * x)
    y = np.cross(z, x)
    return np.column_stack([x, y, z])


def transfer_orientation(r_src, frame_src, frame_tgt) -> np.ndarray:
    """Carry a rotation from a source local frame into a target local frame.

    R_skill = Fs^T R_src Fs, then R_tgt = Ft R_skill Ft^T.
    """
    r = np.asarray(r_src, dtype=np.float64)
    fs = np.asarray(frame_src, dtype=np.float64)
    ft = np.asarray(frame_tgt, dtype=np.float64)
    r_skill = fs.T @ r @ fs
    return ft @ r_skill @ ft.T


def sample_orientation_indices(source_len: int, n: int) -> list[int]:
    """``n`` evenly spaced indices into a length-``source_len`` sequence.

    Index j is round(j (L-1) / (n-1)) with halves rounded up; computed in
    integers so the endpoints are exact.
    """
    if source_len < 1 or n < 1:
        raise ValueError("source_len and n must be >= 1")
    if n == 1:
        return [0]
    span = source_len - 1
    den = n - 1
    return [(2 * j * span + den) // (2 * den) for j in range(n)]


def _collapse_runs(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Merge consecutive coincident points; return (unique, index map)."""
    keep = [0]
    mapping = np.zeros(len(points), dtype=int)
    for i in range(1, len(points)):
        if np.linalg.norm(points[i] - points[keep[-1]]) < SEGMENT_EPS:
            mapping[i] = len(keep) - 1
        else:
            keep.append(i)
            mapping[i] = len(keep) - 1
    return points[keep], mapping


def local_frames(points, up=WORLD_UP, fallback=FALLBACK_REF) -> np.ndarray:
    """Frame at every point; runs of coincident points share one frame."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    uniq, mapping = _collapse_runs(pts)
    frames = np.array([build_local_frame(uniq, i, up, fallback) for i in range(len(uniq))])
    return frames[mapping]


def attach_orientations(waypoints3d, source: TrajectorySE3, up=WORLD_UP, fallback=FALLBACK_REF) -> list[Pose6D]:
    """Pair each 3D waypoint with an orientation transferred from ``source``."""
    pts = np.asarray(waypoints3d, dtype=np.float64).reshape(-1, 3)
    if len(pts) < 1:
        raise ValueError("need at least one waypoint")
    idx = sample_orientation_indices(len(source), len(pts))
    frames_src = local_frames(source.positions, up, fallback)[idx]
    frames_tgt = local_frames(pts, up, fallback)
    r_src = source.rotations[idx]
    rotations = _kernels.transfer_orientations(r_src, frames_src, frames_tgt)
    return [Pose6D(p, r) for p, r in zip(pts, rotations)]


# -- pinhole camera ----------------------------------------------------------


def project_point(camera: CameraModel, world_point) -> tuple[float, float]:
    p = as_vec3(world_point)
    X, Y, Z = camera.rotation @ p + camera.translation
    if Z <= MIN_DEPTH:
        raise BehindCamera(f"point {tuple(p)} has camera depth {Z:.6g}")
    return float(camera.fx * X / Z + camera.cx), float(camera.fy * Y / Z + camera.cy)


def project_points(camera: CameraModel, points) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised projection; returns (uv, depth) with NaN uv behind the camera."""
    return _kernels.project_points(camera.fx, camera.fy, camera.cx, camera.cy, camera.extrinsic, points)


def lift_pixel(camera: CameraModel, pixel, depth: float) -> np.ndarray:
    d = float(depth)
    if not np.isfinite(d) or d <= 0:
        raise InvalidDepth(f"depth {depth!r} at pixel {tuple(pixel)}")
    u, v = float(pixel[0]), float(pixel[1])
    cam = np.array([(u - camera.cx) * d / camera.fx, (v - camera.cy) * d / camera.fy, d])
    return camera.rotation.T @ (cam - camera.translation)
