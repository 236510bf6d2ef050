"""Point clouds, poses and trajectories, plus their on-disk formats.

Binary clouds are KITTI-style: little-endian float32 records of
``x y z intensity``.  ASCII clouds hold one ``x y z [i]`` record per line
with ``#`` comments.  Pose files are TUM-style text, one
``t tx ty tz qx qy qz qw`` record per line.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

BINARY = "xyz-binary"
ASCII = "xyz-ascii"
FORMATS = (BINARY, ASCII)


class CloudFormatError(ValueError):
    """Malformed cloud or pose file; the message carries the offset."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray
    intensity: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, copy=True).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        object.__setattr__(self, "points", _frozen(pts))
        if self.intensity is not None:
            inten = np.array(self.intensity, dtype=np.float64, copy=True).reshape(-1)
            if len(inten) != len(pts):
                raise ValueError(
                    f"intensity length {len(inten)} != point count {len(pts)}")
            object.__setattr__(self, "intensity", _frozen(inten))

    def __len__(self) -> int:
        return len(self.points)

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.zeros((0, 3)))

    def subset(self, mask_or_index) -> "PointCloud":
        """Rows selected by a boolean mask or index array, order preserved."""
        inten = None if self.intensity is None else self.intensity[mask_or_index]
        return PointCloud(self.points[mask_or_index], inten)

    def equals(self, other: "PointCloud") -> bool:
        if not np.array_equal(self.points, other.points):
            return False
        if (self.intensity is None) != (other.intensity is None):
            return False
        return self.intensity is None or np.array_equal(self.intensity, other.intensity)


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def quat_multiply(a, b) -> np.ndarray:
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def yaw_quat(yaw: float) -> tuple:
    return (float(np.cos(yaw / 2)), 0.0, 0.0, float(np.sin(yaw / 2)))


@dataclass(frozen=True)
class Pose:
    """Rigid sensor-to-world transform; rotation is a (w, x, y, z) quaternion."""

    t: float = 0.0
    translation: tuple = (0.0, 0.0, 0.0)
    rotation: tuple = (1.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        tr = tuple(float(v) for v in self.translation)
        q = tuple(float(v) for v in self.rotation)
        if len(tr) != 3 or len(q) != 4:
            raise ValueError("pose needs a 3-vector translation and a 4-vector quaternion")
        if not np.isfinite(self.t) or not all(np.isfinite(tr + q)):
            raise ValueError("pose contains non-finite values")
        if abs(np.linalg.norm(q) - 1.0) > 1e-9:
            raise ValueError(f"rotation quaternion is not unit length: {q}")
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "translation", tr)
        object.__setattr__(self, "rotation", q)

    @property
    def matrix(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)

    @property
    def position(self) -> np.ndarray:
        return np.array(self.translation)

    def inverse(self) -> "Pose":
        w, x, y, z = self.rotation
        return Pose(self.t, tuple(-(self.matrix.T @ self.position)), (w, -x, -y, -z))

    def compose(self, other: "Pose") -> "Pose":
        """``self ∘ other``: apply ``other`` first, then ``self``."""
        q = quat_multiply(self.rotation, other.rotation)
        q = q / np.linalg.norm(q)
        tr = self.matrix @ other.position + self.position
        return Pose(other.t, tuple(tr), tuple(q))


@dataclass(frozen=True)
class Trajectory:
    poses: tuple = field(default_factory=tuple)

    def __post_init__(self):
        poses = tuple(self.poses)
        if not poses:
            raise ValueError("trajectory must contain at least one pose")
        ts = np.array([p.t for p in poses])
        if np.any(np.diff(ts) <= 0):
            raise ValueError("trajectory timestamps must be strictly increasing")
        object.__setattr__(self, "poses", poses)

    def __len__(self) -> int:
        return len(self.poses)

    def __getitem__(self, i) -> Pose:
        return self.poses[i]

    @property
    def positions(self) -> np.ndarray:
        return np.array([p.translation for p in self.poses]).reshape(-1, 3)


# --------------------------------------------------------------------------
# file formats

def load_cloud(path, format: str = BINARY) -> PointCloud:
    path = Path(path)
    if format == BINARY:
        raw = path.read_bytes()
        if len(raw) % 16:
            whole = len(raw) - len(raw) % 16
            raise CloudFormatError(
                f"{path}: truncated record at byte offset {whole} "
                f"(file size {len(raw)} is not a multiple of 16)")
        data = np.frombuffer(raw, dtype="<f4").reshape(-1, 4)
        bad = ~np.isfinite(data[:, :3]).all(axis=1)
        if bad.any():
            i = int(np.argmax(bad))
            raise CloudFormatError(f"{path}: non-finite coordinate at byte offset {16 * i}")
        return PointCloud(data[:, :3].astype(np.float64), data[:, 3].astype(np.float64))
    if format == ASCII:
        rows, inten = [], []
        has_i = None
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                parts = line.split()
                try:
                    vals = [float(v) for v in parts]
                except ValueError:
                    raise CloudFormatError(f"{path}:{lineno}: non-numeric field in {line!r}") from None
                if len(vals) not in (3, 4):
                    raise CloudFormatError(f"{path}:{lineno}: expected 3 or 4 fields, got {len(vals)}")
                if has_i is None:
                    has_i = len(vals) == 4
                elif has_i != (len(vals) == 4):
                    raise CloudFormatError(f"{path}:{lineno}: inconsistent field count")
                if not all(np.isfinite(vals[:3])):
                    raise CloudFormatError(f"{path}:{lineno}: non-finite coordinate")
                rows.append(vals[:3])
                if has_i:
                    inten.append(vals[3])
        pts = np.array(rows, dtype=np.float64).reshape(-1, 3)
        return PointCloud(pts, np.array(inten) if has_i else None)
    raise ValueError(f"unknown cloud format {format!r}; expected one of {FORMATS}")


def save_cloud(cloud: PointCloud, path, format: str = BINARY) -> None:
    path = Path(path)
    inten = cloud.intensity if cloud.intensity is not None else np.zeros(len(cloud))
    if format == BINARY:
        data = np.empty((len(cloud), 4), dtype="<f4")
        data[:, :3] = cloud.points
        data[:, 3] = inten
        path.write_bytes(data.tobytes())
    elif format == ASCII:
        with open(path, "w") as fh:
            for p, i in zip(cloud.points, inten):
                if cloud.intensity is None:
                    fh.write(f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g}\n")
                else:
                    fh.write(f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g} {i:.9g}\n")
    else:
        raise ValueError(f"unknown cloud format {format!r}; expected one of {FORMATS}")


def load_poses(path) -> Trajectory:
    poses = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 8:
                raise CloudFormatError(f"{path}:{lineno}: expected 8 fields, got {len(parts)}")
            try:
                t, tx, ty, tz, qx, qy, qz, qw = (float(v) for v in parts)
                poses.append(Pose(t, (tx, ty, tz), (qw, qx, qy, qz)))
            except ValueError as e:
                raise CloudFormatError(f"{path}:{lineno}: {e}") from None
    try:
        return Trajectory(poses)
    except ValueError as e:
        raise CloudFormatError(f"{path}: {e}") from None


def save_poses(traj: Trajectory | Sequence[Pose], path) -> None:
    with open(path, "w") as fh:
        for p in traj.poses if isinstance(traj, Trajectory) else traj:
            w, x, y, z = p.rotation
            tx, ty, tz = p.translation
            fh.write(f"{p.t!r} {tx!r} {ty!r} {tz!r} {x!r} {y!r} {z!r} {w!r}\n")


# --------------------------------------------------------------------------
# geometry

def crop_range(cloud: PointCloud, max_range: float, box: bool = False) -> PointCloud:
    """Keep points within ``max_range`` of the origin.

    The default is a radial ball; ``box=True`` keeps points whose every
    coordinate lies in ``[-max_range, max_range]``.
    """
    if max_range <= 0:
        raise ValueError("max_range must be positive")
    if box:
        mask = np.all(np.abs(cloud.points) <= max_range, axis=1)
    else:
        mask = np.einsum("ij,ij->i", cloud.points, cloud.points) <= max_range * max_range
    return cloud.subset(mask)


def transform_cloud(cloud: PointCloud, pose: Pose) -> PointCloud:
    pts = cloud.points @ pose.matrix.T + pose.position
    return PointCloud(pts, cloud.intensity)


def aggregate_map(scans: Sequence[PointCloud], poses: Sequence[Pose],
                  window: Optional[int] = None) -> list[PointCloud]:
    """World-frame concatenation of consecutive scans, ``window`` at a time.

    ``window=None`` merges every scan into a single session map.  The last
    window may be shorter than ``window``.
    """
    if len(scans) != len(poses):
        raise ValueError(f"{len(scans)} scans but {len(poses)} poses")
    if window is None:
        window = max(len(scans), 1)
    if window < 1:
        raise ValueError("window must be >= 1")
    out = []
    for start in range(0, len(scans), window):
        parts = [transform_cloud(s, p) for s, p in
                 zip(scans[start:start + window], poses[start:start + window])]
        out.append(concat_clouds(parts))
    return out


def concat_clouds(clouds: Sequence[PointCloud]) -> PointCloud:
    if not clouds:
        return PointCloud.empty()
    pts = np.concatenate([c.points for c in clouds])
    if all(c.intensity is not None for c in clouds):
        return PointCloud(pts, np.concatenate([c.intensity for c in clouds]))
    return PointCloud(pts)
