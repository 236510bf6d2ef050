"""Exact nearest-neighbour queries and deterministic voxel downsampling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .pointcloud import PointCloud


class KdIndex:
    """Read-only k-d tree over a cloud's points (exact queries only)."""

    def __init__(self, cloud: PointCloud, workers: int = 1):
        if len(cloud) == 0:
            raise ValueError("cannot index an empty cloud")
        self._pts = cloud.points
        self._tree = cKDTree(cloud.points, leafsize=16, balanced_tree=True, compact_nodes=True)
        self.workers = workers

    def __len__(self) -> int:
        return len(self._pts)

    @property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return self._pts.min(axis=0), self._pts.max(axis=0)

    def nn_dist(self, q) -> float:
        d, _ = self._tree.query(np.asarray(q, dtype=np.float64), k=1)
        return float(d)

    def nn_dists(self, queries: np.ndarray) -> np.ndarray:
        queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        if len(queries) == 0:
            return np.zeros(0)
        d, _ = self._tree.query(queries, k=1, workers=self.workers)
        return d


def build_index(cloud: PointCloud, workers: int = 1) -> KdIndex:
    return KdIndex(cloud, workers=workers)


def nn_dist(index: KdIndex, q) -> float:
    return index.nn_dist(q)


@dataclass(frozen=True)
class VoxelParams:
    resolution: float = 5.0
    origin: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not self.resolution > 0:
            raise ValueError("voxel resolution must be positive")
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))


def voxel_ids(points: np.ndarray, params: VoxelParams) -> np.ndarray:
    return np.floor((points - np.asarray(params.origin)) / params.resolution).astype(np.int64)


def voxel_downsample(cloud: PointCloud, params: VoxelParams) -> PointCloud:
    """One centroid per occupied voxel, in lexicographic voxel-id order.

    Points are sorted by (voxel id, x, y, z) before summation so the output
    is bitwise independent of input order.
    """
    if len(cloud) == 0:
        return PointCloud.empty()
    pts = cloud.points
    ids = voxel_ids(pts, params)
    keys = [pts[:, 2], pts[:, 1], pts[:, 0], ids[:, 2], ids[:, 1], ids[:, 0]]
    if cloud.intensity is not None:
        keys.insert(0, cloud.intensity)
    order = np.lexsort(keys)
    ids = ids[order]
    pts = pts[order]
    new = np.ones(len(ids), dtype=bool)
    new[1:] = np.any(ids[1:] != ids[:-1], axis=1)
    starts = np.flatnonzero(new)
    counts = np.diff(np.append(starts, len(ids)))
    sums = np.add.reduceat(pts, starts, axis=0)
    cent = sums / counts[:, None]
    # rounding can push a centroid a hair past its cell; clamp to the closed cube
    lo = np.asarray(params.origin) + ids[starts] * params.resolution
    cent = np.clip(cent, lo, lo + params.resolution)
    inten = None
    if cloud.intensity is not None:
        inten = np.add.reduceat(cloud.intensity[order], starts) / counts
    return PointCloud(cent, inten)
