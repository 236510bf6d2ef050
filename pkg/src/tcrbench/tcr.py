"""Temporal change ratio between two map sessions, in both directions and
the order-independent symmetric form.

Pipeline for a pair (S, T): optional range crop, voxel downsampling on a
shared grid, convex hull of each voxelized cloud, hull-restricted sets
``h_st`` (points of S inside hull(T)) and ``h_ts``, then unchanged sets
``o_st`` (points of S within ``tau`` of T) and ``o_ts``.  The pooled ratio
treats the two directions as a disjoint union, so cardinalities add.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .hull import ConvexHull3, DegenerateInput, quickhull
from .pointcloud import PointCloud, crop_range
from .spatial import KdIndex, VoxelParams, voxel_downsample

HULL_RESTRICTED = "hull-restricted"
LITERAL = "literal"


class TcrError(Exception):
    code = "tcr_error"


class DegenerateHull(TcrError):
    code = "degenerate_hull"


class EmptyDomain(TcrError):
    code = "empty_domain"


@dataclass(frozen=True)
class TcrParams:
    tau: float = 4.5
    voxel_resolution: float = 5.0
    crop_range: Optional[float] = None
    numerator_mode: str = HULL_RESTRICTED
    voxel_origin: tuple = (0.0, 0.0, 0.0)
    crop_box: bool = False

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not self.voxel_resolution > 0:
            raise ValueError("voxel_resolution must be positive")
        if self.crop_range is not None and not self.crop_range > 0:
            raise ValueError("crop_range must be positive")
        if self.numerator_mode not in (HULL_RESTRICTED, LITERAL):
            raise ValueError(f"unknown numerator_mode {self.numerator_mode!r}")
        object.__setattr__(self, "voxel_origin", tuple(float(v) for v in self.voxel_origin))

    @property
    def voxel(self) -> VoxelParams:
        return VoxelParams(self.voxel_resolution, self.voxel_origin)


@dataclass(frozen=True)
class ChangeSets:
    o_st: PointCloud
    o_ts: PointCloud
    h_st: PointCloud
    h_ts: PointCloud


@dataclass(frozen=True)
class TcrReport:
    n_o_st: int
    n_o_ts: int
    n_h_st: int
    n_h_ts: int
    tcr_forward: float
    tcr_backward: float
    tcr_sym: float
    params: TcrParams
    source_id: str = "source"
    target_id: str = "target"
    n_source: int = 0
    n_target: int = 0

    @property
    def counts(self) -> tuple[int, int, int, int]:
        return self.n_o_st, self.n_o_ts, self.n_h_st, self.n_h_ts

    def to_dict(self) -> dict:
        d = asdict(self)
        d["params"]["voxel_origin"] = list(self.params.voxel_origin)
        for k in ("tcr_forward", "tcr_backward", "tcr_sym"):
            if np.isnan(d[k]):
                d[k] = None
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False)

    @classmethod
    def from_dict(cls, d: dict) -> "TcrReport":
        d = dict(d)
        d["params"] = TcrParams(**d["params"])
        for k in ("tcr_forward", "tcr_backward", "tcr_sym"):
            if d[k] is None:
                d[k] = float("nan")
        return cls(**d)

    def csv_row(self, header: bool = False) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(CSV_FIELDS)
        w.writerow([
            self.source_id, self.target_id, self.n_source, self.n_target,
            self.n_o_st, self.n_o_ts, self.n_h_st, self.n_h_ts,
            repr(self.tcr_forward), repr(self.tcr_backward), repr(self.tcr_sym),
            self.params.tau, self.params.voxel_resolution,
            "" if self.params.crop_range is None else self.params.crop_range,
            self.params.numerator_mode,
        ])
        return buf.getvalue()


CSV_FIELDS = ["source_id", "target_id", "n_source", "n_target",
              "n_o_st", "n_o_ts", "n_h_st", "n_h_ts",
              "tcr_forward", "tcr_backward", "tcr_sym",
              "tau", "voxel_resolution", "crop_range", "numerator_mode"]


def overlap_mask(source: PointCloud, target_index: KdIndex, tau: float) -> np.ndarray:
    if not tau > 0:
        raise ValueError("tau must be positive")
    return target_index.nn_dists(source.points) <= tau


def overlap_set(source: PointCloud, target_index: KdIndex, tau: float) -> PointCloud:
    return source.subset(overlap_mask(source, target_index, tau))


def preprocess(cloud: PointCloud, params: TcrParams) -> PointCloud:
    if params.crop_range is not None:
        cloud = crop_range(cloud, params.crop_range, box=params.crop_box)
    return voxel_downsample(cloud, params.voxel)


def ratios(n_o_st: int, n_o_ts: int, n_h_st: int, n_h_ts: int) -> tuple[float, float, float]:
    """Forward, backward and symmetric ratios from the four set sizes.

    A direction with an empty hull domain gets NaN; the symmetric ratio
    needs only the pooled domain to be non-empty.
    """
    if n_h_st + n_h_ts == 0:
        raise EmptyDomain("sessions do not overlap spatially: both hull domains are empty")
    fwd = 1.0 - n_o_st / n_h_st if n_h_st else float("nan")
    bwd = 1.0 - n_o_ts / n_h_ts if n_h_ts else float("nan")
    sym = 1.0 - (n_o_st + n_o_ts) / (n_h_st + n_h_ts)
    return fwd, bwd, sym


@dataclass(frozen=True)
class PreparedSession:
    """A session after crop + voxelization, with its hull and NN index."""

    cloud: PointCloud
    hull: ConvexHull3
    index: KdIndex


def prepare(cloud: PointCloud, params: TcrParams, name: str = "session",
            workers: int = 1) -> PreparedSession:
    vox = preprocess(cloud, params)
    try:
        hull = quickhull(vox)
    except DegenerateInput as e:
        raise DegenerateHull(f"{name}: {e}") from None
    return PreparedSession(vox, hull, KdIndex(vox, workers))


def prepared_masks(s: PreparedSession, t: PreparedSession, params: TcrParams):
    in_h_st = t.hull.contains_many(s.cloud.points)
    in_h_ts = s.hull.contains_many(t.cloud.points)
    in_o_st = overlap_mask(s.cloud, t.index, params.tau)
    in_o_ts = overlap_mask(t.cloud, s.index, params.tau)
    if params.numerator_mode == HULL_RESTRICTED:
        in_o_st &= in_h_st
        in_o_ts &= in_h_ts
    return in_h_st, in_o_st, in_h_ts, in_o_ts


def change_masks(s: PointCloud, t: PointCloud, params: TcrParams, workers: int = 1):
    """Boolean masks over the voxelized S and T.

    Returns ``(s_vox, t_vox, in_h_st, in_o_st, in_h_ts, in_o_ts)``.
    """
    ps = prepare(s, params, "source session", workers)
    pt = prepare(t, params, "target session", workers)
    return (ps.cloud, pt.cloud) + prepared_masks(ps, pt, params)


def prepared_report(s: PreparedSession, t: PreparedSession, params: TcrParams,
                    source_id: str = "source", target_id: str = "target") -> TcrReport:
    h_st, o_st, h_ts, o_ts = prepared_masks(s, t, params)
    return make_report(int(o_st.sum()), int(o_ts.sum()), int(h_st.sum()), int(h_ts.sum()),
                       params, source_id, target_id, len(s.cloud), len(t.cloud))


def change_sets(s: PointCloud, t: PointCloud, params: TcrParams = TcrParams(),
                workers: int = 1) -> ChangeSets:
    s_vox, t_vox, h_st, o_st, h_ts, o_ts = change_masks(s, t, params, workers)
    return ChangeSets(s_vox.subset(o_st), t_vox.subset(o_ts),
                      s_vox.subset(h_st), t_vox.subset(h_ts))


def tcr_pair(s: PointCloud, t: PointCloud, params: TcrParams = TcrParams(),
             source_id: str = "source", target_id: str = "target",
             workers: int = 1) -> TcrReport:
    ps = prepare(s, params, "source session", workers)
    pt = prepare(t, params, "target session", workers)
    return prepared_report(ps, pt, params, source_id, target_id)


def make_report(n_o_st, n_o_ts, n_h_st, n_h_ts, params, source_id="source",
                target_id="target", n_source=0, n_target=0) -> TcrReport:
    fwd, bwd, sym = ratios(n_o_st, n_o_ts, n_h_st, n_h_ts)
    return TcrReport(n_o_st, n_o_ts, n_h_st, n_h_ts, fwd, bwd, sym, params,
                     source_id, target_id, n_source, n_target)


def change_labels(s: PointCloud, t: PointCloud, params: TcrParams = TcrParams(),
                  workers: int = 1):
    """Per-point labels for both voxelized sessions.

    0 = outside the shared domain, 1 = unchanged, 2 = changed.
    """
    s_vox, t_vox, h_st, o_st, h_ts, o_ts = change_masks(s, t, params, workers)

    def lab(h, o):
        out = np.zeros(len(h), dtype=np.int8)
        out[h] = 2
        out[o & h] = 1
        return out

    return (s_vox, lab(h_st, o_st)), (t_vox, lab(h_ts, o_ts))


def tcr_stage_matrix(sessions: Sequence[PointCloud], params: TcrParams = TcrParams(),
                     ids: Optional[Sequence[str]] = None, workers: int = 1):
    """Reports for every unordered pair ``i < j``, mirrored into a square matrix.

    Entry ``[j][i]`` is the same report object as ``[i][j]`` (its
    ``tcr_sym`` is order independent); diagonal entries are None.
    """
    n = len(sessions)
    if n < 2:
        raise ValueError("need at least two sessions")
    ids = list(ids) if ids is not None else [f"{i + 1:02d}" for i in range(n)]
    mat = [[None] * n for _ in range(n)]
    prepped = [prepare(c, params, f"session {ids[i]}", workers) for i, c in enumerate(sessions)]
    for i in range(n):
        for j in range(i + 1, n):
            rep = prepared_report(prepped[i], prepped[j], params, ids[i], ids[j])
            mat[i][j] = mat[j][i] = rep
    return mat
