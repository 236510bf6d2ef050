"""Synthetic evolving cities: box buildings on a flat ground square.

Maps are sampled surfaces (stratified, one seeded stream per face, so a
building's points do not depend on which stage it is rendered in).  Scans
are ray cast analytically against the same geometry with an ideal,
noise-free sensor.  ``brute_tcr`` is a slow, independent change-ratio
implementation used as a test oracle.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from .pointcloud import PointCloud, Pose, Trajectory, yaw_quat
from .hull import CONTAIN_TOL
from .tcr import HULL_RESTRICTED, DegenerateHull, TcrParams, TcrReport, make_report, preprocess


@dataclass(frozen=True)
class BuildingSpec:
    center: tuple
    width: float
    depth: float
    height: float
    stages: tuple = (1, 1)

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "stages", tuple(int(v) for v in self.stages))
        if len(self.center) != 2:
            raise ValueError("building center must be (x, y)")
        if min(self.width, self.depth, self.height) <= 0:
            raise ValueError("building dimensions must be positive")
        if len(self.stages) != 2 or self.stages[0] > self.stages[1]:
            raise ValueError(f"invalid stage interval {self.stages}")

    def exists_at(self, stage: int) -> bool:
        return self.stages[0] <= stage <= self.stages[1]

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        cx, cy = self.center
        lo = np.array([cx - self.width / 2, cy - self.depth / 2, 0.0])
        hi = np.array([cx + self.width / 2, cy + self.depth / 2, self.height])
        return lo, hi

    def faces(self):
        """(corner, u, v) for the four walls and the roof."""
        lo, hi = self.bounds
        w, d, h = hi - lo
        x0, y0, _ = lo
        x1, y1, _ = hi
        ex, ey, ez = np.eye(3)
        return [
            (np.array([x0, y0, 0.0]), ex * w, ez * h),
            (np.array([x0, y1, 0.0]), ex * w, ez * h),
            (np.array([x0, y0, 0.0]), ey * d, ez * h),
            (np.array([x1, y0, 0.0]), ey * d, ez * h),
            (np.array([x0, y0, h]), ex * w, ey * d),
        ]


@dataclass(frozen=True)
class SceneSpec:
    """``ground_extent`` is the half side of the ground square centred on the origin."""

    buildings: tuple = ()
    ground_extent: float = 100.0
    density: float = 0.5
    seed: int = 0
    name: str = "scene"
    n_stages: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "buildings", tuple(self.buildings))
        if not self.density > 0:
            raise ValueError("density must be positive")
        if not self.ground_extent > 0:
            raise ValueError("ground_extent must be positive")
        if self.n_stages is None:
            last = max((b.stages[1] for b in self.buildings), default=1)
            object.__setattr__(self, "n_stages", last)

    @property
    def stages(self) -> range:
        return range(1, self.n_stages + 1)

    def check_stage(self, stage: int) -> None:
        if stage not in self.stages:
            raise ValueError(f"stage {stage} outside 1..{self.n_stages}")

    def buildings_at(self, stage: int) -> list[BuildingSpec]:
        return [b for b in self.buildings if b.exists_at(stage)]


@dataclass(frozen=True)
class LidarSpec:
    """``vertical_fov`` is the half-angle in degrees (beams span ±vertical_fov)."""

    channels: int = 32
    vertical_fov: float = 22.5
    max_range: float = 120.0
    horizontal_resolution: float = 0.35
    rate: float = 20.0

    def __post_init__(self):
        if self.channels < 1:
            raise ValueError("channels must be >= 1")
        if not self.max_range > 0:
            raise ValueError("max_range must be positive")
        if not self.horizontal_resolution > 0:
            raise ValueError("horizontal_resolution must be positive")

    def elevations(self) -> np.ndarray:
        if self.channels == 1:
            return np.zeros(1)
        return np.radians(np.linspace(-self.vertical_fov, self.vertical_fov, self.channels))

    def azimuths(self) -> np.ndarray:
        cols = max(1, int(round(360.0 / self.horizontal_resolution)))
        return np.arange(cols) * (2 * np.pi / cols)

    def ray_directions(self) -> np.ndarray:
        el, az = np.meshgrid(self.elevations(), self.azimuths(), indexing="ij")
        ce = np.cos(el)
        return np.stack([ce * np.cos(az), ce * np.sin(az), np.sin(el)], axis=-1).reshape(-1, 3)


# --------------------------------------------------------------------------
# maps

def face_point_count(area: float, density: float) -> int:
    return int(round(area * density))


def _sample_face(corner, u, v, density, rng) -> np.ndarray:
    lu, lv = np.linalg.norm(u), np.linalg.norm(v)
    n = face_point_count(lu * lv, density)
    if n == 0:
        return np.zeros((0, 3))
    nu = max(1, int(round(np.sqrt(n * lu / lv))))
    nv = -(-n // nu)
    iu, iv = np.meshgrid(np.arange(nu), np.arange(nv), indexing="ij")
    cells = np.stack([iu.ravel(), iv.ravel()], axis=1)
    cells = cells[rng.permutation(len(cells))[:n]]
    jitter = rng.random((n, 2))
    s = (cells[:, 0] + jitter[:, 0]) / nu
    t = (cells[:, 1] + jitter[:, 1]) / nv
    return corner + s[:, None] * u + t[:, None] * v


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *stream]))


def ground_points(spec: SceneSpec) -> np.ndarray:
    e = spec.ground_extent
    return _sample_face(np.array([-e, -e, 0.0]), np.array([2 * e, 0, 0.0]),
                        np.array([0, 2 * e, 0.0]), spec.density, _rng(spec.seed, 0))


def building_points(spec: SceneSpec, index: int) -> np.ndarray:
    b = spec.buildings[index]
    parts = [_sample_face(c, u, v, spec.density, _rng(spec.seed, 1 + index, k))
             for k, (c, u, v) in enumerate(b.faces())]
    return np.concatenate(parts)


def expected_map_size(spec: SceneSpec, stage: int) -> int:
    e = spec.ground_extent
    total = face_point_count(4 * e * e, spec.density)
    for b in spec.buildings_at(stage):
        for _, u, v in b.faces():
            total += face_point_count(np.linalg.norm(u) * np.linalg.norm(v), spec.density)
    return total


def build_map(spec: SceneSpec, stage: int) -> PointCloud:
    spec.check_stage(stage)
    parts = [ground_points(spec)]
    parts += [building_points(spec, i) for i, b in enumerate(spec.buildings) if b.exists_at(stage)]
    return PointCloud(np.concatenate(parts))


# --------------------------------------------------------------------------
# ray casting

def _ray_box(origin, dirs, lo, hi) -> np.ndarray:
    """Entry distance of each ray into the box, inf on a miss."""
    tmin = np.full(len(dirs), -np.inf)
    tmax = np.full(len(dirs), np.inf)
    for a in range(3):
        d = dirs[:, a]
        par = d == 0
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (lo[a] - origin[a]) / d
            t2 = (hi[a] - origin[a]) / d
        near = np.where(par, -np.inf, np.minimum(t1, t2))
        far = np.where(par, np.inf, np.maximum(t1, t2))
        if lo[a] <= origin[a] <= hi[a]:
            pass
        else:
            far = np.where(par, -np.inf, far)
        tmin = np.maximum(tmin, near)
        tmax = np.minimum(tmax, far)
    hit = (tmin <= tmax) & (tmin > 0)
    return np.where(hit, tmin, np.inf)


def cast_rays(spec: SceneSpec, stage: int, origin, dirs: np.ndarray) -> np.ndarray:
    """Distance to the first surface along each unit world-frame ray (inf on a miss)."""
    origin = np.asarray(origin, dtype=np.float64)
    best = np.full(len(dirs), np.inf)
    down = dirs[:, 2] < 0
    if origin[2] > 0:
        with np.errstate(divide="ignore", invalid="ignore"):
            tg = np.where(down, -origin[2] / dirs[:, 2], np.inf)
            hx = origin[0] + tg * dirs[:, 0]
            hy = origin[1] + tg * dirs[:, 1]
        e = spec.ground_extent
        inside = down & (np.abs(hx) <= e) & (np.abs(hy) <= e)
        best = np.where(inside, tg, best)
    for b in spec.buildings_at(stage):
        lo, hi = b.bounds
        best = np.minimum(best, _ray_box(origin, dirs, lo, hi))
    return best


def simulate_scan(spec: SceneSpec, stage: int, pose: Pose,
                  lidar: LidarSpec = LidarSpec()) -> PointCloud:
    """Ideal scan in the sensor frame: one return per ray that hits within range."""
    spec.check_stage(stage)
    d_sensor = lidar.ray_directions()
    d_world = d_sensor @ pose.matrix.T
    t = cast_rays(spec, stage, pose.position, d_world)
    keep = t <= lidar.max_range
    return PointCloud(t[keep, None] * d_sensor[keep])


def gen_sequence(spec: SceneSpec, stage: int, traj: Trajectory,
                 lidar: LidarSpec = LidarSpec()) -> tuple[list[PointCloud], list[Pose]]:
    spec.check_stage(stage)
    poses = list(traj.poses)
    return [simulate_scan(spec, stage, p, lidar) for p in poses], poses


def surface_residual(spec: SceneSpec, stage: int, points: np.ndarray) -> np.ndarray:
    """Distance from each world point to the nearest scene surface patch."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    e = spec.ground_extent
    g = np.stack([np.clip(points[:, 0], -e, e), np.clip(points[:, 1], -e, e),
                  np.zeros(len(points))], axis=1)
    best = np.linalg.norm(points - g, axis=1)
    for b in spec.buildings_at(stage):
        for corner, u, v in b.faces():
            rel = points - corner
            su = np.clip(rel @ u / (u @ u), 0, 1)
            sv = np.clip(rel @ v / (v @ v), 0, 1)
            proj = corner + su[:, None] * u + sv[:, None] * v
            best = np.minimum(best, np.linalg.norm(points - proj, axis=1))
    return best


# --------------------------------------------------------------------------
# trajectories and random scenes

def trajectory_from_waypoints(waypoints, step: float = 1.0, height: float = 1.8,
                              speed: float = 10.0, t0: float = 0.0,
                              lateral_offset: float = 0.0) -> Trajectory:
    """Poses every ``step`` metres of arc length along a 2D polyline.

    Heading follows the local segment; ``lateral_offset`` shifts the route
    to the left of travel (a different lane of the same road).
    """
    wp = np.asarray(waypoints, dtype=np.float64).reshape(-1, 2)
    if len(wp) < 2:
        raise ValueError("need at least two waypoints")
    if not step > 0 or not speed > 0:
        raise ValueError("step and speed must be positive")
    seg = np.diff(wp, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    if np.any(seg_len == 0):
        raise ValueError("repeated waypoint")
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    s = np.arange(0.0, cum[-1] + 1e-9, step)
    k = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
    frac = (s - cum[k]) / seg_len[k]
    xy = wp[k] + frac[:, None] * seg[k]
    heading = seg[k] / seg_len[k][:, None]
    xy = xy + lateral_offset * np.stack([-heading[:, 1], heading[:, 0]], axis=1)
    yaw = np.arctan2(heading[:, 1], heading[:, 0])
    poses = [Pose(t0 + si / speed, (x, y, height), yaw_quat(a))
             for si, (x, y), a in zip(s, xy, yaw)]
    return Trajectory(poses)


def random_city(seed: int, n_buildings: int = 12, n_stages: int = 3,
                ground_extent: float = 60.0, density: float = 0.05,
                nested: bool = True, min_gap: float = 12.0,
                road_halfwidth: float = 0.0, anchors: bool = True) -> SceneSpec:
    """Random non-overlapping buildings with stage intervals.

    With ``nested=True`` every building, once built, stays until the last
    stage, so each stage contains all structures of the previous one.
    ``road_halfwidth`` keeps footprints clear of the band ``|y| <= road_halfwidth``.
    ``anchors`` adds four permanent corner towers taller than every other
    building, so all stages share one convex hull and the change ratio only
    sees the staged buildings.
    """
    rng = _rng(seed, 10_000)
    e = ground_extent
    buildings = []
    if anchors:
        for sx, sy in ((-1, -1), (1, -1), (-1, 1), (1, 1)):
            buildings.append(BuildingSpec((sx * (e - 3), sy * (e - 3)), 4, 4, 45, (1, n_stages)))
    n_buildings += len(buildings)
    for _ in range(5000):
        if len(buildings) == n_buildings:
            break
        w, d = rng.uniform(6, 18, size=2)
        h = rng.uniform(10, 40)
        cx = rng.uniform(-e + w / 2 + 2, e - w / 2 - 2)
        cy = rng.uniform(-e + d / 2 + 2, e - d / 2 - 2)
        if road_halfwidth and abs(cy) - d / 2 < road_halfwidth:
            continue
        if any(abs(cx - b.center[0]) < (w + b.width) / 2 + min_gap
               and abs(cy - b.center[1]) < (d + b.depth) / 2 + min_gap for b in buildings):
            continue
        first = int(rng.integers(1, n_stages + 1))
        last = n_stages if nested else int(rng.integers(first, n_stages + 1))
        buildings.append(BuildingSpec((cx, cy), w, d, h, (first, last)))
    return SceneSpec(tuple(buildings), ground_extent, density, seed,
                     f"city{seed}", n_stages)


# --------------------------------------------------------------------------
# brute-force change-ratio oracle

def brute_nn_dist(p: np.ndarray, cloud: np.ndarray) -> float:
    return float(np.sqrt(((cloud - p) ** 2).sum(axis=1)).min())


def lp_in_hull(p: np.ndarray, cloud: np.ndarray, tol: float) -> bool:
    """Whether ``p`` is a convex combination of the rows of ``cloud`` up to ``tol``.

    Solves min s subject to |sum(l_i x_i) - p| <= s componentwise,
    sum(l_i) = 1, l >= 0.
    """
    if np.any(np.all(cloud == p, axis=1)):
        return True
    lo, hi = cloud.min(axis=0), cloud.max(axis=0)
    if np.any(p < lo - tol) or np.any(p > hi + tol):
        return False
    n = len(cloud)
    c = np.zeros(n + 1)
    c[-1] = 1.0
    X = cloud.T
    A_ub = np.block([[X, -np.ones((3, 1))], [-X, -np.ones((3, 1))]])
    b_ub = np.concatenate([p, -p])
    A_eq = np.concatenate([np.ones(n), [0.0]])[None]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0],
                  bounds=[(0, None)] * (n + 1), method="highs")
    if res.status != 0:
        raise RuntimeError(f"hull-membership LP failed: {res.message}")
    return bool(res.fun <= tol)


def _hull_tol(cloud: np.ndarray) -> float:
    return CONTAIN_TOL * float(np.linalg.norm(cloud.max(axis=0) - cloud.min(axis=0)))


def _rank3(cloud: np.ndarray) -> bool:
    if len(cloud) < 4:
        return False
    diag = float(np.linalg.norm(cloud.max(axis=0) - cloud.min(axis=0)))
    sv = np.linalg.svd(cloud - cloud.mean(axis=0), compute_uv=False)
    return diag > 0 and sv[2] / np.sqrt(len(cloud)) > 1e-7 * diag


def brute_tcr(s: PointCloud, t: PointCloud, params: TcrParams = TcrParams(),
              source_id: str = "source", target_id: str = "target") -> TcrReport:
    """Slow reference for ``tcr_pair``: linear NN scans and LP hull membership."""
    S = preprocess(s, params).points
    T = preprocess(t, params).points
    if len(S) > 2000 or len(T) > 2000:
        raise ValueError("brute_tcr is limited to 2000 voxelized points per session")
    for name, c in (("source session", S), ("target session", T)):
        if not _rank3(c):
            raise DegenerateHull(f"{name}: points do not span three dimensions")
    tol_s, tol_t = _hull_tol(S), _hull_tol(T)
    h_st = [lp_in_hull(p, T, tol_t) for p in S]
    h_ts = [lp_in_hull(p, S, tol_s) for p in T]
    o_st = [brute_nn_dist(p, T) <= params.tau for p in S]
    o_ts = [brute_nn_dist(p, S) <= params.tau for p in T]
    if params.numerator_mode == HULL_RESTRICTED:
        o_st = [a and b for a, b in zip(o_st, h_st)]
        o_ts = [a and b for a, b in zip(o_ts, h_ts)]
    return make_report(sum(o_st), sum(o_ts), sum(h_st), sum(h_ts), params,
                       source_id, target_id, len(S), len(T))
